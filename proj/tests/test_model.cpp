#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "mtps/data.hpp"
#include "mtps/model.hpp"
#include "testing_util.hpp"

using namespace mtps;
using mtps::testing::finite_difference_check;

namespace {

Tensor random_window(int t_len, int features, Rng& rng) {
    return uniform_random({t_len, features}, -1.5, 1.5, rng);
}

ModelConfig tiny_config() {
    // Full architecture at reduced width: keeps graph-level tests fast while
    // exercising every block.
    ModelConfig cfg;
    cfg.input_features = 9;
    cfg.conv1_filters = 8;
    cfg.conv2_filters = 16;
    cfg.attention_heads = 2;
    cfg.key_dim = 8;
    cfg.se_reduction = 4;
    return cfg;
}

}  // namespace

TEST_CASE("forward emits a probability triple") {
    MtpsParams params = MtpsParams::init(ModelConfig{}, 3);
    Rng rng(1);
    Tensor x = random_window(16, 63, rng);
    Rng drop(0);
    Tensor probs = forward_graph(params, x, false, drop);
    CHECK(probs.shape() == Shape{1, 3});
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        CHECK(probs.at(0, c) >= 0.0);
        sum += probs.at(0, c);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("zeroed head weights give the uniform distribution exactly") {
    MtpsParams params = MtpsParams::init(ModelConfig{}, 4);
    for (double& v : params.head.weight.mutable_data()) v = 0.0;
    for (double& v : params.head.bias.mutable_data()) v = 0.0;
    Rng rng(2), drop(0);
    Tensor probs = forward_graph(params, random_window(8, 63, rng), false, drop);
    for (int c = 0; c < 3; ++c) CHECK(probs.at(0, c) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("forward rejects wrong feature counts") {
    MtpsParams params = MtpsParams::init(ModelConfig{}, 5);
    Rng rng(3), drop(0);
    CHECK_THROWS_AS(forward_graph(params, random_window(8, 62, rng), false, drop), SchemaError);
}

TEST_CASE("argmax is invariant under a constant logit shift") {
    MtpsParams params = MtpsParams::init(ModelConfig{}, 6);
    Rng rng(4);
    Tensor x = random_window(12, 63, rng);
    Rng drop(0);
    Tensor before = forward_graph(params, x, false, drop);
    int argmax_before = 0;
    for (int c = 1; c < 3; ++c)
        if (before.at(0, c) > before.at(0, argmax_before)) argmax_before = c;

    for (double& v : params.head.bias.mutable_data()) v += 7.5;
    Rng drop2(0);
    Tensor after = forward_graph(params, x, false, drop2);
    int argmax_after = 0;
    for (int c = 1; c < 3; ++c)
        if (after.at(0, c) > after.at(0, argmax_after)) argmax_after = c;
    CHECK(argmax_before == argmax_after);
}

TEST_CASE("time order matters: shuffling timesteps changes conv features") {
    MtpsParams params = MtpsParams::init(ModelConfig{}, 7);
    Rng rng(5);
    Tensor x = random_window(16, 63, rng);
    std::vector<double> shuffled(x.data().begin(), x.data().end());
    // Swap two timestep rows.
    for (int c = 0; c < 63; ++c) std::swap(shuffled[0 * 63 + c], shuffled[8 * 63 + c]);
    Tensor y = Tensor::from({16, 63}, shuffled);
    Rng d1(0), d2(0);
    Tensor pa = forward_graph(params, x, false, d1);
    Tensor pb = forward_graph(params, y, false, d2);
    bool any_diff = false;
    for (int c = 0; c < 3; ++c)
        if (std::abs(pa.at(0, c) - pb.at(0, c)) > 1e-12) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("loss of a one-hot correct prediction is zero, uniform is ln 3") {
    Tensor hot = Tensor::from({1, 3}, {0, 1, 0});
    CHECK(batch_loss({hot}, {ClassLabel::ltp()}).value() == doctest::Approx(0.0).epsilon(1e-9));

    Tensor uniform = Tensor::from({1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    CHECK(batch_loss({uniform}, {ClassLabel::htp()}).value() ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("loss matches an independent scalar recomputation") {
    Rng rng(6);
    std::vector<Tensor> rows;
    std::vector<ClassLabel> labels;
    double expected = 0.0;
    const int n = 17;
    for (int i = 0; i < n; ++i) {
        Tensor logits = uniform_random({1, 3}, -2.0, 2.0, rng);
        Tensor probs = softmax(logits, -1);
        const int label = i % 3;
        rows.push_back(probs);
        labels.push_back(ClassLabel{label});
        expected += -std::log(std::max(probs.at(0, label), 1e-12));
    }
    expected /= n;
    CHECK(batch_loss(rows, labels).value() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("loss is non-negative and rejects empty batches") {
    CHECK_THROWS_AS(batch_loss({}, {}), UsageError);
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor probs = softmax(uniform_random({1, 3}, -3.0, 3.0, rng), -1);
        CHECK(batch_loss({probs}, {ClassLabel{rep % 3}}).value() >= 0.0);
    }
}

TEST_CASE("every parameter group receives gradient at init") {
    ModelConfig cfg = tiny_config();
    MtpsParams params = MtpsParams::init(cfg, 8);
    Rng rng(8), drop(0);
    Tensor x = random_window(10, cfg.input_features, rng);
    Tensor probs = forward_graph(params, x, true, drop);
    batch_loss({probs}, {ClassLabel::ntp()}).backward();
    for (const auto& [name, t] : params.named_tensors()) {
        REQUIRE(t.has_grad());
        double norm = 0.0;
        for (double g : t.grad()) norm += g * g;
        INFO(name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("composed model gradients match finite differences") {
    ModelConfig cfg = tiny_config();
    MtpsParams params = MtpsParams::init(cfg, 9);
    Rng rng(9);
    Tensor x = random_window(6, cfg.input_features, rng);
    auto loss = [&] {
        Rng drop(0);
        Tensor probs = forward_graph(params, x, false, drop);
        return batch_loss({probs}, {ClassLabel::ltp()});
    };
    for (const auto& [name, t] : params.named_tensors()) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < t.size(); i += std::max<size_t>(1, t.size() / 5)) idx.push_back(i);
        INFO(name);
        CHECK(finite_difference_check(loss, t, 1e-5, idx).max_rel_err < 1e-4);
        params.zero_grad();
    }
}

TEST_CASE("parameter accounting") {
    SUBCASE("dense head alone") {
        Rng rng(1);
        DenseHead head = make_dense_head(128, 3, rng);
        CHECK(head.weight.size() + head.bias.size() == 387);
    }
    SUBCASE("full model under the fused-projection convention") {
        MtpsParams params = MtpsParams::init(ModelConfig{}, 10);
        CHECK(params.parameter_count() == 172043);
        CHECK(std::abs(params.parameter_count() - 172235.0) / 172235.0 < 0.01);
    }
    SUBCASE("variant counts") {
        auto count = [](ModelVariant v) {
            ModelConfig cfg;
            cfg.variant = v;
            return MtpsParams::init(cfg, 0).parameter_count();
        };
        CHECK(count(ModelVariant::no_se) == 172043 - 2184);
        CHECK(count(ModelVariant::conv_only) < count(ModelVariant::full));
        CHECK(count(ModelVariant::no_residual_norm) == 172043 - 512);
        CHECK(count(ModelVariant::no_attention) == count(ModelVariant::conv_only) + 2184);
    }
}

TEST_CASE("flops scale structurally with sequence length") {
    MtpsParams params = MtpsParams::init(ModelConfig{}, 11);
    const Complexity c1 = count_complexity(params, 64);
    const Complexity c2 = count_complexity(params, 128);
    CHECK(c1.parameters == c2.parameters);
    // Quadratic attention: the per-timestep score cost doubles with T.
    CHECK(c2.attention_score_flops == 4 * c1.attention_score_flops);
    CHECK(c2.attention_score_flops / 128 == 2 * (c1.attention_score_flops / 64));
    CHECK(c2.flops > c1.flops);
    // At T=1 the whole forward touches each parameter once.
    const Complexity unit = count_complexity(params, 1);
    CHECK(unit.flops > 2 * 160000);
    CHECK(unit.flops < 2 * 180000);
}

TEST_CASE("checkpoint round-trip reproduces predictions bitwise") {
    const auto dir = std::filesystem::temp_directory_path() / "mtps_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.mtps";

    ModelConfig cfg = tiny_config();
    MtpsParams params = MtpsParams::init(cfg, 12);
    CheckpointExtras extras;
    extras.schema_hash = FeatureSchema::standard().hash();
    save_checkpoint(path, params, extras);

    LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.extras.schema_hash == extras.schema_hash);
    Rng rng(13);
    Tensor x = random_window(7, cfg.input_features, rng);
    Rng d1(0), d2(0);
    Tensor pa = forward_graph(params, x, false, d1);
    Tensor pb = forward_graph(loaded.params, x, false, d2);
    for (int c = 0; c < 3; ++c) CHECK(pa.at(0, c) == pb.at(0, c));

    SUBCASE("corrupt magic is rejected") {
        const auto bad = dir / "bad.mtps";
        std::filesystem::copy_file(path, bad,
                                   std::filesystem::copy_options::overwrite_existing);
        {
            std::ofstream f(bad, std::ios::binary | std::ios::in | std::ios::out);
            f.seekp(0);
            f.write("XXXX", 4);
        }
        CHECK_THROWS_AS(load_checkpoint(bad), IoError);
    }
    SUBCASE("truncated parameter block is rejected") {
        const auto cut = dir / "cut.mtps";
        std::ifstream src(path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(src)), {});
        std::ofstream dst(cut, std::ios::binary);
        dst.write(all.data(), static_cast<std::streamsize>(all.size() - 64));
        dst.close();
        CHECK_THROWS_AS(load_checkpoint(cut), IoError);
    }
}

TEST_CASE("state probabilities carry argmax and confidence") {
    StateProbabilities s = StateProbabilities::from_probs({0.2, 0.3, 0.5});
    CHECK(s.p_htp == 0.2);
    CHECK(s.p_ltp == 0.3);
    CHECK(s.p_ntp == 0.5);
    CHECK(s.argmax_class == ClassLabel::ntp());
    CHECK(s.confidence == 0.5);
    CHECK(std::string(s.argmax_class.name()) == "NTP");
}
