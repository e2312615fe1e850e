#include "mtps/model.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace mtps {

using nlohmann::json;

StateProbabilities StateProbabilities::from_probs(const std::array<double, 3>& probs) {
    StateProbabilities s;
    s.p_htp = probs[ClassLabel::kHtp];
    s.p_ltp = probs[ClassLabel::kLtp];
    s.p_ntp = probs[ClassLabel::kNtp];
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (probs[static_cast<size_t>(i)] > probs[static_cast<size_t>(best)]) best = i;
    s.argmax_class = ClassLabel{best};
    s.confidence = probs[static_cast<size_t>(best)];
    return s;
}

std::string variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::full: return "full";
        case ModelVariant::no_se: return "no_se";
        case ModelVariant::no_attention: return "no_attention";
        case ModelVariant::no_residual_norm: return "no_residual_norm";
        case ModelVariant::conv_only: return "conv_only";
    }
    return "full";
}

ModelVariant variant_from_name(const std::string& name) {
    if (name == "full") return ModelVariant::full;
    if (name == "no_se") return ModelVariant::no_se;
    if (name == "no_attention") return ModelVariant::no_attention;
    if (name == "no_residual_norm") return ModelVariant::no_residual_norm;
    if (name == "conv_only") return ModelVariant::conv_only;
    throw ConfigError("unknown model variant '" + name + "'");
}

MtpsParams MtpsParams::init(const ModelConfig& config, uint64_t seed) {
    Rng root(seed);
    MtpsParams p;
    p.config = config;
    Rng r1 = root.derive(1), r2 = root.derive(2), r3 = root.derive(3), r4 = root.derive(4),
        r5 = root.derive(5), r6 = root.derive(6);
    p.conv1 = make_conv1d(config.input_features, config.conv1_filters, config.kernel_width, r1);
    p.conv2 = make_conv1d(config.conv1_filters, config.conv2_filters, config.kernel_width, r2);
    const bool attention = config.variant != ModelVariant::no_attention &&
                           config.variant != ModelVariant::conv_only;
    const bool with_norm = config.variant != ModelVariant::no_residual_norm;
    if (attention) {
        p.mha1 = make_attention(config.conv2_filters, config.attention_heads, config.key_dim,
                                config.dropout, r3, with_norm);
        p.mha2 = make_attention(config.conv2_filters, config.attention_heads, config.key_dim,
                                config.dropout, r4, with_norm);
    }
    const bool use_se = config.variant != ModelVariant::no_se &&
                        config.variant != ModelVariant::conv_only;
    if (use_se) p.se = make_squeeze_excitation(config.conv2_filters, config.se_reduction, r5);
    p.head = make_dense_head(config.conv2_filters, config.classes, r6);
    return p;
}

std::vector<std::pair<std::string, Tensor>> MtpsParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("conv1.kernel", conv1.kernel);
    out.emplace_back("conv1.bias", conv1.bias);
    out.emplace_back("conv2.kernel", conv2.kernel);
    out.emplace_back("conv2.bias", conv2.bias);
    auto add_mha = [&out](const std::string& prefix, const MultiHeadAttentionBlock& b) {
        out.emplace_back(prefix + ".w_q", b.w_q);
        out.emplace_back(prefix + ".b_q", b.b_q);
        out.emplace_back(prefix + ".w_k", b.w_k);
        out.emplace_back(prefix + ".b_k", b.b_k);
        out.emplace_back(prefix + ".w_v", b.w_v);
        out.emplace_back(prefix + ".b_v", b.b_v);
        out.emplace_back(prefix + ".w_o", b.w_o);
        out.emplace_back(prefix + ".b_o", b.b_o);
        if (b.norm.gain.defined()) {
            out.emplace_back(prefix + ".norm.gain", b.norm.gain);
            out.emplace_back(prefix + ".norm.bias", b.norm.bias);
        }
    };
    if (mha1) add_mha("mha1", *mha1);
    if (mha2) add_mha("mha2", *mha2);
    if (se) {
        out.emplace_back("se.w1", se->w1);
        out.emplace_back("se.b1", se->b1);
        out.emplace_back("se.w2", se->w2);
        out.emplace_back("se.b2", se->b2);
    }
    out.emplace_back("head.weight", head.weight);
    out.emplace_back("head.bias", head.bias);
    return out;
}

std::vector<Tensor> MtpsParams::trainable() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_tensors()) out.push_back(t);
    return out;
}

long MtpsParams::parameter_count() const {
    long n = 0;
    for (const auto& t : trainable()) n += static_cast<long>(t.size());
    return n;
}

MtpsParams MtpsParams::clone() const {
    MtpsParams copy = MtpsParams::init(config, 0);
    auto src = named_tensors();
    auto dst = copy.named_tensors();
    for (size_t i = 0; i < src.size(); ++i) {
        auto d = dst[i].second.mutable_data();
        std::copy(src[i].second.data().begin(), src[i].second.data().end(), d.begin());
    }
    return copy;
}

void MtpsParams::zero_grad() const {
    for (auto t : trainable()) t.zero_grad();
}

Tensor forward_graph(const MtpsParams& params, const Tensor& x, bool training, Rng& rng) {
    const ModelConfig& cfg = params.config;
    if (x.ndim() != 2 || x.dim(1) != cfg.input_features)
        throw SchemaError("model input must be [T×" + std::to_string(cfg.input_features) +
                          "] features, got " + shape_str(x.shape()));
    if (x.dim(0) < 1) throw UsageError("model input has zero timesteps");

    Tensor h = transpose(x);  // [F×T] channel-major for convolution
    h = relu(conv1d(h, params.conv1.kernel, params.conv1.bias));
    h = relu(conv1d(h, params.conv2.kernel, params.conv2.bias));
    h = transpose(h);  // back to [T×C]

    const bool residual_norm = cfg.variant != ModelVariant::no_residual_norm;
    if (params.mha1) h = attention_forward(*params.mha1, h, training, rng, residual_norm);
    if (params.mha2) h = attention_forward(*params.mha2, h, training, rng, residual_norm);
    if (params.se) h = se_forward(*params.se, h);

    Tensor pooled = reshape(global_average_pool(h), {1, cfg.conv2_filters});
    Tensor logits = add_row_vector(matmul(pooled, params.head.weight), params.head.bias);
    return softmax(logits, -1);
}

StateProbabilities forward(const MtpsParams& params, const std::vector<double>& values,
                           int t_len) {
    const int f = params.config.input_features;
    if (static_cast<size_t>(t_len) * static_cast<size_t>(f) != values.size())
        throw SchemaError("window has " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(t_len) + "×" + std::to_string(f));
    Tensor x = Tensor::from({t_len, f}, values);
    Rng rng(0);
    Tensor probs = forward_graph(params, x, false, rng);
    return StateProbabilities::from_probs({probs.at(0, 0), probs.at(0, 1), probs.at(0, 2)});
}

Tensor batch_loss(const std::vector<Tensor>& prob_rows, const std::vector<ClassLabel>& labels) {
    if (prob_rows.empty()) throw UsageError("loss over an empty batch");
    if (prob_rows.size() != labels.size())
        throw UsageError("batch size mismatch: " + std::to_string(prob_rows.size()) +
                         " predictions vs " + std::to_string(labels.size()) + " labels");
    Tensor sum;
    for (size_t i = 0; i < prob_rows.size(); ++i) {
        Tensor nll = scale(log_clamped(pick(prob_rows[i], labels[i].value), 1e-12), -1.0);
        sum = i == 0 ? nll : add(sum, nll);
    }
    return scale(sum, 1.0 / static_cast<double>(prob_rows.size()));
}

Complexity count_complexity(const MtpsParams& params, int t_len) {
    const ModelConfig& cfg = params.config;
    Complexity c;
    c.parameters = params.parameter_count();

    const long T = t_len;
    long macs = 0;
    // Convolutions: per position, C_out·C_in·k multiply-accumulates.
    macs += T * static_cast<long>(cfg.conv1_filters) * cfg.input_features * cfg.kernel_width;
    macs += T * static_cast<long>(cfg.conv2_filters) * cfg.conv1_filters * cfg.kernel_width;
    long score_macs = 0;
    if (params.mha1) {
        const long C = cfg.conv2_filters;
        const long proj = static_cast<long>(cfg.attention_heads) * cfg.key_dim;
        const long blocks = params.mha2 ? 2 : 1;
        macs += blocks * (3 * T * C * proj + T * proj * C);  // q/k/v + output projection
        score_macs = blocks * (2 * cfg.attention_heads * T * T * cfg.key_dim);  // scores + context
        macs += score_macs;
    }
    if (params.se) {
        const long C = cfg.conv2_filters;
        const long mid = C / cfg.se_reduction;
        macs += C * mid * 2 + T * C;  // bottleneck + rescale
    }
    macs += static_cast<long>(cfg.conv2_filters) * cfg.classes;
    c.flops = 2 * macs;
    c.attention_score_flops = 2 * score_macs;

    long header = 256;  // magic + version + JSON header, order of magnitude
    c.serialized_bytes = header + 8 * c.parameters;
    return c;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'T', 'P', 'S'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MtpsParams& params,
                     const CheckpointExtras& extras) {
    json header;
    header["variant"] = variant_name(params.config.variant);
    header["input_features"] = params.config.input_features;
    header["classes"] = params.config.classes;
    header["conv1_filters"] = params.config.conv1_filters;
    header["conv2_filters"] = params.config.conv2_filters;
    header["kernel_width"] = params.config.kernel_width;
    header["attention_heads"] = params.config.attention_heads;
    header["key_dim"] = params.config.key_dim;
    header["se_reduction"] = params.config.se_reduction;
    header["dropout"] = params.config.dropout;
    header["schema_hash"] = extras.schema_hash;
    header["window_length"] = extras.window_length;
    header["window_stride"] = extras.window_stride;
    header["label_encoding"] = {{"HTP", 0}, {"LTP", 1}, {"NTP", 2}};
    if (!extras.normalization_json.empty())
        header["normalization"] = json::parse(extras.normalization_json);
    json shapes = json::object();
    for (const auto& [name, t] : params.named_tensors()) shapes[name] = t.shape();
    header["shapes"] = shapes;

    const std::string head_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t head_len = head_str.size();
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head_str.data(), static_cast<std::streamsize>(head_str.size()));
    for (const auto& [name, t] : params.named_tensors())
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!out) throw IoError("short write on checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path.string());
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    uint64_t head_len = 0;
    in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    std::string head_str(head_len, '\0');
    in.read(head_str.data(), static_cast<std::streamsize>(head_len));
    if (!in) throw IoError("truncated checkpoint header: " + path.string());
    json header = json::parse(head_str, nullptr, false);
    if (header.is_discarded()) throw IoError("corrupt checkpoint header: " + path.string());

    ModelConfig cfg;
    cfg.variant = variant_from_name(header.at("variant").get<std::string>());
    cfg.input_features = header.at("input_features").get<int>();
    cfg.classes = header.at("classes").get<int>();
    cfg.conv1_filters = header.at("conv1_filters").get<int>();
    cfg.conv2_filters = header.at("conv2_filters").get<int>();
    cfg.kernel_width = header.at("kernel_width").get<int>();
    cfg.attention_heads = header.at("attention_heads").get<int>();
    cfg.key_dim = header.at("key_dim").get<int>();
    cfg.se_reduction = header.at("se_reduction").get<int>();
    cfg.dropout = header.at("dropout").get<double>();

    LoadedCheckpoint loaded{MtpsParams::init(cfg, 0), {}};
    loaded.extras.schema_hash = header.at("schema_hash").get<uint64_t>();
    loaded.extras.window_length = header.at("window_length").get<int>();
    loaded.extras.window_stride = header.at("window_stride").get<int>();
    if (header.contains("normalization"))
        loaded.extras.normalization_json = header["normalization"].dump();

    const json& shapes = header.at("shapes");
    for (auto& [name, t] : loaded.params.named_tensors()) {
        if (!shapes.contains(name)) throw IoError("checkpoint missing tensor '" + name + "'");
        const Shape expect = shapes[name].get<Shape>();
        if (expect != t.shape())
            throw IoError("checkpoint shape mismatch for '" + name + "': file says " +
                          shape_str(expect) + ", model expects " + shape_str(t.shape()));
        Tensor tt = t;
        in.read(reinterpret_cast<char*>(tt.mutable_data().data()),
                static_cast<std::streamsize>(tt.size() * sizeof(double)));
        if (!in) throw IoError("truncated parameter block '" + name + "' in " + path.string());
    }
    return loaded;
}

}  // namespace mtps
