#include "mtps/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace mtps {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (split_fraction <= 0.0 || split_fraction >= 1.0)
        throw ConfigError("split_fraction must be in (0,1)");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw ConfigError("val_fraction must be in (0,1)");
    if (lr_factor <= 0.0 || lr_factor >= 1.0) throw ConfigError("lr_factor must be in (0,1)");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    if (window_length < 1 || window_stride < 1)
        throw ConfigError("window length and stride must be >= 1");
}

SplitIndices stratified_split(std::span<const int> labels, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw ConfigError("split fraction must be in (0,1)");
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (const auto& [cls, idx] : by_class)
        if (idx.size() < 2)
            throw ConfigError("stratified split needs every class at least twice; class " +
                              std::to_string(cls) + " has " + std::to_string(idx.size()));
    SplitIndices out;
    Rng root(seed);
    for (auto& [cls, idx] : by_class) {
        Rng rng = root.derive(static_cast<uint64_t>(cls));
        rng.shuffle(idx);
        // Rounded proportion, but never an empty side for a class.
        const auto rounded =
            static_cast<size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        const size_t n_train = std::clamp<size_t>(rounded, 1, idx.size() - 1);
        for (size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? out.train : out.test).push_back(idx[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<SplitIndices> stratified_kfold(std::span<const int> labels, int folds,
                                           uint64_t seed) {
    if (folds < 2) throw ConfigError("k-fold needs at least 2 folds");
    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (const auto& [cls, idx] : by_class)
        if (idx.size() < static_cast<size_t>(folds))
            throw ConfigError("class " + std::to_string(cls) + " has fewer samples than folds");
    Rng root(seed);
    std::vector<SplitIndices> out(static_cast<size_t>(folds));
    for (auto& [cls, idx] : by_class) {
        Rng rng = root.derive(static_cast<uint64_t>(cls));
        rng.shuffle(idx);
        for (size_t i = 0; i < idx.size(); ++i) {
            const size_t fold = i % static_cast<size_t>(folds);
            for (size_t f = 0; f < static_cast<size_t>(folds); ++f)
                (f == fold ? out[f].test : out[f].train).push_back(idx[i]);
        }
    }
    for (auto& split : out) {
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.test.begin(), split.test.end());
    }
    return out;
}

AdamState AdamState::init(std::span<const Tensor> params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

void adam_step(std::span<const Tensor> params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, std::span<const std::string> names) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw UsageError("adam_step: parameter/gradient/state arity mismatch");
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        auto data = p.mutable_data();
        const auto& g = grads[pi];
        if (g.size() != data.size())
            throw UsageError("adam_step: gradient size mismatch on parameter " +
                             std::to_string(pi));
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        const std::string label =
            pi < names.size() ? names[pi] : "parameter " + std::to_string(pi);
        for (size_t i = 0; i < data.size(); ++i) {
            if (std::isnan(g[i]))
                throw NumericError("NaN gradient in " + label + " at index " +
                                   std::to_string(i));
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

PlateauScheduler::Update PlateauScheduler::observe(double val_loss) {
    Update u;
    if (val_loss < best_ - threshold_) {
        best_ = val_loss;
        since_best_ = 0;
        since_lr_event_ = 0;
        u.improved = true;
        return u;
    }
    ++since_best_;
    ++since_lr_event_;
    if (since_lr_event_ >= lr_patience_) {
        lr_ *= factor_;
        since_lr_event_ = 0;
        u.reduced_lr = true;
    }
    if (since_best_ >= stop_patience_) u.stop = true;
    return u;
}

std::string training_log_csv(std::span<const EpochLog> log) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,val_loss,val_acc,lr\n";
    for (const auto& e : log)
        os << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.val_acc << ","
           << e.lr << "\n";
    return os.str();
}

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(hw == 0 ? 1u : hw, 8u));
}

struct SampleEval {
    double loss = 0.0;
    int predicted = 0;
};

// Forward (+ optional backward into `sink`) for one window. The dropout
// stream is derived from (epoch, sample index) so results do not depend on
// thread scheduling.
SampleEval run_sample(const MtpsParams& params, const WindowSet& set, size_t idx, bool training,
                      Rng dropout_rng, GradientBuffer* sink, double inv_batch) {
    Tensor x = Tensor::from({set.window_length, params.config.input_features},
                            set.values[idx]);
    Tensor probs = forward_graph(params, x, training, dropout_rng);
    const int label = set.labels[idx].value;
    Tensor loss = scale(log_clamped(pick(probs, label), 1e-12), -1.0);
    SampleEval ev;
    ev.loss = loss.value();
    int best = 0;
    for (int c = 1; c < params.config.classes; ++c)
        if (probs.at(0, c) > probs.at(0, best)) best = c;
    ev.predicted = best;
    if (sink) scale(loss, inv_batch).backward(sink);
    return ev;
}

// Merge thread-local gradient buffers into dense per-parameter vectors, in
// fixed parameter order then fixed thread order.
std::vector<std::vector<double>> merge_gradients(std::span<const Tensor> params,
                                                 std::span<GradientBuffer> sinks) {
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        std::vector<double> g(p.size(), 0.0);
        for (auto& sink : sinks) {
            const std::vector<double>* part = sink.find(p.node());
            if (!part) continue;
            for (size_t i = 0; i < g.size(); ++i) g[i] += (*part)[i];
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

}  // namespace

TrainResult train(const TrainConfig& config, const ModelConfig& model_config,
                  const WindowSet& train_set, const WindowSet& val_set) {
    config.validate();
    if (train_set.size() == 0) throw UsageError("training set is empty");
    if (val_set.size() == 0) throw UsageError("validation set is empty");

    MtpsParams params = MtpsParams::init(model_config, Rng::mix(config.seed, 0x1417));
    const std::vector<Tensor> trainable = params.trainable();
    std::vector<std::string> param_names;
    for (const auto& [name, t] : params.named_tensors()) param_names.push_back(name);
    AdamState adam = AdamState::init(trainable);
    PlateauScheduler scheduler(config.learning_rate, config.lr_factor, config.lr_plateau_patience,
                               config.early_stop_patience, config.improve_threshold);
    const int threads = resolve_threads(config.threads);

    TrainResult result;
    MtpsParams best = params.clone();
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;

    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(config.seed, 0xE90C + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        const double lr = scheduler.lr();
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            const size_t batch_n = end - start;
            const double inv_batch = 1.0 / static_cast<double>(batch_n);
            const int workers = static_cast<int>(
                std::min<size_t>(static_cast<size_t>(threads), batch_n));

            std::vector<GradientBuffer> sinks(static_cast<size_t>(workers));
            std::vector<double> losses(batch_n, 0.0);
            auto work = [&](int w) {
                for (size_t k = start + static_cast<size_t>(w); k < end;
                     k += static_cast<size_t>(workers)) {
                    const size_t idx = order[k];
                    Rng drop = Rng(Rng::mix(config.seed, 0xD60D0 + static_cast<uint64_t>(epoch)))
                                   .derive(idx);
                    losses[k - start] = run_sample(params, train_set, idx, true, drop,
                                                   &sinks[static_cast<size_t>(w)], inv_batch)
                                            .loss;
                }
            };
            if (workers == 1) {
                work(0);
            } else {
                std::vector<std::thread> pool;
                pool.reserve(static_cast<size_t>(workers));
                for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
                for (auto& t : pool) t.join();
            }
            double batch_loss = 0.0;
            for (double l : losses) batch_loss += l;
            batch_loss *= inv_batch;
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                                   ", batch starting at sample " + std::to_string(start));
            epoch_loss += batch_loss * static_cast<double>(batch_n);

            auto grads = merge_gradients(trainable, sinks);
            adam_step(trainable, grads, adam, lr, param_names);
        }
        epoch_loss /= static_cast<double>(train_set.size());

        const EvalStats val = evaluate(params, val_set, threads);
        if (!std::isfinite(val.loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));

        result.log.push_back({epoch, epoch_loss, val.loss, val.accuracy, lr});
        if (val.loss < best_val) {
            best_val = val.loss;
            best = params.clone();
            best_epoch = epoch;
        }
        const auto update = scheduler.observe(val.loss);
        result.epochs_run = epoch;
        if (update.stop) break;
    }

    result.params = std::move(best);
    result.best_val_loss = best_val;
    result.best_epoch = best_epoch;
    return result;
}

EvalStats evaluate(const MtpsParams& params, const WindowSet& set, int threads) {
    if (set.size() == 0) throw UsageError("evaluate on empty window set");
    const int workers = std::min(resolve_threads(threads), static_cast<int>(set.size()));
    std::vector<double> losses(set.size());
    std::vector<int> correct(set.size());
    auto work = [&](int w) {
        for (size_t i = static_cast<size_t>(w); i < set.size(); i += static_cast<size_t>(workers)) {
            Rng rng(0);
            const SampleEval ev = run_sample(params, set, i, false, rng, nullptr, 1.0);
            losses[i] = ev.loss;
            correct[i] = ev.predicted == set.labels[i].value ? 1 : 0;
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    EvalStats stats;
    for (size_t i = 0; i < set.size(); ++i) {
        stats.loss += losses[i];
        stats.accuracy += correct[i];
    }
    stats.loss /= static_cast<double>(set.size());
    stats.accuracy /= static_cast<double>(set.size());
    return stats;
}

std::vector<StateProbabilities> predict_all(const MtpsParams& params, const WindowSet& set,
                                            int threads) {
    std::vector<StateProbabilities> out(set.size());
    const int workers = std::min(resolve_threads(threads),
                                 std::max(1, static_cast<int>(set.size())));
    auto work = [&](int w) {
        for (size_t i = static_cast<size_t>(w); i < set.size(); i += static_cast<size_t>(workers)) {
            out[i] = forward(params, set.values[i], set.window_length);
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    return out;
}

PreparedData prepare_data(std::vector<RawSession> sessions, const TrainConfig& config,
                          uint64_t split_seed) {
    impute(sessions);
    std::vector<int> ride_labels;
    ride_labels.reserve(sessions.size());
    for (const auto& s : sessions) ride_labels.push_back(s.tp_label);

    const SplitIndices outer = stratified_split(ride_labels, config.split_fraction, split_seed);

    std::vector<int> train_labels;
    for (size_t i : outer.train) train_labels.push_back(sessions[i].tp_label);
    const SplitIndices inner =
        stratified_split(train_labels, 1.0 - config.val_fraction, Rng::mix(split_seed, 0x7A1));

    std::vector<RawSession> train_rides, val_rides, test_rides;
    for (size_t k : inner.train) train_rides.push_back(sessions[outer.train[k]]);
    for (size_t k : inner.test) val_rides.push_back(sessions[outer.train[k]]);
    for (size_t i : outer.test) test_rides.push_back(sessions[i]);

    PreparedData data;
    data.stats = NormalizationStats::compute(train_rides);
    normalize(train_rides, data.stats);
    normalize(val_rides, data.stats);
    normalize(test_rides, data.stats);
    data.train = window(train_rides, config.window_length, config.window_stride);
    data.val = window(val_rides, config.window_length, config.window_stride);
    data.test = window(test_rides, config.window_length, config.window_stride);
    return data;
}

std::vector<AblationRow> run_ablation(const TrainConfig& config,
                                      const std::vector<RawSession>& sessions,
                                      const std::vector<ModelVariant>& variants,
                                      std::span<const uint64_t> seeds) {
    std::vector<AblationRow> rows;
    for (ModelVariant variant : variants) {
        AblationRow row;
        row.variant = variant;
        ModelConfig mc;
        mc.variant = variant;
        mc.dropout = config.dropout;
        row.parameter_count = MtpsParams::init(mc, 0).parameter_count();
        for (uint64_t seed : seeds) {
            TrainConfig tc = config;
            tc.seed = seed;
            tc.variant = variant;
            PreparedData data = prepare_data(sessions, tc, seed);
            TrainResult result = train(tc, mc, data.train, data.val);
            row.per_seed_accuracy.push_back(
                evaluate(result.params, data.test, tc.threads).accuracy);
        }
        row.mean_accuracy =
            std::accumulate(row.per_seed_accuracy.begin(), row.per_seed_accuracy.end(), 0.0) /
            static_cast<double>(row.per_seed_accuracy.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace mtps
