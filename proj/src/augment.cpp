#include "mtps/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mtps {

std::string augment_mode_name(AugmentMode m) {
    switch (m) {
        case AugmentMode::baseline: return "baseline";
        case AugmentMode::predicted: return "predicted";
        case AugmentMode::oracle: return "oracle";
    }
    return "baseline";
}

AugmentMode augment_mode_from_name(const std::string& name) {
    if (name == "baseline") return AugmentMode::baseline;
    if (name == "predicted") return AugmentMode::predicted;
    if (name == "oracle") return AugmentMode::oracle;
    throw ConfigError("unknown augmentation mode '" + name + "'");
}

std::vector<double> augment_features(const std::vector<double>& window, int t_len, int features,
                                     AugmentMode mode, const std::optional<ClassLabel>& label,
                                     const std::optional<StateProbabilities>& predicted,
                                     bool soft) {
    if (static_cast<size_t>(t_len) * features != window.size())
        throw UsageError("augment_features: window size mismatch");
    if (mode == AugmentMode::baseline) return window;

    std::array<double, 3> extra{0.0, 0.0, 0.0};
    if (mode == AugmentMode::oracle) {
        if (!label) throw ConfigError("oracle augmentation requires ground-truth labels");
        extra[static_cast<size_t>(label->value)] = 1.0;
    } else {
        if (!predicted) throw ConfigError("predicted augmentation requires an upstream model");
        if (soft) {
            extra[ClassLabel::kHtp] = predicted->p_htp;
            extra[ClassLabel::kLtp] = predicted->p_ltp;
            extra[ClassLabel::kNtp] = predicted->p_ntp;
        } else {
            extra[static_cast<size_t>(predicted->argmax_class.value)] = 1.0;
        }
    }
    std::vector<double> out(static_cast<size_t>(t_len) * (features + 3));
    for (int t = 0; t < t_len; ++t) {
        const size_t src = static_cast<size_t>(t) * features;
        const size_t dst = static_cast<size_t>(t) * (features + 3);
        std::copy(window.begin() + static_cast<long>(src),
                  window.begin() + static_cast<long>(src + features),
                  out.begin() + static_cast<long>(dst));
        for (int j = 0; j < 3; ++j) out[dst + static_cast<size_t>(features) + j] = extra[j];
    }
    return out;
}

namespace {

struct SeedSplits {
    WindowSet train, val, test;               // downstream-normalized, collision labels
    std::vector<StateProbabilities> train_tp, val_tp, test_tp;  // upstream predictions
};

// Re-label a window set with the binary collision target.
void to_collision_labels(WindowSet& set) {
    for (size_t i = 0; i < set.size(); ++i) {
        if (!set.collision[i])
            throw ConfigError("corpus ride lacks a collision label (window " +
                              std::to_string(i) + ")");
        set.labels[i] = ClassLabel{*set.collision[i]};
    }
}

WindowSet augment_set(const WindowSet& base, AugmentMode mode,
                      const std::vector<StateProbabilities>* predictions,
                      std::span<const ClassLabel> tp_labels, bool soft, int features) {
    WindowSet out;
    out.window_length = base.window_length;
    out.labels = base.labels;
    out.ride_index = base.ride_index;
    out.collision = base.collision;
    for (size_t i = 0; i < base.size(); ++i) {
        std::optional<ClassLabel> gt;
        std::optional<StateProbabilities> pred;
        if (mode == AugmentMode::oracle) gt = tp_labels[i];
        if (mode == AugmentMode::predicted) pred = (*predictions)[i];
        out.values.push_back(augment_features(base.values[i], base.window_length, features, mode,
                                              gt, pred, soft));
    }
    return out;
}

}  // namespace

AugmentResult run_experiment(const std::vector<RawSession>& corpus, const MtpsParams* upstream,
                             const NormalizationStats* upstream_stats,
                             const AugmentConfig& config) {
    const bool wants_predicted =
        std::find(config.modes.begin(), config.modes.end(), AugmentMode::predicted) !=
        config.modes.end();
    if (wants_predicted && (!upstream || !upstream_stats))
        throw ConfigError("predicted mode requires an upstream checkpoint");
    for (const auto& s : corpus)
        if (!s.collision)
            throw ConfigError("augmentation corpus must carry collision labels (ride " +
                              s.ride_id + ")");

    std::vector<RawSession> imputed = corpus;
    impute(imputed);

    std::vector<int> collision_labels;
    for (const auto& s : imputed) collision_labels.push_back(*s.collision);

    AugmentResult result;
    std::vector<ModeResult> modes;
    for (AugmentMode m : config.modes) modes.push_back({m, {}, 0.0});

    for (uint64_t seed : config.seeds) {
        // One ride split per seed, shared verbatim by all modes.
        const SplitIndices outer =
            stratified_split(collision_labels, config.downstream.split_fraction, seed);
        std::vector<int> train_col;
        for (size_t i : outer.train) train_col.push_back(collision_labels[i]);
        const SplitIndices inner = stratified_split(
            train_col, 1.0 - config.downstream.val_fraction, Rng::mix(seed, 0x7A2));

        std::vector<RawSession> train_rides, val_rides, test_rides;
        for (size_t k : inner.train) train_rides.push_back(imputed[outer.train[k]]);
        for (size_t k : inner.test) val_rides.push_back(imputed[outer.train[k]]);
        for (size_t i : outer.test) test_rides.push_back(imputed[i]);

        const NormalizationStats stats = NormalizationStats::compute(train_rides);
        auto window_part = [&](std::vector<RawSession> rides, const NormalizationStats& st) {
            normalize(rides, st);
            return window(rides, config.downstream.window_length,
                          config.downstream.window_stride);
        };
        SeedSplits splits;
        splits.train = window_part(train_rides, stats);
        splits.val = window_part(val_rides, stats);
        splits.test = window_part(test_rides, stats);

        std::vector<ClassLabel> train_tp = splits.train.labels;
        std::vector<ClassLabel> val_tp = splits.val.labels;
        std::vector<ClassLabel> test_tp = splits.test.labels;
        to_collision_labels(splits.train);
        to_collision_labels(splits.val);
        to_collision_labels(splits.test);

        if (wants_predicted) {
            // The upstream model sees the corpus through its own training
            // normalization, not the downstream one.
            const NormalizationStats& ust = *upstream_stats;
            splits.train_tp = predict_all(*upstream, window_part(train_rides, ust),
                                          config.downstream.threads);
            splits.val_tp =
                predict_all(*upstream, window_part(val_rides, ust), config.downstream.threads);
            splits.test_tp =
                predict_all(*upstream, window_part(test_rides, ust), config.downstream.threads);
        }

        for (auto& mode_result : modes) {
            const AugmentMode mode = mode_result.mode;
            const int features = FeatureSchema::standard().count();
            WindowSet tr = augment_set(splits.train, mode, &splits.train_tp, train_tp,
                                       config.soft, features);
            WindowSet va =
                augment_set(splits.val, mode, &splits.val_tp, val_tp, config.soft, features);
            WindowSet te =
                augment_set(splits.test, mode, &splits.test_tp, test_tp, config.soft, features);

            ModelConfig mc;
            mc.input_features = mode == AugmentMode::baseline ? features : features + 3;
            mc.classes = 2;
            mc.dropout = config.downstream.dropout;
            mc.variant = config.downstream.variant;
            TrainConfig tc = config.downstream;
            tc.seed = Rng::mix(seed, static_cast<uint64_t>(mode) + 0xA06);

            TrainResult trained = train(tc, mc, tr, va);
            mode_result.per_seed_accuracy.push_back(
                evaluate(trained.params, te, tc.threads).accuracy);
        }
    }

    for (auto& m : modes) {
        m.mean_accuracy =
            std::accumulate(m.per_seed_accuracy.begin(), m.per_seed_accuracy.end(), 0.0) /
            static_cast<double>(m.per_seed_accuracy.size());
        if (m.mode == AugmentMode::baseline) result.a_baseline = m.mean_accuracy;
        if (m.mode == AugmentMode::predicted) result.a_mtps = m.mean_accuracy;
        if (m.mode == AugmentMode::oracle) result.a_oracle = m.mean_accuracy;
    }
    result.modes = std::move(modes);

    auto has_mode = [&config](AugmentMode m) {
        return std::find(config.modes.begin(), config.modes.end(), m) != config.modes.end();
    };
    if (has_mode(AugmentMode::baseline) && has_mode(AugmentMode::oracle)) {
        result.delta_max = result.a_oracle - result.a_baseline;
        if (wants_predicted) {
            result.delta_mtps = result.a_mtps - result.a_baseline;
            result.epsilon = std::abs(result.a_oracle - result.a_mtps);
            if (result.delta_max > 0.0) {
                result.eta = result.delta_mtps / result.delta_max * 100.0;
                result.eta_defined = true;
            } else {
                result.eta_note = "undefined: oracle does not improve on the baseline "
                                  "(delta_max <= 0)";
            }
        } else {
            result.eta_note = "undefined: predicted mode not run";
        }
    } else {
        result.eta_note = "undefined: needs baseline and oracle modes";
    }
    return result;
}

std::string augment_result_csv(const AugmentResult& r) {
    std::ostringstream os;
    os.precision(17);
    os << "mode,mean_accuracy";
    size_t max_seeds = 0;
    for (const auto& m : r.modes) max_seeds = std::max(max_seeds, m.per_seed_accuracy.size());
    for (size_t i = 0; i < max_seeds; ++i) os << ",seed" << i;
    os << "\n";
    for (const auto& m : r.modes) {
        os << augment_mode_name(m.mode) << "," << m.mean_accuracy;
        for (double a : m.per_seed_accuracy) os << "," << a;
        os << "\n";
    }
    os << "delta_max,," << r.delta_max << "\n";
    os << "delta_predicted,," << r.delta_mtps << "\n";
    os << "epsilon,," << r.epsilon << "\n";
    if (r.eta_defined) os << "eta_percent,," << r.eta << "\n";
    else os << "eta_percent,undefined,\n";
    return os.str();
}

std::string augment_result_text(const AugmentResult& r) {
    std::ostringstream os;
    os.precision(2);
    os << std::fixed;
    os << "Input configuration            Accuracy (%)\n";
    auto row = [&os](const std::string& name, double acc) {
        os << name;
        for (size_t i = name.size(); i < 31; ++i) os << ' ';
        os << acc * 100.0 << "\n";
    };
    for (const auto& m : r.modes) {
        switch (m.mode) {
            case AugmentMode::baseline: row("Baseline: f(X)", m.mean_accuracy); break;
            case AugmentMode::predicted: row("Predicted TP: f(X (+) y_hat)", m.mean_accuracy); break;
            case AugmentMode::oracle: row("Oracle (GT TP): f(X (+) y)", m.mean_accuracy); break;
        }
    }
    os << "\ndelta_max " << r.delta_max * 100.0 << "  delta_predicted " << r.delta_mtps * 100.0
       << "  epsilon " << r.epsilon * 100.0 << "\n";
    if (r.eta_defined) os << "benefit ratio eta = " << r.eta << "% of the oracle gain\n";
    else os << "benefit ratio eta " << r.eta_note << "\n";
    return os.str();
}

}  // namespace mtps
