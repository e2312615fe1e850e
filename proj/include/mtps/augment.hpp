#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtps/training.hpp"

namespace mtps {

enum class AugmentMode { baseline, predicted, oracle };

std::string augment_mode_name(AugmentMode m);
AugmentMode augment_mode_from_name(const std::string& name);

// Appends TP information as extra columns broadcast across all timesteps:
// baseline adds nothing; oracle appends the one-hot ground-truth label;
// predicted appends the upstream probability triple (or its one-hot argmax
// when soft=false). The original 63 columns are never modified.
std::vector<double> augment_features(const std::vector<double>& window, int t_len, int features,
                                     AugmentMode mode,
                                     const std::optional<ClassLabel>& label,
                                     const std::optional<StateProbabilities>& predicted,
                                     bool soft = true);

struct AugmentConfig {
    std::vector<AugmentMode> modes = {AugmentMode::baseline, AugmentMode::predicted,
                                      AugmentMode::oracle};
    std::vector<uint64_t> seeds = {1, 2, 3};
    bool soft = true;
    TrainConfig downstream;  // trains the collision classifier per mode/seed

    AugmentConfig() {
        downstream.max_epochs = 10;
        downstream.early_stop_patience = 4;
    }
};

struct ModeResult {
    AugmentMode mode;
    std::vector<double> per_seed_accuracy;
    double mean_accuracy = 0.0;
};

struct AugmentResult {
    std::vector<ModeResult> modes;
    double a_baseline = 0.0, a_mtps = 0.0, a_oracle = 0.0;
    double delta_max = 0.0;   // oracle - baseline
    double delta_mtps = 0.0;  // predicted - baseline
    double epsilon = 0.0;     // |oracle - predicted|
    double eta = 0.0;         // delta_mtps / delta_max × 100
    bool eta_defined = false;
    std::string eta_note;
};

// Downstream classifier: the same trunk with a binary collision head over
// 63+a input columns. Identical ride splits and seeds across modes; predicted
// mode runs the upstream checkpoint on each window.
AugmentResult run_experiment(const std::vector<RawSession>& corpus,
                             const MtpsParams* upstream,  // required for predicted mode
                             const NormalizationStats* upstream_stats,
                             const AugmentConfig& config);

std::string augment_result_csv(const AugmentResult& r);
std::string augment_result_text(const AugmentResult& r);

}  // namespace mtps
