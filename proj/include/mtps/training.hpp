#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtps/data.hpp"
#include "mtps/model.hpp"

namespace mtps {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 50;
    int early_stop_patience = 5;
    int lr_plateau_patience = 3;
    double lr_factor = 0.5;
    double dropout = 0.2;
    uint64_t seed = 64;
    double split_fraction = 0.8;      // train share of the ride-level split
    double val_fraction = 0.1;        // carved from the training split
    double improve_threshold = 1e-4;  // minimum val-loss decrease that counts
    int threads = 0;                  // 0 = hardware concurrency (capped at 8)
    int window_length = 64;
    int window_stride = 32;
    ModelVariant variant = ModelVariant::full;

    void validate() const;
};

struct SplitIndices {
    std::vector<size_t> train;
    std::vector<size_t> test;
};

// Deterministic stratified split over labeled items; per-class proportions in
// both halves are within one item of the global fraction.
SplitIndices stratified_split(std::span<const int> labels, double fraction, uint64_t seed);

// Stratified k folds (test = fold i, train = rest); feeds the per-fold score
// vectors consumed by the significance tests.
std::vector<SplitIndices> stratified_kfold(std::span<const int> labels, int folds, uint64_t seed);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m, v;

    static AdamState init(std::span<const Tensor> params);
};

// Bias-corrected in-place update; gradients come from the merged batch buffer.
// `names` (when given) labels parameters in NaN diagnostics.
void adam_step(std::span<const Tensor> params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, std::span<const std::string> names = {});

// Plateau schedule: LR halves after `lr_patience` epochs without improvement,
// training stops after `stop_patience`; both counters reset on improvement,
// the LR counter also resets on each reduction.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, double factor, int lr_patience, int stop_patience,
                     double improve_threshold)
        : lr_(lr), factor_(factor), lr_patience_(lr_patience), stop_patience_(stop_patience),
          threshold_(improve_threshold) {}

    struct Update {
        bool improved = false;
        bool reduced_lr = false;
        bool stop = false;
    };

    Update observe(double val_loss);
    double lr() const { return lr_; }
    double best() const { return best_; }

private:
    double lr_;
    double factor_;
    int lr_patience_;
    int stop_patience_;
    double threshold_;
    double best_ = std::numeric_limits<double>::infinity();
    int since_best_ = 0;
    int since_lr_event_ = 0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    MtpsParams params;  // best-validation snapshot
    std::vector<EpochLog> log;
    double best_val_loss = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
};

std::string training_log_csv(std::span<const EpochLog> log);

// Windows must be preprocessed (imputed, normalized, windowed).
TrainResult train(const TrainConfig& config, const ModelConfig& model_config,
                  const WindowSet& train_set, const WindowSet& val_set);

// Mean loss / accuracy of a parameter set over a window set (no dropout).
struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalStats evaluate(const MtpsParams& params, const WindowSet& set, int threads = 0);

std::vector<StateProbabilities> predict_all(const MtpsParams& params, const WindowSet& set,
                                            int threads = 0);

struct AblationRow {
    ModelVariant variant;
    long parameter_count = 0;
    std::vector<double> per_seed_accuracy;
    double mean_accuracy = 0.0;
};

// Same data split and seed set across variants; accuracy measured on the test
// windows of each seed's split.
std::vector<AblationRow> run_ablation(const TrainConfig& config,
                                      const std::vector<RawSession>& sessions,
                                      const std::vector<ModelVariant>& variants,
                                      std::span<const uint64_t> seeds);

// Ride-level pipeline used by the CLI and experiments: stratified ride split,
// train-split normalization stats, windowing of each part.
struct PreparedData {
    WindowSet train, val, test;
    NormalizationStats stats;
};

PreparedData prepare_data(std::vector<RawSession> sessions, const TrainConfig& config,
                          uint64_t split_seed);

}  // namespace mtps
