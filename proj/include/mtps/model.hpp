#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtps/layers.hpp"
#include "mtps/tensor.hpp"

namespace mtps {

// Fixed target encoding: 0 = HTP, 1 = LTP, 2 = NTP.
struct ClassLabel {
    int value = 0;

    static constexpr int kHtp = 0;
    static constexpr int kLtp = 1;
    static constexpr int kNtp = 2;
    static constexpr int kCount = 3;

    static ClassLabel htp() { return {kHtp}; }
    static ClassLabel ltp() { return {kLtp}; }
    static ClassLabel ntp() { return {kNtp}; }

    const char* name() const {
        static const char* names[] = {"HTP", "LTP", "NTP"};
        return names[value];
    }
    bool operator==(const ClassLabel&) const = default;
};

// Calibrated probability triple; components sum to 1.
struct StateProbabilities {
    double p_ntp = 0.0;
    double p_ltp = 0.0;
    double p_htp = 0.0;
    ClassLabel argmax_class;
    double confidence = 0.0;

    // probs indexed by ClassLabel encoding (0=HTP, 1=LTP, 2=NTP).
    static StateProbabilities from_probs(const std::array<double, 3>& probs);
    double by_class(int cls) const {
        return cls == ClassLabel::kHtp ? p_htp : cls == ClassLabel::kLtp ? p_ltp : p_ntp;
    }
};

enum class ModelVariant { full, no_se, no_attention, no_residual_norm, conv_only };

std::string variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

struct ModelConfig {
    int input_features = 63;
    int classes = 3;
    int conv1_filters = 64;
    int conv2_filters = 128;
    int kernel_width = 3;
    int attention_heads = 4;
    int key_dim = 32;
    int se_reduction = 16;
    double dropout = 0.2;
    ModelVariant variant = ModelVariant::full;
};

// The complete named parameter set of the network.
struct MtpsParams {
    ModelConfig config;
    Conv1dLayer conv1;
    Conv1dLayer conv2;
    std::optional<MultiHeadAttentionBlock> mha1, mha2;
    std::optional<SqueezeExcitationBlock> se;
    DenseHead head;

    static MtpsParams init(const ModelConfig& config, uint64_t seed);

    // Fixed serialization / update order.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    std::vector<Tensor> trainable() const;
    long parameter_count() const;
    MtpsParams clone() const;
    void zero_grad() const;
};

// conv1 -> relu -> conv2 -> relu -> mha1 -> mha2 -> se -> GAP -> dense -> softmax.
// Input x is [T×input_features]; returns the [1×classes] probability row with
// the full graph attached.
Tensor forward_graph(const MtpsParams& params, const Tensor& x, bool training, Rng& rng);

// Inference-only convenience over raw window values (row-major T×F).
StateProbabilities forward(const MtpsParams& params, const std::vector<double>& values, int t_len);

// Mean categorical cross-entropy over prob rows; probabilities clamped at
// 1e-12 before the log.
Tensor batch_loss(const std::vector<Tensor>& prob_rows, const std::vector<ClassLabel>& labels);

struct Complexity {
    long parameters = 0;
    long flops = 0;             // 2 FLOPs per multiply-accumulate, forward at length T
    long attention_score_flops = 0;
    long serialized_bytes = 0;  // checkpoint: header + 8 bytes per parameter
};

Complexity count_complexity(const MtpsParams& params, int t_len);

// ---- checkpoint -------------------------------------------------------------
// Layout: magic "MTPS", u32 version, u64 header length, JSON header (shapes,
// schema hash, normalization stats, window config), then little-endian fp64
// blocks in named_tensors() order.

struct CheckpointExtras {
    uint64_t schema_hash = 0;
    int window_length = 64;
    int window_stride = 32;
    std::string normalization_json;  // serialized NormalizationStats, may be empty
};

void save_checkpoint(const std::filesystem::path& path, const MtpsParams& params,
                     const CheckpointExtras& extras);

struct LoadedCheckpoint {
    MtpsParams params;
    CheckpointExtras extras;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtps
