#pragma once

#include <vector>

#include "mtps/tensor.hpp"

namespace mtps {

inline constexpr double kLayerNormEps = 1e-5;

// Conv1D over [C_in×T] with same-padding, stride 1, ReLU applied by the model.
struct Conv1dLayer {
    Tensor kernel;  // [C_out×C_in×k]
    Tensor bias;    // [C_out]

    int in_channels() const { return kernel.dim(1); }
    int out_channels() const { return kernel.dim(0); }
    int width() const { return kernel.dim(2); }
};

struct LayerNormParams {
    Tensor gain;  // [C]
    Tensor bias;  // [C]
};

// Fused per-role projections: W_q/W_k/W_v/W_o are [C×(h·d_k)] (head slices are
// contiguous column blocks), each with a per-role bias. Mathematically equal to
// per-head projection matrices.
struct MultiHeadAttentionBlock {
    Tensor w_q, b_q;
    Tensor w_k, b_k;
    Tensor w_v, b_v;
    Tensor w_o, b_o;
    LayerNormParams norm;
    int heads = 4;
    int key_dim = 32;
    double dropout_rate = 0.2;

    int channels() const { return w_q.dim(0); }
};

struct SqueezeExcitationBlock {
    Tensor w1, b1;  // [C/r×C], [C/r]
    Tensor w2, b2;  // [C×C/r], [C]
    int reduction = 16;

    int channels() const { return w2.dim(0); }
};

struct DenseHead {
    Tensor weight;  // [C×classes]
    Tensor bias;    // [classes]

    int classes() const { return weight.dim(1); }
};

// LayerNorm(x + Dropout(MHA(x))); with residual_norm=false the block reduces
// to Dropout(MHA(x)) and the norm parameters are unused.
Tensor attention_forward(const MultiHeadAttentionBlock& block, const Tensor& x, bool training,
                         Rng& rng, bool residual_norm = true);

// Row-stochastic attention matrix per head, inference-time (no dropout).
std::vector<Tensor> attention_matrices(const MultiHeadAttentionBlock& block, const Tensor& x);

// u[t,c] * sigmoid(W2·ReLU(W1·squeeze(u)+b1)+b2)[c]
Tensor se_forward(const SqueezeExcitationBlock& block, const Tensor& u);

// Gate vector s in (0,1)^C for a given input, inference helper.
Tensor se_gates(const SqueezeExcitationBlock& block, const Tensor& u);

Tensor global_average_pool(const Tensor& x);  // [T×C] -> [C]

// Scaled-uniform init, bounds ±sqrt(6/(fan_in+fan_out)); biases are zeros.
Tensor init_weight(Shape shape, int fan_in, int fan_out, Rng& rng);

Conv1dLayer make_conv1d(int in_channels, int out_channels, int width, Rng& rng);
MultiHeadAttentionBlock make_attention(int channels, int heads, int key_dim, double dropout,
                                       Rng& rng, bool with_norm = true);
SqueezeExcitationBlock make_squeeze_excitation(int channels, int reduction, Rng& rng);
DenseHead make_dense_head(int channels, int classes, Rng& rng);

}  // namespace mtps
