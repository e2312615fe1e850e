#include "mtps/layers.hpp"

#include <cmath>

namespace mtps {

namespace {

Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_row_vector(matmul(x, w), b);
}

}  // namespace

Tensor attention_forward(const MultiHeadAttentionBlock& block, const Tensor& x, bool training,
                         Rng& rng, bool residual_norm) {
    if (x.ndim() != 2 || x.dim(1) != block.channels())
        throw ShapeError("attention input must be [T×" + std::to_string(block.channels()) +
                         "], got " + shape_str(x.shape()));
    if (x.dim(0) < 1) throw UsageError("attention on empty sequence");

    const Tensor q = project(x, block.w_q, block.b_q);
    const Tensor k = project(x, block.w_k, block.b_k);
    const Tensor v = project(x, block.w_v, block.b_v);

    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(block.heads));
    for (int h = 0; h < block.heads; ++h) {
        const int from = h * block.key_dim;
        const int to = from + block.key_dim;
        heads.push_back(scaled_dot_product(slice_columns(q, from, to),
                                           slice_columns(k, from, to),
                                           slice_columns(v, from, to)));
    }
    Tensor out = project(concat_columns(heads), block.w_o, block.b_o);
    out = dropout(out, block.dropout_rate, rng, training);
    if (!residual_norm) return out;
    Tensor normed = layer_norm_rows(add(x, out), kLayerNormEps);
    return add_row_vector(scale_columns(normed, block.norm.gain), block.norm.bias);
}

std::vector<Tensor> attention_matrices(const MultiHeadAttentionBlock& block, const Tensor& x) {
    const Tensor q = project(x, block.w_q, block.b_q);
    const Tensor k = project(x, block.w_k, block.b_k);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(block.key_dim));
    std::vector<Tensor> mats;
    for (int h = 0; h < block.heads; ++h) {
        const int from = h * block.key_dim;
        const int to = from + block.key_dim;
        Tensor scores = scale(
            matmul(slice_columns(q, from, to), transpose(slice_columns(k, from, to))),
            inv_sqrt_dk);
        mats.push_back(softmax(scores, -1));
    }
    return mats;
}

Tensor se_gates(const SqueezeExcitationBlock& block, const Tensor& u) {
    const Tensor z = mean_axis0(u);  // squeeze: per-channel temporal mean
    const Tensor zr = reshape(z, {1, u.dim(1)});
    const Tensor hidden = relu(add_row_vector(matmul(zr, transpose(block.w1)), block.b1));
    const Tensor s = sigmoid(add_row_vector(matmul(hidden, transpose(block.w2)), block.b2));
    return reshape(s, {u.dim(1)});
}

Tensor se_forward(const SqueezeExcitationBlock& block, const Tensor& u) {
    if (u.ndim() != 2 || u.dim(1) != block.channels())
        throw ShapeError("squeeze-excitation input must be [T×" +
                         std::to_string(block.channels()) + "], got " + shape_str(u.shape()));
    if (u.dim(1) % block.reduction != 0)
        throw ConfigError("channel count " + std::to_string(u.dim(1)) +
                          " not divisible by reduction " + std::to_string(block.reduction));
    return scale_columns(u, se_gates(block, u));
}

Tensor global_average_pool(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("pool expects [T×C], got " + shape_str(x.shape()));
    if (x.dim(0) < 1) throw UsageError("pool on empty sequence");
    return mean_axis0(x);
}

Tensor init_weight(Shape shape, int fan_in, int fan_out, Rng& rng) {
    if (fan_in <= 0 || fan_out <= 0) throw ConfigError("init fan-in/fan-out must be positive");
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    return uniform_random(std::move(shape), -bound, bound, rng, true);
}

Conv1dLayer make_conv1d(int in_channels, int out_channels, int width, Rng& rng) {
    Conv1dLayer layer;
    layer.kernel = init_weight({out_channels, in_channels, width}, in_channels * width,
                               out_channels * width, rng);
    layer.bias = Tensor::zeros({out_channels}, true);
    return layer;
}

MultiHeadAttentionBlock make_attention(int channels, int heads, int key_dim, double dropout,
                                       Rng& rng, bool with_norm) {
    if (heads * key_dim != channels)
        throw ConfigError("h·d_k (" + std::to_string(heads * key_dim) +
                          ") must equal channel width (" + std::to_string(channels) + ")");
    MultiHeadAttentionBlock b;
    b.heads = heads;
    b.key_dim = key_dim;
    b.dropout_rate = dropout;
    const int proj = heads * key_dim;
    b.w_q = init_weight({channels, proj}, channels, proj, rng);
    b.b_q = Tensor::zeros({proj}, true);
    b.w_k = init_weight({channels, proj}, channels, proj, rng);
    b.b_k = Tensor::zeros({proj}, true);
    b.w_v = init_weight({channels, proj}, channels, proj, rng);
    b.b_v = Tensor::zeros({proj}, true);
    b.w_o = init_weight({proj, channels}, proj, channels, rng);
    b.b_o = Tensor::zeros({channels}, true);
    if (with_norm) {
        b.norm.gain = Tensor::full({channels}, 1.0, true);
        b.norm.bias = Tensor::zeros({channels}, true);
    }
    return b;
}

SqueezeExcitationBlock make_squeeze_excitation(int channels, int reduction, Rng& rng) {
    if (channels % reduction != 0)
        throw ConfigError("squeeze-excitation channels must be divisible by reduction");
    SqueezeExcitationBlock b;
    b.reduction = reduction;
    const int mid = channels / reduction;
    b.w1 = init_weight({mid, channels}, channels, mid, rng);
    b.b1 = Tensor::zeros({mid}, true);
    b.w2 = init_weight({channels, mid}, mid, channels, rng);
    b.b2 = Tensor::zeros({channels}, true);
    return b;
}

DenseHead make_dense_head(int channels, int classes, Rng& rng) {
    DenseHead h;
    h.weight = init_weight({channels, classes}, channels, classes, rng);
    h.bias = Tensor::zeros({classes}, true);
    return h;
}

}  // namespace mtps
