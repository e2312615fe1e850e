#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtps/errors.hpp"
#include "mtps/rng.hpp"

namespace mtps {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
size_t shape_size(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// Collects leaf gradients outside the leaf tensors themselves, so several
// graphs over the same parameters can run backward concurrently.
class GradientBuffer {
public:
    std::vector<double>& slot(const TensorNode* leaf, size_t n);
    const std::vector<double>* find(const TensorNode* leaf) const;
    void clear() { slots_.clear(); }

private:
    std::unordered_map<const TensorNode*, std::vector<double>> slots_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    bool leaf = true;
    std::vector<NodePtr> parents;
    std::function<void(const TensorNode&, GradientBuffer*)> backward_fn;

    size_t size() const { return data.size(); }
    std::vector<double>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

// Value-semantic handle onto a shared graph node. Data is immutable once an
// op has produced it; only leaves created by the caller may be mutated
// (parameter updates) between graph builds.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int axis) const { return node_->shape[static_cast<size_t>(axis)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    size_t size() const { return node_->size(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    std::span<const double> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    bool requires_grad() const { return node_->requires_grad; }

    double value() const;                  // scalar tensors
    double at(int i) const;                // 1-D
    double at(int r, int c) const;         // 2-D
    void set(int i, double v) { node_->data[static_cast<size_t>(i)] = v; }

    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    // Reverse-mode sweep from a scalar. Every requires_grad tensor reachable
    // from this node receives its gradient; leaf gradients go to `sink` when
    // given, otherwise accumulate in the leaves.
    void backward(GradientBuffer* sink = nullptr) const;

    TensorNode* node() const { return node_.get(); }
    NodePtr handle() const { return node_; }

private:
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}
    friend Tensor make_op_output(Shape shape, std::vector<NodePtr> parents,
                                 std::function<void(const TensorNode&, GradientBuffer*)> fn);
    NodePtr node_;
};

Tensor make_op_output(Shape shape, std::vector<NodePtr> parents,
                      std::function<void(const TensorNode&, GradientBuffer*)> fn);

// ---- primitive ops ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);          // [m×k]·[k×n]
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
Tensor softmax(const Tensor& x, int axis = -1);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& x, double factor);
Tensor mean_axis0(const Tensor& x);                       // [T×C] -> [C]
Tensor sum_all(const Tensor& x);                          // -> scalar
Tensor transpose(const Tensor& x);                        // 2-D
Tensor layer_norm_rows(const Tensor& x, double eps);      // per-row stats, no affine
Tensor scale_columns(const Tensor& x, const Tensor& g);   // x[t,c] * g[c]
Tensor add_row_vector(const Tensor& x, const Tensor& b);  // x[t,c] + b[c]
Tensor slice_columns(const Tensor& x, int from, int to);  // [T×C] -> [T×(to-from)]
Tensor concat_columns(const std::vector<Tensor>& parts);  // inverse of slicing
Tensor reshape(const Tensor& x, Shape shape);             // row-major view copy
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);
Tensor log_clamped(const Tensor& x, double floor);        // log(max(x, floor))
Tensor pick(const Tensor& x, int index);                  // flat index -> scalar

// softmax(q·kᵀ/√d_k)·v composed from primitives.
Tensor scaled_dot_product(const Tensor& q, const Tensor& k, const Tensor& v);

Tensor uniform_random(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);

}  // namespace mtps
