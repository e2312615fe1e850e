#include "mtps/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mtps {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

size_t shape_size(const Shape& s) {
    size_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
        n *= static_cast<size_t>(d);
    }
    return n;
}

std::vector<double>& GradientBuffer::slot(const TensorNode* leaf, size_t n) {
    auto& v = slots_[leaf];
    if (v.size() != n) v.assign(n, 0.0);
    return v;
}

const std::vector<double>* GradientBuffer::find(const TensorNode* leaf) const {
    auto it = slots_.find(leaf);
    return it == slots_.end() ? nullptr : &it->second;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->data.assign(shape_size(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size())
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

double Tensor::value() const {
    if (size() != 1) throw UsageError("value() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(int i) const { return node_->data[static_cast<size_t>(i)]; }

double Tensor::at(int r, int c) const {
    return node_->data[static_cast<size_t>(r) * static_cast<size_t>(node_->shape.back()) +
                       static_cast<size_t>(c)];
}

Tensor make_op_output(Shape shape, std::vector<NodePtr> parents,
                      std::function<void(const TensorNode&, GradientBuffer*)> fn) {
    auto n = std::make_shared<TensorNode>();
    n->data.assign(shape_size(shape), 0.0);
    n->shape = std::move(shape);
    n->leaf = false;
    for (auto& p : parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_fn = std::move(fn);
    return Tensor(std::move(n));
}

namespace {

// Destination buffer for a parent's gradient; ops accumulate (+=) into it
// directly. Shared leaves are redirected to the sink so concurrent graphs
// never touch the same memory.
double* grad_target(TensorNode& parent, GradientBuffer* sink) {
    if (!parent.requires_grad) return nullptr;
    if (sink && parent.leaf) return sink->slot(&parent, parent.size()).data();
    return parent.ensure_grad().data();
}

void topo_visit(TensorNode* n, std::unordered_set<TensorNode*>& seen,
                std::vector<TensorNode*>& order) {
    // Iterative post-order DFS; graphs are shallow but wide.
    struct Frame {
        TensorNode* node;
        size_t next_parent;
    };
    std::vector<Frame> stack{{n, 0}};
    seen.insert(n);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
}

}  // namespace

void Tensor::backward(GradientBuffer* sink) const {
    if (!defined()) throw UsageError("backward on undefined tensor");
    if (size() != 1) throw UsageError("backward requires a scalar loss, got " + shape_str(shape()));
    if (!node_->requires_grad)
        throw UsageError("backward on a tensor that is not connected to any differentiable input");

    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> order;
    topo_visit(node_.get(), seen, order);

    node_->ensure_grad();
    node_->grad[0] += 1.0;

    // Post-order gives parents before children; walk children first.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n, sink);
    }
}

// ---- kernels ----------------------------------------------------------------

namespace {

// C[m×n] += A[m×k] · B[k×n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ. Four-way split accumulators keep the reduction
// vectorizable without reassociation flags.
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    const int k4 = k - (k % 4);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (int p = 0; p < k4; p += 4) {
                s0 += arow[p] * brow[p];
                s1 += arow[p + 1] * brow[p + 1];
                s2 += arow[p + 2] * brow[p + 2];
                s3 += arow[p + 3] * brow[p + 3];
            }
            for (int p = k4; p < k; ++p) s0 += arow[p] * brow[p];
            crow[j] += (s0 + s1) + (s2 + s3);
        }
    }
}

// C[k×n] += A[m×k]ᵀ · B[m×n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        const double* brow = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2) throw ShapeError(std::string(what) + " expects a 2-D tensor, got " +
                                        shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul lhs");
    require_2d(b, "matmul rhs");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = make_op_output(
        {m, n}, {a.handle(), b.handle()},
        [m, k, n](const TensorNode& self, GradientBuffer* sink) {
            const double* g = self.grad.data();
            TensorNode& pa = *self.parents[0];
            TensorNode& pb = *self.parents[1];
            if (double* da = grad_target(pa, sink)) mm_nt(g, pb.data.data(), da, m, n, k);
            if (double* db = grad_target(pb, sink)) mm_tn(pa.data.data(), g, db, m, k, n);
        });
    mm_nn(a.data().data(), b.data().data(), out.node()->data.data(), m, k, n);
    return out;
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    require_2d(x, "conv1d input");
    if (kernel.ndim() != 3)
        throw ShapeError("conv1d kernel expects [C_out×C_in×k], got " + shape_str(kernel.shape()));
    const int c_in = x.dim(0), t_len = x.dim(1);
    const int c_out = kernel.dim(0), kc_in = kernel.dim(1), k = kernel.dim(2);
    if (k % 2 == 0) throw ConfigError("conv1d kernel width must be odd, got " + std::to_string(k));
    if (kc_in != c_in)
        throw ShapeError("conv1d channel mismatch: input " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
    if (bias.ndim() != 1 || bias.dim(0) != c_out)
        throw ShapeError("conv1d bias must be [C_out], got " + shape_str(bias.shape()));
    const int pad = k / 2;

    Tensor out = make_op_output(
        {c_out, t_len}, {x.handle(), kernel.handle(), bias.handle()},
        [c_in, c_out, k, t_len, pad](const TensorNode& self, GradientBuffer* sink) {
            const double* g = self.grad.data();
            TensorNode& px = *self.parents[0];
            TensorNode& pk = *self.parents[1];
            TensorNode& pb = *self.parents[2];
            if (double* dx = grad_target(px, sink)) {
                for (int co = 0; co < c_out; ++co) {
                    const double* grow = g + static_cast<size_t>(co) * t_len;
                    for (int ci = 0; ci < c_in; ++ci) {
                        double* drow = dx + static_cast<size_t>(ci) * t_len;
                        for (int j = 0; j < k; ++j) {
                            const double w =
                                pk.data[(static_cast<size_t>(co) * c_in + ci) * k + j];
                            const int shift = j - pad;  // x index = t + shift
                            const int t0 = std::max(0, -shift);
                            const int t1 = std::min(t_len, t_len - shift);
                            for (int t = t0; t < t1; ++t) drow[t + shift] += w * grow[t];
                        }
                    }
                }
            }
            if (double* dk = grad_target(pk, sink)) {
                for (int co = 0; co < c_out; ++co) {
                    const double* grow = g + static_cast<size_t>(co) * t_len;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* xrow = px.data.data() + static_cast<size_t>(ci) * t_len;
                        for (int j = 0; j < k; ++j) {
                            const int shift = j - pad;
                            const int t0 = std::max(0, -shift);
                            const int t1 = std::min(t_len, t_len - shift);
                            double sum = 0.0;
                            for (int t = t0; t < t1; ++t) sum += grow[t] * xrow[t + shift];
                            dk[(static_cast<size_t>(co) * c_in + ci) * k + j] += sum;
                        }
                    }
                }
            }
            if (double* db = grad_target(pb, sink)) {
                for (int co = 0; co < c_out; ++co) {
                    const double* grow = g + static_cast<size_t>(co) * t_len;
                    double sum = 0.0;
                    for (int t = 0; t < t_len; ++t) sum += grow[t];
                    db[static_cast<size_t>(co)] += sum;
                }
            }
        });

    double* y = out.node()->data.data();
    const double* xd = x.data().data();
    const double* kd = kernel.data().data();
    const double* bd = bias.data().data();
    for (int co = 0; co < c_out; ++co) {
        double* yrow = y + static_cast<size_t>(co) * t_len;
        for (int t = 0; t < t_len; ++t) yrow[t] = bd[co];
        for (int ci = 0; ci < c_in; ++ci) {
            const double* xrow = xd + static_cast<size_t>(ci) * t_len;
            for (int j = 0; j < k; ++j) {
                const double w = kd[(static_cast<size_t>(co) * c_in + ci) * k + j];
                const int shift = j - pad;
                const int t0 = std::max(0, -shift);
                const int t1 = std::min(t_len, t_len - shift);
                for (int t = t0; t < t1; ++t) yrow[t] += w * xrow[t + shift];
            }
        }
    }
    return out;
}

namespace {

// Softmax along contiguous rows of length `width`, `rows` of them.
void softmax_rows_impl(const double* x, double* y, int rows, int width) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<size_t>(r) * width;
        double* yr = y + static_cast<size_t>(r) * width;
        double mx = xr[0];
        for (int i = 1; i < width; ++i) mx = std::max(mx, xr[i]);
        double sum = 0.0;
        for (int i = 0; i < width; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            sum += yr[i];
        }
        const double inv = 1.0 / sum;
        for (int i = 0; i < width; ++i) yr[i] *= inv;
    }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    const int nd = x.ndim();
    int ax = axis < 0 ? nd + axis : axis;
    if (ax < 0 || ax >= nd)
        throw UsageError("softmax axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
    for (double v : x.data())
        if (std::isnan(v)) throw NumericError("softmax input contains NaN");
    if (nd == 2 && ax == 0) return transpose(softmax(transpose(x), 1));
    if (!(nd == 1 || (nd == 2 && ax == 1)))
        throw UsageError("softmax supports 1-D tensors and 2-D rows/columns");

    const int width = x.shape().back();
    const int rows = static_cast<int>(x.size()) / width;
    Tensor out = make_op_output(
        x.shape(), {x.handle()}, [rows, width](const TensorNode& self, GradientBuffer* sink) {
            const double* g = self.grad.data();
            const double* y = self.data.data();
            if (double* dx = grad_target(*self.parents[0], sink)) {
                for (int r = 0; r < rows; ++r) {
                    const size_t off = static_cast<size_t>(r) * width;
                    double dot = 0.0;
                    for (int i = 0; i < width; ++i) dot += g[off + i] * y[off + i];
                    for (int i = 0; i < width; ++i) dx[off + i] += y[off + i] * (g[off + i] - dot);
                }
            }
        });
    softmax_rows_impl(x.data().data(), out.node()->data.data(), rows, width);
    return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
    Tensor out = make_op_output(x.shape(), {x.handle()},
                                [bwd](const TensorNode& self, GradientBuffer* sink) {
                                    TensorNode& px = *self.parents[0];
                                    if (double* dx = grad_target(px, sink)) {
                                        for (size_t i = 0; i < px.size(); ++i)
                                            dx[i] += bwd(px.data[i], self.data[i], self.grad[i]);
                                    }
                                });
    double* y = out.node()->data.data();
    const double* xd = x.data().data();
    for (size_t i = 0; i < x.size(); ++i) y[i] = fwd(xd[i]);
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double, double g) { return v > 0.0 ? g : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x,
        [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                       : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y, double g) { return y * (1.0 - y) * g; });
}

Tensor log_clamped(const Tensor& x, double floor) {
    return unary_op(
        x, [floor](double v) { return std::log(std::max(v, floor)); },
        [floor](double v, double, double g) { return v > floor ? g / v : 0.0; });
}

Tensor scale(const Tensor& x, double factor) {
    return unary_op(
        x, [factor](double v) { return v * factor; },
        [factor](double, double, double g) { return g * factor; });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = make_op_output(
        a.shape(), {a.handle(), b.handle()},
        [](const TensorNode& self, GradientBuffer* sink) {
            const double* g = self.grad.data();
            for (int side = 0; side < 2; ++side)
                if (double* d = grad_target(*self.parents[static_cast<size_t>(side)], sink))
                    for (size_t i = 0; i < self.size(); ++i) d[i] += g[i];
        });
    double* y = out.node()->data.data();
    for (size_t i = 0; i < a.size(); ++i) y[i] = a.data()[i] + b.data()[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = make_op_output(
        a.shape(), {a.handle(), b.handle()},
        [](const TensorNode& self, GradientBuffer* sink) {
            const double* g = self.grad.data();
            if (double* da = grad_target(*self.parents[0], sink))
                for (size_t i = 0; i < self.size(); ++i) da[i] += g[i];
            if (double* db = grad_target(*self.parents[1], sink))
                for (size_t i = 0; i < self.size(); ++i) db[i] -= g[i];
        });
    double* y = out.node()->data.data();
    for (size_t i = 0; i < a.size(); ++i) y[i] = a.data()[i] - b.data()[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = make_op_output(
        a.shape(), {a.handle(), b.handle()},
        [](const TensorNode& self, GradientBuffer* sink) {
            const double* g = self.grad.data();
            TensorNode& pa = *self.parents[0];
            TensorNode& pb = *self.parents[1];
            if (double* da = grad_target(pa, sink))
                for (size_t i = 0; i < self.size(); ++i) da[i] += g[i] * pb.data[i];
            if (double* db = grad_target(pb, sink))
                for (size_t i = 0; i < self.size(); ++i) db[i] += g[i] * pa.data[i];
        });
    double* y = out.node()->data.data();
    for (size_t i = 0; i < a.size(); ++i) y[i] = a.data()[i] * b.data()[i];
    return out;
}

Tensor mean_axis0(const Tensor& x) {
    require_2d(x, "mean_axis0");
    const int t_len = x.dim(0), c = x.dim(1);
    if (t_len < 1) throw UsageError("mean_axis0 on empty sequence");
    Tensor out = make_op_output(
        {c}, {x.handle()}, [t_len, c](const TensorNode& self, GradientBuffer* sink) {
            if (double* dx = grad_target(*self.parents[0], sink)) {
                const double inv = 1.0 / t_len;
                for (int t = 0; t < t_len; ++t)
                    for (int j = 0; j < c; ++j)
                        dx[static_cast<size_t>(t) * c + j] +=
                            self.grad[static_cast<size_t>(j)] * inv;
            }
        });
    double* y = out.node()->data.data();
    const double inv = 1.0 / t_len;
    for (int j = 0; j < c; ++j) y[j] = 0.0;
    for (int t = 0; t < t_len; ++t)
        for (int j = 0; j < c; ++j) y[j] += x.data()[static_cast<size_t>(t) * c + j] * inv;
    return out;
}

Tensor sum_all(const Tensor& x) {
    Tensor out = make_op_output({1}, {x.handle()},
                                [](const TensorNode& self, GradientBuffer* sink) {
                                    TensorNode& px = *self.parents[0];
                                    if (double* dx = grad_target(px, sink)) {
                                        const double g = self.grad[0];
                                        for (size_t i = 0; i < px.size(); ++i) dx[i] += g;
                                    }
                                });
    double sum = 0.0;
    for (double v : x.data()) sum += v;
    out.node()->data[0] = sum;
    return out;
}

Tensor transpose(const Tensor& x) {
    require_2d(x, "transpose");
    const int r = x.dim(0), c = x.dim(1);
    Tensor out = make_op_output(
        {c, r}, {x.handle()}, [r, c](const TensorNode& self, GradientBuffer* sink) {
            if (double* dx = grad_target(*self.parents[0], sink)) {
                for (int i = 0; i < c; ++i)
                    for (int j = 0; j < r; ++j)
                        dx[static_cast<size_t>(j) * c + i] +=
                            self.grad[static_cast<size_t>(i) * r + j];
            }
        });
    double* y = out.node()->data.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            y[static_cast<size_t>(j) * r + i] = x.data()[static_cast<size_t>(i) * c + j];
    return out;
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
    require_2d(x, "layer_norm_rows");
    const int rows = x.dim(0), c = x.dim(1);
    // Save inverse std per row for the backward pass.
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    Tensor out = make_op_output(
        x.shape(), {x.handle()},
        [rows, c, inv_std](const TensorNode& self, GradientBuffer* sink) {
            double* dx = grad_target(*self.parents[0], sink);
            if (!dx) return;
            for (int r = 0; r < rows; ++r) {
                const size_t off = static_cast<size_t>(r) * c;
                const double* g = self.grad.data() + off;
                const double* y = self.data.data() + off;
                double gmean = 0.0, gymean = 0.0;
                for (int j = 0; j < c; ++j) {
                    gmean += g[j];
                    gymean += g[j] * y[j];
                }
                gmean /= c;
                gymean /= c;
                const double is = (*inv_std)[static_cast<size_t>(r)];
                for (int j = 0; j < c; ++j) dx[off + j] += is * (g[j] - gmean - y[j] * gymean);
            }
        });
    double* y = out.node()->data.data();
    const double* xd = x.data().data();
    for (int r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r) * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += xd[off + j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = xd[off + j] - mean;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(r)] = is;
        for (int j = 0; j < c; ++j) y[off + j] = (xd[off + j] - mean) * is;
    }
    return out;
}

Tensor scale_columns(const Tensor& x, const Tensor& g) {
    require_2d(x, "scale_columns");
    const int rows = x.dim(0), c = x.dim(1);
    if (g.ndim() != 1 || g.dim(0) != c)
        throw ShapeError("scale_columns gain must be [C]=" + std::to_string(c) + ", got " +
                         shape_str(g.shape()));
    Tensor out = make_op_output(
        x.shape(), {x.handle(), g.handle()},
        [rows, c](const TensorNode& self, GradientBuffer* sink) {
            const double* grad = self.grad.data();
            TensorNode& px = *self.parents[0];
            TensorNode& pg = *self.parents[1];
            if (double* dx = grad_target(px, sink)) {
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < c; ++j)
                        dx[static_cast<size_t>(r) * c + j] +=
                            grad[static_cast<size_t>(r) * c + j] * pg.data[static_cast<size_t>(j)];
            }
            if (double* dg = grad_target(pg, sink)) {
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < c; ++j)
                        dg[static_cast<size_t>(j)] += grad[static_cast<size_t>(r) * c + j] *
                                                      px.data[static_cast<size_t>(r) * c + j];
            }
        });
    double* y = out.node()->data.data();
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j)
            y[static_cast<size_t>(r) * c + j] =
                x.data()[static_cast<size_t>(r) * c + j] * g.data()[static_cast<size_t>(j)];
    return out;
}

Tensor add_row_vector(const Tensor& x, const Tensor& b) {
    require_2d(x, "add_row_vector");
    const int rows = x.dim(0), c = x.dim(1);
    if (b.ndim() != 1 || b.dim(0) != c)
        throw ShapeError("add_row_vector bias must be [C]=" + std::to_string(c) + ", got " +
                         shape_str(b.shape()));
    Tensor out = make_op_output(
        x.shape(), {x.handle(), b.handle()},
        [rows, c](const TensorNode& self, GradientBuffer* sink) {
            const double* g = self.grad.data();
            if (double* dx = grad_target(*self.parents[0], sink))
                for (size_t i = 0; i < self.size(); ++i) dx[i] += g[i];
            if (double* db = grad_target(*self.parents[1], sink)) {
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < c; ++j)
                        db[static_cast<size_t>(j)] += g[static_cast<size_t>(r) * c + j];
            }
        });
    double* y = out.node()->data.data();
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j)
            y[static_cast<size_t>(r) * c + j] =
                x.data()[static_cast<size_t>(r) * c + j] + b.data()[static_cast<size_t>(j)];
    return out;
}

Tensor slice_columns(const Tensor& x, int from, int to) {
    require_2d(x, "slice_columns");
    const int rows = x.dim(0), c = x.dim(1);
    if (from < 0 || to > c || from >= to)
        throw UsageError("slice_columns [" + std::to_string(from) + "," + std::to_string(to) +
                         ") invalid for width " + std::to_string(c));
    const int w = to - from;
    Tensor out = make_op_output(
        {rows, w}, {x.handle()},
        [rows, c, from, w](const TensorNode& self, GradientBuffer* sink) {
            if (double* dx = grad_target(*self.parents[0], sink)) {
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < w; ++j)
                        dx[static_cast<size_t>(r) * c + from + j] +=
                            self.grad[static_cast<size_t>(r) * w + j];
            }
        });
    double* y = out.node()->data.data();
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < w; ++j)
            y[static_cast<size_t>(r) * w + j] = x.data()[static_cast<size_t>(r) * c + from + j];
    return out;
}

Tensor concat_columns(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw UsageError("concat_columns of zero tensors");
    const int rows = parts[0].dim(0);
    int total = 0;
    std::vector<NodePtr> handles;
    std::vector<int> widths;
    for (const auto& p : parts) {
        require_2d(p, "concat_columns part");
        if (p.dim(0) != rows)
            throw ShapeError("concat_columns row mismatch: " + shape_str(p.shape()));
        widths.push_back(p.dim(1));
        total += p.dim(1);
        handles.push_back(p.handle());
    }
    Tensor out = make_op_output(
        {rows, total}, std::move(handles),
        [rows, total, widths](const TensorNode& self, GradientBuffer* sink) {
            int off = 0;
            for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                const int w = widths[pi];
                if (double* dp = grad_target(*self.parents[pi], sink)) {
                    for (int r = 0; r < rows; ++r)
                        for (int j = 0; j < w; ++j)
                            dp[static_cast<size_t>(r) * w + j] +=
                                self.grad[static_cast<size_t>(r) * total + off + j];
                }
                off += w;
            }
        });
    double* y = out.node()->data.data();
    int off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const int w = widths[pi];
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < w; ++j)
                y[static_cast<size_t>(r) * total + off + j] =
                    parts[pi].data()[static_cast<size_t>(r) * w + j];
        off += w;
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    Tensor out =
        make_op_output(std::move(shape), {x.handle()},
                       [](const TensorNode& self, GradientBuffer* sink) {
                           if (double* dx = grad_target(*self.parents[0], sink))
                               for (size_t i = 0; i < self.size(); ++i) dx[i] += self.grad[i];
                       });
    std::copy(x.data().begin(), x.data().end(), out.node()->data.begin());
    return out;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
    if (!training || rate == 0.0) return x;
    // Inverted scaling: kept units are boosted so inference needs no rescale.
    auto mask = std::make_shared<std::vector<double>>(x.size());
    const double keep = 1.0 - rate;
    const double boost = 1.0 / keep;
    for (auto& m : *mask) m = rng.uniform() < keep ? boost : 0.0;
    Tensor out = make_op_output(
        x.shape(), {x.handle()}, [mask](const TensorNode& self, GradientBuffer* sink) {
            if (double* dx = grad_target(*self.parents[0], sink))
                for (size_t i = 0; i < self.size(); ++i) dx[i] += self.grad[i] * (*mask)[i];
        });
    double* y = out.node()->data.data();
    for (size_t i = 0; i < x.size(); ++i) y[i] = x.data()[i] * (*mask)[i];
    return out;
}

Tensor pick(const Tensor& x, int index) {
    if (index < 0 || static_cast<size_t>(index) >= x.size())
        throw UsageError("pick index " + std::to_string(index) + " out of range for " +
                         shape_str(x.shape()));
    Tensor out = make_op_output({1}, {x.handle()},
                                [index](const TensorNode& self, GradientBuffer* sink) {
                                    if (double* dx = grad_target(*self.parents[0], sink))
                                        dx[static_cast<size_t>(index)] += self.grad[0];
                                });
    out.node()->data[0] = x.data()[static_cast<size_t>(index)];
    return out;
}

Tensor scaled_dot_product(const Tensor& q, const Tensor& k, const Tensor& v) {
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    return matmul(softmax(scores, -1), v);
}

Tensor uniform_random(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace mtps
