#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "attncodec/error.hpp"

namespace attncodec {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ']';
    return os.str();
}

/// Dense row-major array of doubles. A rank-0 tensor is a scalar.
class Tensor {
  public:
    Tensor() : shape_{0} {}
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        require(shape_size(shape_) == data_.size(),
                "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return Tensor(Shape{rows, cols}, std::move(data));
    }
    static Tensor identity(std::size_t n) {
        Tensor t(Shape{n, n});
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    /// Length of the last axis (1 for scalars).
    std::size_t last_dim() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double item() const {
        require(data_.size() == 1, "item() on non-scalar tensor " + shape_string(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

  private:
    Shape shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

enum class OpKind { matmul, add, mul, scale, transpose, softmax_rows, layernorm, gelu, mse, concat, slice, mean };

inline const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::transpose: return "transpose";
        case OpKind::softmax_rows: return "softmax_rows";
        case OpKind::layernorm: return "layernorm";
        case OpKind::gelu: return "gelu";
        case OpKind::mse: return "mse";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::mean: return "mean";
    }
    return "?";
}

/// Non-tensor operands. `scalar` for scale; `axis`/`begin`/`end` for
/// concat and slice; `eps` for layernorm.
struct OpAttrs {
    double scalar = 1.0;
    std::size_t axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    double eps = 1e-5;
};

/// Handle to a node of a Graph.
struct Var {
    std::size_t id = 0;
};

namespace detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    return cdf + x * pdf;
}

[[noreturn]] inline void shape_error(OpKind kind, std::initializer_list<const Tensor*> ins) {
    std::string msg = std::string(op_name(kind)) + ": incompatible shapes";
    for (const Tensor* t : ins) msg += " " + shape_string(t->shape());
    throw ContractError(msg);
}

// C = A(m,k) * B(k,n), optionally with either operand transposed in place.
inline void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                 bool trans_a, bool trans_b, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = trans_a ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
            } else {
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

}  // namespace detail

/// Tape of tensor operations supporting reverse-mode differentiation.
///
/// Every op output becomes a node so later ops can refer to it; backward
/// bookkeeping (inputs, saved activations) is kept only when some input
/// requires a gradient. A graph is single-threaded; use one per worker.
class Graph {
  public:
    Var constant(Tensor value) { return push_leaf(std::make_shared<const Tensor>(std::move(value)), false); }
    /// Shares the tensor without copying (model weights).
    Var constant(std::shared_ptr<const Tensor> value) { return push_leaf(std::move(value), false); }
    Var parameter(Tensor value) { return push_leaf(std::make_shared<const Tensor>(std::move(value)), true); }

    const Tensor& value(Var v) const { return *node(v).value; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// dLoss/dv after backward(); zero tensor when v received no gradient.
    const Tensor& grad(Var v) const {
        const Node& n = node(v);
        require(n.requires_grad, "grad() requested for a node that does not require grad");
        return n.grad;
    }

    Var apply(OpKind kind, std::initializer_list<Var> inputs, const OpAttrs& attrs = {}) {
        return apply(kind, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
    }

    Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {}) {
        std::vector<const Tensor*> in;
        in.reserve(inputs.size());
        bool needs_grad = false;
        for (Var v : inputs) {
            in.push_back(node(v).value.get());
            needs_grad = needs_grad || node(v).requires_grad;
        }
        std::vector<Tensor> saved;
        Tensor out = forward(kind, in, attrs, saved);
        if (!out.all_finite()) throw NumericError(std::string(op_name(kind)) + ": non-finite output");

        Node n;
        n.value = std::make_shared<const Tensor>(std::move(out));
        n.requires_grad = needs_grad;
        if (needs_grad) {
            n.kind = kind;
            n.attrs = attrs;
            for (Var v : inputs) n.inputs.push_back(v.id);
            n.saved = std::move(saved);
            n.has_op = true;
        }
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    /// Fills grad() of every requires-grad node reachable from `loss`.
    /// Previous gradients are discarded.
    void backward(Var loss) {
        require(value(loss).size() == 1,
                "backward: loss must be scalar, got shape " + shape_string(value(loss).shape()));
        require(node(loss).requires_grad, "backward: loss does not depend on any parameter");
        for (Node& n : nodes_) {
            if (n.requires_grad) n.grad = Tensor(n.value->shape(), 0.0);
        }
        nodes_[loss.id].grad[0] = 1.0;
        for (std::size_t id = loss.id + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (!n.has_op) continue;
            propagate(n);
        }
    }

  private:
    struct Node {
        std::shared_ptr<const Tensor> value;
        bool requires_grad = false;
        bool has_op = false;
        OpKind kind = OpKind::add;
        OpAttrs attrs;
        std::vector<std::size_t> inputs;
        std::vector<Tensor> saved;
        Tensor grad;
    };

    const Node& node(Var v) const {
        require(v.id < nodes_.size(), "unknown graph node " + std::to_string(v.id));
        return nodes_[v.id];
    }

    Var push_leaf(std::shared_ptr<const Tensor> value, bool requires_grad) {
        require(value != nullptr, "null tensor");
        if (!value->all_finite()) throw NumericError("leaf tensor contains non-finite values");
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    static Tensor forward(OpKind kind, const std::vector<const Tensor*>& in, const OpAttrs& attrs,
                          std::vector<Tensor>& saved) {
        auto arity = [&](std::size_t n) {
            require(in.size() == n, std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs, got " +
                                        std::to_string(in.size()));
        };
        switch (kind) {
            case OpKind::matmul: {
                arity(2);
                const Tensor &a = *in[0], &b = *in[1];
                if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) detail::shape_error(kind, {&a, &b});
                Tensor c(Shape{a.dim(0), b.dim(1)});
                detail::gemm(a.data().data(), b.data().data(), c.data().data(), a.dim(0), a.dim(1), b.dim(1), false,
                             false, false);
                return c;
            }
            case OpKind::add: {
                arity(2);
                const Tensor &a = *in[0], &b = *in[1];
                Tensor c = a;
                if (a.shape() == b.shape()) {
                    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
                } else if (b.rank() == 1 && a.rank() >= 1 && a.last_dim() == b.dim(0)) {
                    const std::size_t d = b.dim(0);
                    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i % d];
                } else {
                    detail::shape_error(kind, {&a, &b});
                }
                return c;
            }
            case OpKind::mul: {
                arity(2);
                const Tensor &a = *in[0], &b = *in[1];
                if (a.shape() != b.shape()) detail::shape_error(kind, {&a, &b});
                Tensor c = a;
                for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
                return c;
            }
            case OpKind::scale: {
                arity(1);
                Tensor c = *in[0];
                for (double& v : c.data()) v *= attrs.scalar;
                return c;
            }
            case OpKind::transpose: {
                arity(1);
                const Tensor& a = *in[0];
                if (a.rank() != 2) detail::shape_error(kind, {&a});
                Tensor c(Shape{a.dim(1), a.dim(0)});
                for (std::size_t r = 0; r < a.dim(0); ++r)
                    for (std::size_t col = 0; col < a.dim(1); ++col) c(col, r) = a(r, col);
                return c;
            }
            case OpKind::softmax_rows: {
                arity(1);
                const Tensor& a = *in[0];
                if (a.rank() == 0) detail::shape_error(kind, {&a});
                Tensor c = a;
                const std::size_t d = a.last_dim();
                for (std::size_t r = 0; r * d < c.size(); ++r) {
                    double* row = c.data().data() + r * d;
                    const double mx = *std::max_element(row, row + d);
                    double sum = 0.0;
                    for (std::size_t j = 0; j < d; ++j) sum += (row[j] = std::exp(row[j] - mx));
                    for (std::size_t j = 0; j < d; ++j) row[j] /= sum;
                }
                saved.push_back(c);
                return c;
            }
            case OpKind::layernorm: {
                arity(3);
                const Tensor &x = *in[0], &gain = *in[1], &bias = *in[2];
                if (x.rank() == 0 || gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != x.last_dim() ||
                    bias.dim(0) != x.last_dim())
                    detail::shape_error(kind, {&x, &gain, &bias});
                const std::size_t d = x.last_dim();
                const std::size_t rows = x.size() / d;
                Tensor xhat(x.shape());
                Tensor inv_std(Shape{rows});
                Tensor y(x.shape());
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* xr = x.data().data() + r * d;
                    double mean = 0.0;
                    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
                    mean /= static_cast<double>(d);
                    double var = 0.0;
                    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
                    var /= static_cast<double>(d);
                    const double is = 1.0 / std::sqrt(var + attrs.eps);
                    inv_std[r] = is;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double h = (xr[j] - mean) * is;
                        xhat[r * d + j] = h;
                        y[r * d + j] = h * gain[j] + bias[j];
                    }
                }
                saved.push_back(std::move(xhat));
                saved.push_back(std::move(inv_std));
                return y;
            }
            case OpKind::gelu: {
                arity(1);
                Tensor c = *in[0];
                for (double& v : c.data()) v = detail::gelu(v);
                return c;
            }
            case OpKind::mse: {
                arity(2);
                const Tensor &a = *in[0], &b = *in[1];
                if (a.shape() != b.shape() || a.size() == 0) detail::shape_error(kind, {&a, &b});
                double s = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
                return Tensor::scalar(s / static_cast<double>(a.size()));
            }
            case OpKind::concat: {
                require(!in.empty(), "concat: no inputs");
                require(attrs.axis <= 1, "concat: axis must be 0 or 1");
                const std::size_t other = 1 - attrs.axis;
                std::size_t total = 0;
                for (const Tensor* t : in) {
                    if (t->rank() != 2 || t->dim(other) != in[0]->dim(other)) {
                        std::string msg = "concat: incompatible shapes";
                        for (const Tensor* u : in) msg += " " + shape_string(u->shape());
                        throw ContractError(msg);
                    }
                    total += t->dim(attrs.axis);
                }
                Shape shape = in[0]->shape();
                shape[attrs.axis] = total;
                Tensor c(shape);
                std::size_t offset = 0;
                for (const Tensor* t : in) {
                    for (std::size_t r = 0; r < t->dim(0); ++r)
                        for (std::size_t col = 0; col < t->dim(1); ++col) {
                            if (attrs.axis == 0)
                                c(offset + r, col) = (*t)(r, col);
                            else
                                c(r, offset + col) = (*t)(r, col);
                        }
                    offset += t->dim(attrs.axis);
                }
                return c;
            }
            case OpKind::slice: {
                arity(1);
                const Tensor& a = *in[0];
                if (a.rank() != 2 || attrs.axis > 1 || attrs.begin >= attrs.end || attrs.end > a.dim(attrs.axis))
                    throw ContractError("slice: range [" + std::to_string(attrs.begin) + "," +
                                        std::to_string(attrs.end) + ") on axis " + std::to_string(attrs.axis) +
                                        " invalid for shape " + shape_string(a.shape()));
                Shape shape = a.shape();
                shape[attrs.axis] = attrs.end - attrs.begin;
                Tensor c(shape);
                for (std::size_t r = 0; r < shape[0]; ++r)
                    for (std::size_t col = 0; col < shape[1]; ++col)
                        c(r, col) = attrs.axis == 0 ? a(r + attrs.begin, col) : a(r, col + attrs.begin);
                return c;
            }
            case OpKind::mean: {
                arity(1);
                const Tensor& a = *in[0];
                if (a.size() == 0) detail::shape_error(kind, {&a});
                double s = 0.0;
                for (double v : a.data()) s += v;
                return Tensor::scalar(s / static_cast<double>(a.size()));
            }
        }
        throw ContractError("unknown op");
    }

    void accumulate(std::size_t id, const Tensor& g) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return;
        for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }

    void propagate(const Node& n) {
        const Tensor& gout = n.grad;
        auto in = [&](std::size_t i) -> const Tensor& { return *nodes_[n.inputs[i]].value; };
        auto wants = [&](std::size_t i) { return nodes_[n.inputs[i]].requires_grad; };
        switch (n.kind) {
            case OpKind::matmul: {
                const Tensor &a = in(0), &b = in(1);
                const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
                if (wants(0)) {
                    Tensor ga(a.shape());
                    detail::gemm(gout.data().data(), b.data().data(), ga.data().data(), m, cols, k, false, true, false);
                    accumulate(n.inputs[0], ga);
                }
                if (wants(1)) {
                    Tensor gb(b.shape());
                    detail::gemm(a.data().data(), gout.data().data(), gb.data().data(), k, m, cols, true, false, false);
                    accumulate(n.inputs[1], gb);
                }
                break;
            }
            case OpKind::add: {
                if (wants(0)) accumulate(n.inputs[0], gout);
                if (wants(1)) {
                    const Tensor& b = in(1);
                    if (b.shape() == gout.shape()) {
                        accumulate(n.inputs[1], gout);
                    } else {
                        Tensor gb(b.shape());
                        const std::size_t d = b.dim(0);
                        for (std::size_t i = 0; i < gout.size(); ++i) gb[i % d] += gout[i];
                        accumulate(n.inputs[1], gb);
                    }
                }
                break;
            }
            case OpKind::mul: {
                const Tensor &a = in(0), &b = in(1);
                if (wants(0)) {
                    Tensor ga = gout;
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b[i];
                    accumulate(n.inputs[0], ga);
                }
                if (wants(1)) {
                    Tensor gb = gout;
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a[i];
                    accumulate(n.inputs[1], gb);
                }
                break;
            }
            case OpKind::scale: {
                Tensor g = gout;
                for (double& v : g.data()) v *= n.attrs.scalar;
                accumulate(n.inputs[0], g);
                break;
            }
            case OpKind::transpose: {
                Tensor g(Shape{gout.dim(1), gout.dim(0)});
                for (std::size_t r = 0; r < gout.dim(0); ++r)
                    for (std::size_t c = 0; c < gout.dim(1); ++c) g(c, r) = gout(r, c);
                accumulate(n.inputs[0], g);
                break;
            }
            case OpKind::softmax_rows: {
                const Tensor& y = n.saved[0];
                const std::size_t d = y.last_dim();
                Tensor g(y.shape());
                for (std::size_t r = 0; r * d < y.size(); ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < d; ++j) dot += gout[r * d + j] * y[r * d + j];
                    for (std::size_t j = 0; j < d; ++j) g[r * d + j] = y[r * d + j] * (gout[r * d + j] - dot);
                }
                accumulate(n.inputs[0], g);
                break;
            }
            case OpKind::layernorm: {
                const Tensor& xhat = n.saved[0];
                const Tensor& inv_std = n.saved[1];
                const Tensor& gain = in(1);
                const std::size_t d = xhat.last_dim();
                const std::size_t rows = xhat.size() / d;
                Tensor gx(xhat.shape()), gg(gain.shape()), gb(gain.shape());
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double go = gout[r * d + j];
                        const double h = xhat[r * d + j];
                        gg[j] += go * h;
                        gb[j] += go;
                        const double dh = go * gain[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h;
                    }
                    mean_dh /= static_cast<double>(d);
                    mean_dh_h /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dh = gout[r * d + j] * gain[j];
                        gx[r * d + j] = inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
                    }
                }
                if (wants(0)) accumulate(n.inputs[0], gx);
                if (wants(1)) accumulate(n.inputs[1], gg);
                if (wants(2)) accumulate(n.inputs[2], gb);
                break;
            }
            case OpKind::gelu: {
                const Tensor& x = in(0);
                Tensor g = gout;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] *= detail::gelu_grad(x[i]);
                accumulate(n.inputs[0], g);
                break;
            }
            case OpKind::mse: {
                const Tensor &a = in(0), &b = in(1);
                const double s = 2.0 * gout[0] / static_cast<double>(a.size());
                Tensor ga(a.shape());
                for (std::size_t i = 0; i < a.size(); ++i) ga[i] = s * (a[i] - b[i]);
                if (wants(0)) accumulate(n.inputs[0], ga);
                if (wants(1)) {
                    for (double& v : ga.data()) v = -v;
                    accumulate(n.inputs[1], ga);
                }
                break;
            }
            case OpKind::concat: {
                std::size_t offset = 0;
                for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                    const Tensor& t = in(i);
                    if (wants(i)) {
                        Tensor g(t.shape());
                        for (std::size_t r = 0; r < t.dim(0); ++r)
                            for (std::size_t c = 0; c < t.dim(1); ++c)
                                g(r, c) = n.attrs.axis == 0 ? gout(offset + r, c) : gout(r, offset + c);
                        accumulate(n.inputs[i], g);
                    }
                    offset += t.dim(n.attrs.axis);
                }
                break;
            }
            case OpKind::slice: {
                Tensor g(in(0).shape());
                for (std::size_t r = 0; r < gout.dim(0); ++r)
                    for (std::size_t c = 0; c < gout.dim(1); ++c) {
                        if (n.attrs.axis == 0)
                            g(r + n.attrs.begin, c) = gout(r, c);
                        else
                            g(r, c + n.attrs.begin) = gout(r, c);
                    }
                accumulate(n.inputs[0], g);
                break;
            }
            case OpKind::mean: {
                const Tensor& a = in(0);
                Tensor g(a.shape(), gout[0] / static_cast<double>(a.size()));
                accumulate(n.inputs[0], g);
                break;
            }
        }
    }

    std::vector<Node> nodes_;
};

// Thin wrappers so model code reads like math.
namespace ops {
inline Var matmul(Graph& g, Var a, Var b) { return g.apply(OpKind::matmul, {a, b}); }
inline Var add(Graph& g, Var a, Var b) { return g.apply(OpKind::add, {a, b}); }
inline Var mul(Graph& g, Var a, Var b) { return g.apply(OpKind::mul, {a, b}); }
inline Var scale(Graph& g, Var a, double s) { return g.apply(OpKind::scale, {a}, OpAttrs{.scalar = s}); }
inline Var transpose(Graph& g, Var a) { return g.apply(OpKind::transpose, {a}); }
inline Var softmax_rows(Graph& g, Var a) { return g.apply(OpKind::softmax_rows, {a}); }
inline Var layernorm(Graph& g, Var x, Var gain, Var bias, double eps = 1e-5) {
    return g.apply(OpKind::layernorm, {x, gain, bias}, OpAttrs{.eps = eps});
}
inline Var gelu(Graph& g, Var a) { return g.apply(OpKind::gelu, {a}); }
inline Var mse(Graph& g, Var a, Var b) { return g.apply(OpKind::mse, {a, b}); }
inline Var mean(Graph& g, Var a) { return g.apply(OpKind::mean, {a}); }
inline Var concat(Graph& g, std::span<const Var> parts, std::size_t axis) {
    return g.apply(OpKind::concat, parts, OpAttrs{.axis = axis});
}
inline Var slice(Graph& g, Var a, std::size_t axis, std::size_t begin, std::size_t end) {
    return g.apply(OpKind::slice, {a}, OpAttrs{.axis = axis, .begin = begin, .end = end});
}
}  // namespace ops

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update. State buffers are zero-initialised on the
/// first call.
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
    require(cfg.lr > 0.0, "adam_step: learning rate must be positive");
    require(params.size() == grads.size(), "adam_step: params/grads count mismatch");
    if (state.step == 0) {
        state.m.clear();
        state.v.clear();
        for (const Tensor& p : params) {
            state.m.emplace_back(p.shape(), 0.0);
            state.v.emplace_back(p.shape(), 0.0);
        }
    }
    require(state.m.size() == params.size(), "adam_step: state does not match parameter list");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].shape() == grads[i].shape() && params[i].shape() == state.m[i].shape(),
                "adam_step: shape mismatch for parameter " + std::to_string(i));
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace attncodec
