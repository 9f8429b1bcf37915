#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "abi/num/autodiff.hpp"
#include "abi/num/tensor.hpp"

namespace abi::num {

namespace detail {

// Strides into an input of shape `in` while walking an output of shape `out`
// (trailing alignment); broadcast axes get stride 0.
inline std::vector<std::int64_t> bcast_strides(const Shape& in, const Shape& out) {
    auto st = row_major_strides(in);
    std::vector<std::int64_t> r(out.size(), 0);
    std::size_t off = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i)
        r[off + i] = in[i] == 1 && out[off + i] != 1 ? 0 : st[i];
    return r;
}

// f(a_i, b_i, out_linear_index) evaluated over the broadcast extent of a and b.
template <typename S, typename F>
void zip_bcast2(const Tensor<S>& a, const Tensor<S>& b, const Shape& os, S* out, F f) {
    const S* pa = a.data().data();
    const S* pb = b.data().data();
    const std::int64_t n = shape_numel(os);
    if (a.shape() == os && b.shape() == os) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = f(pa[i], pb[i], i);
        return;
    }
    const auto sa = bcast_strides(a.shape(), os);
    const auto sb = bcast_strides(b.shape(), os);
    const std::int64_t r = static_cast<std::int64_t>(os.size());
    std::vector<std::int64_t> idx(os.size(), 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = f(pa[ia], pb[ib], i);
        for (std::int64_t d = r - 1; d >= 0; --d) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            ia -= sa[d] * os[d];
            ib -= sb[d] * os[d];
        }
    }
}

template <typename S>
std::shared_ptr<GradNode<S>> make_node(const Shape& shape, const char* label,
                                       std::vector<std::shared_ptr<GradNode<S>>> parents,
                                       std::function<void(const Tensor<S>&)> backprop) {
    auto node = std::make_shared<GradNode<S>>();
    node->shape = shape;
    node->label = label;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
    return node;
}

}  // namespace detail

// Sums a gradient of shape g down to `target` (inverse of broadcasting).
template <typename S>
Tensor<S> reduce_to_shape(const Tensor<S>& g, const Shape& target) {
    if (g.shape() == target) return g.detached();
    Tensor<S> out(target);
    const auto st = detail::bcast_strides(target, g.shape());
    S* po = out.mutable_data().data();
    const S* pg = g.data().data();
    const std::int64_t n = g.numel();
    const std::int64_t r = static_cast<std::int64_t>(g.shape().size());
    std::vector<std::int64_t> idx(g.shape().size(), 0);
    std::int64_t io = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        po[io] += pg[i];
        for (std::int64_t d = r - 1; d >= 0; --d) {
            ++idx[d];
            io += st[d];
            if (idx[d] < g.shape()[d]) break;
            idx[d] = 0;
            io -= st[d] * g.shape()[d];
        }
    }
    return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape);

// --- elementwise binary ops ---

namespace detail {

// F computes the forward value; DA/DB map (a, b, upstream) to the gradient
// contribution at each broadcast position.
template <typename S, typename F, typename DA, typename DB>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, const char* label, F f, DA da, DB db) {
    Shape os = broadcast_shape(a.shape(), b.shape());
    Tensor<S> out(os);
    zip_bcast2(a, b, os, out.mutable_data().data(), [&](S x, S y, std::int64_t) { return f(x, y); });
    if (grad_enabled() && (a.tracked() || b.tracked())) {
        std::vector<std::shared_ptr<GradNode<S>>> parents;
        if (a.tracked()) parents.push_back(a.node());
        if (b.tracked()) parents.push_back(b.node());
        auto an = a.node();
        auto bn = b.node();
        auto av = a.detached();
        auto bv = b.detached();
        out.set_node(make_node<S>(os, label, std::move(parents), [=](const Tensor<S>& up) {
            const S* pu = up.data().data();
            if (an) {
                Tensor<S> ga(up.shape());
                zip_bcast2(av, bv, up.shape(), ga.mutable_data().data(),
                           [&](S x, S y, std::int64_t i) { return da(x, y, pu[i]); });
                accumulate_grad(an, reduce_to_shape(ga, av.shape()));
            }
            if (bn) {
                Tensor<S> gb(up.shape());
                zip_bcast2(av, bv, up.shape(), gb.mutable_data().data(),
                           [&](S x, S y, std::int64_t i) { return db(x, y, pu[i]); });
                accumulate_grad(bn, reduce_to_shape(gb, bv.shape()));
            }
        }));
    }
    return out;
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, "add", [](S x, S y) { return x + y; }, [](S, S, S u) { return u; }, [](S, S, S u) { return u; });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, "sub", [](S x, S y) { return x - y; }, [](S, S, S u) { return u; }, [](S, S, S u) { return -u; });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, "mul", [](S x, S y) { return x * y; }, [](S, S y, S u) { return u * y; },
        [](S x, S, S u) { return u * x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, "div", [](S x, S y) { return x / y; }, [](S, S y, S u) { return u / y; },
        [](S x, S y, S u) { return -u * x / (y * y); });
}

// Ties route the gradient to the first argument.
template <typename S>
Tensor<S> maximum(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, "maximum", [](S x, S y) { return x >= y ? x : y; },
        [](S x, S y, S u) { return x >= y ? u : S(0); }, [](S x, S y, S u) { return x >= y ? S(0) : u; });
}

template <typename S>
Tensor<S> minimum(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, "minimum", [](S x, S y) { return x <= y ? x : y; },
        [](S x, S y, S u) { return x <= y ? u : S(0); }, [](S x, S y, S u) { return x <= y ? S(0) : u; });
}

// --- elementwise unary ops ---

namespace detail {

template <typename S, typename F, typename D>
Tensor<S> unary_op(const Tensor<S>& x, const char* label, F f, D dfdx) {
    Tensor<S> out(x.shape());
    const S* px = x.data().data();
    S* po = out.mutable_data().data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
    if (grad_enabled() && x.tracked()) {
        auto xn = x.node();
        auto xv = x.detached();
        auto yv = out.detached();
        out.set_node(make_node<S>(x.shape(), label, {xn}, [=](const Tensor<S>& up) {
            Tensor<S> g(xv.shape());
            const S* pu = up.data().data();
            const S* pxv = xv.data().data();
            const S* pyv = yv.data().data();
            S* pg = g.mutable_data().data();
            for (std::int64_t i = 0; i < xv.numel(); ++i) pg[i] = dfdx(pxv[i], pyv[i]) * pu[i];
            accumulate_grad(xn, g);
        }));
    }
    return out;
}

template <typename S>
S stable_sigmoid(S x) {
    if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
    S e = std::exp(x);
    return e / (S(1) + e);
}

template <typename S>
S stable_softplus(S x) {
    if (x > S(30)) return x;
    if (x < S(-30)) return std::exp(x);
    return std::log1p(std::exp(x));
}

}  // namespace detail

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
    return detail::unary_op(
        x, "neg", [](S v) { return -v; }, [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
    return detail::unary_op(
        x, "exp", [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
    return detail::unary_op(
        x, "log", [](S v) { return std::log(v); },
        [](S v, S) { return S(1) / std::max(v, S(1e-12)); });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
    return detail::unary_op(
        x, "sqrt", [](S v) { return std::sqrt(v); }, [](S, S y) { return S(0.5) / y; });
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
    return detail::unary_op(
        x, "square", [](S v) { return v * v; }, [](S v, S) { return S(2) * v; });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
    return detail::unary_op(
        x, "tanh", [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    return detail::unary_op(
        x, "sigmoid", [](S v) { return detail::stable_sigmoid(v); }, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
    return detail::unary_op(
        x, "softplus", [](S v) { return detail::stable_softplus(v); },
        [](S v, S) { return detail::stable_sigmoid(v); });
}

// Exact erf-based form; smooth everywhere so finite differences agree tightly.
template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return detail::unary_op(
        x, "gelu",
        [](S v) {
            double d = static_cast<double>(v);
            return static_cast<S>(d * 0.5 * (1.0 + std::erf(d * inv_sqrt2)));
        },
        [](S v, S) {
            double d = static_cast<double>(v);
            double cdf = 0.5 * (1.0 + std::erf(d * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * d * d);
            return static_cast<S>(cdf + d * pdf);
        });
}

template <typename S>
Tensor<S> sin(const Tensor<S>& x) {
    return detail::unary_op(
        x, "sin", [](S v) { return std::sin(v); }, [](S v, S) { return std::cos(v); });
}

template <typename S>
Tensor<S> cos(const Tensor<S>& x) {
    return detail::unary_op(
        x, "cos", [](S v) { return std::cos(v); }, [](S v, S) { return -std::sin(v); });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
    return detail::unary_op(
        x, "add_scalar", [c](S v) { return v + c; }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& x, S c) {
    return detail::unary_op(
        x, "mul_scalar", [c](S v) { return v * c; }, [c](S, S) { return c; });
}

template <typename S>
Tensor<S> one_minus(const Tensor<S>& x) {
    return detail::unary_op(
        x, "one_minus", [](S v) { return S(1) - v; }, [](S, S) { return S(-1); });
}

// --- matmul ---

namespace detail {

template <typename S>
using ConstMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using MutMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// out(m,n) = op(A)·op(B), optionally accumulating.
template <typename S>
void gemm(const S* a, std::int64_t ar, std::int64_t ac, bool ta, const S* b, std::int64_t br, std::int64_t bc,
          bool tb, S* out, bool acc) {
    ConstMap<S> A(a, ar, ac);
    ConstMap<S> B(b, br, bc);
    MutMap<S> O(out, ta ? ac : ar, tb ? br : bc);
    if (!ta && !tb)
        acc ? void(O.noalias() += A * B) : void(O.noalias() = A * B);
    else if (ta && !tb)
        acc ? void(O.noalias() += A.transpose() * B) : void(O.noalias() = A.transpose() * B);
    else if (!ta && tb)
        acc ? void(O.noalias() += A * B.transpose()) : void(O.noalias() = A * B.transpose());
    else
        acc ? void(O.noalias() += A.transpose() * B.transpose()) : void(O.noalias() = A.transpose() * B.transpose());
}

}  // namespace detail

// a: (..., m, k), b: (k, n). Leading axes of a fold into the row dimension.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.dim() < 2 || b.dim() != 2)
        throw std::invalid_argument("matmul: need (...,m,k) x (k,n), got " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const std::int64_t k = a.shape().back();
    if (k != b.extent(0))
        throw std::invalid_argument("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const std::int64_t n = b.extent(1);
    const std::int64_t rows = a.numel() / k;
    Shape os(a.shape().begin(), a.shape().end() - 1);
    os.push_back(n);
    Tensor<S> out(os);
    detail::gemm(a.data().data(), rows, k, false, b.data().data(), k, n, false, out.mutable_data().data(), false);
    if (grad_enabled() && (a.tracked() || b.tracked())) {
        std::vector<std::shared_ptr<GradNode<S>>> parents;
        if (a.tracked()) parents.push_back(a.node());
        if (b.tracked()) parents.push_back(b.node());
        auto an = a.node();
        auto bn = b.node();
        auto av = a.detached();
        auto bv = b.detached();
        out.set_node(detail::make_node<S>(os, "matmul", std::move(parents), [=](const Tensor<S>& up) {
            if (an) {
                Tensor<S> ga(av.shape());
                detail::gemm(up.data().data(), rows, n, false, bv.data().data(), k, n, true,
                             ga.mutable_data().data(), false);
                accumulate_grad(an, ga);
            }
            if (bn) {
                Tensor<S> gb(bv.shape());
                detail::gemm(av.data().data(), rows, k, true, up.data().data(), rows, n, false,
                             gb.mutable_data().data(), false);
                accumulate_grad(bn, gb);
            }
        }));
    }
    return out;
}

// --- reductions ---

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    S acc = 0;
    for (S v : x.data()) acc += v;
    Tensor<S> out = Tensor<S>::scalar(acc);
    if (grad_enabled() && x.tracked()) {
        auto xn = x.node();
        Shape xs = x.shape();
        out.set_node(detail::make_node<S>({}, "sum", {xn}, [=](const Tensor<S>& up) {
            accumulate_grad(xn, Tensor<S>::full(xs, up.data()[0]));
        }));
    }
    return out;
}

namespace detail {

inline void split_axis(const Shape& s, std::int64_t axis, std::int64_t& outer, std::int64_t& extent,
                       std::int64_t& inner) {
    if (axis < 0) axis += static_cast<std::int64_t>(s.size());
    if (axis < 0 || axis >= static_cast<std::int64_t>(s.size()))
        throw std::invalid_argument("axis out of range for shape " + shape_str(s));
    outer = 1;
    inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= s[i];
    extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

inline Shape reduced_shape(const Shape& s, std::int64_t axis, bool keepdims) {
    if (axis < 0) axis += static_cast<std::int64_t>(s.size());
    Shape os;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(s.size()); ++i) {
        if (i == axis) {
            if (keepdims) os.push_back(1);
        } else {
            os.push_back(s[i]);
        }
    }
    return os;
}

}  // namespace detail

template <typename S>
Tensor<S> sum(const Tensor<S>& x, std::int64_t axis, bool keepdims = false) {
    std::int64_t outer, extent, inner;
    detail::split_axis(x.shape(), axis, outer, extent, inner);
    Tensor<S> out(detail::reduced_shape(x.shape(), axis, keepdims));
    const S* px = x.data().data();
    S* po = out.mutable_data().data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < extent; ++j)
            for (std::int64_t i = 0; i < inner; ++i) po[o * inner + i] += px[(o * extent + j) * inner + i];
    if (grad_enabled() && x.tracked()) {
        auto xn = x.node();
        Shape xs = x.shape();
        out.set_node(detail::make_node<S>(out.shape(), "sum_axis", {xn}, [=](const Tensor<S>& up) {
            Tensor<S> g(xs);
            const S* pu = up.data().data();
            S* pg = g.mutable_data().data();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t j = 0; j < extent; ++j)
                    for (std::int64_t i = 0; i < inner; ++i) pg[(o * extent + j) * inner + i] = pu[o * inner + i];
            accumulate_grad(xn, g);
        }));
    }
    return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
    return mul_scalar(sum(x), S(1) / static_cast<S>(x.numel()));
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x, std::int64_t axis, bool keepdims = false) {
    std::int64_t outer, extent, inner;
    detail::split_axis(x.shape(), axis, outer, extent, inner);
    return mul_scalar(sum(x, axis, keepdims), S(1) / static_cast<S>(extent));
}

// Ties route the gradient to the first maximal element along the axis.
template <typename S>
Tensor<S> max_along(const Tensor<S>& x, std::int64_t axis, bool keepdims = false) {
    std::int64_t outer, extent, inner;
    detail::split_axis(x.shape(), axis, outer, extent, inner);
    if (extent == 0) throw std::invalid_argument("max_along: empty axis in " + shape_str(x.shape()));
    Tensor<S> out(detail::reduced_shape(x.shape(), axis, keepdims));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(outer * inner));
    const S* px = x.data().data();
    S* po = out.mutable_data().data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
            S best = px[o * extent * inner + i];
            std::int64_t bj = 0;
            for (std::int64_t j = 1; j < extent; ++j) {
                S v = px[(o * extent + j) * inner + i];
                if (v > best) {
                    best = v;
                    bj = j;
                }
            }
            po[o * inner + i] = best;
            (*argmax)[static_cast<std::size_t>(o * inner + i)] = bj;
        }
    if (grad_enabled() && x.tracked()) {
        auto xn = x.node();
        Shape xs = x.shape();
        out.set_node(detail::make_node<S>(out.shape(), "max_along", {xn}, [=](const Tensor<S>& up) {
            Tensor<S> g(xs);
            const S* pu = up.data().data();
            S* pg = g.mutable_data().data();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t i = 0; i < inner; ++i) {
                    std::int64_t j = (*argmax)[static_cast<std::size_t>(o * inner + i)];
                    pg[(o * extent + j) * inner + i] = pu[o * inner + i];
                }
            accumulate_grad(xn, g);
        }));
    }
    return out;
}

template <typename S>
Tensor<S> logsumexp(const Tensor<S>& x, std::int64_t axis, bool keepdims = false) {
    Tensor<S> m = max_along(x, axis, true);
    Tensor<S> lse = add(m, log(sum(exp(sub(x, m)), axis, true)));
    if (keepdims) return lse;
    return reshape(lse, detail::reduced_shape(x.shape(), axis, false));
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x, std::int64_t axis) {
    return sub(x, logsumexp(x, axis, true));
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, std::int64_t axis) {
    return exp(log_softmax(x, axis));
}

// --- shape ops ---

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    Tensor<S> out = x.reshaped_view(shape);
    if (grad_enabled() && x.tracked()) {
        auto xn = x.node();
        Shape xs = x.shape();
        out.set_node(detail::make_node<S>(shape, "reshape", {xn}, [=](const Tensor<S>& up) {
            accumulate_grad(xn, up.reshaped_view(xs));
        }));
    }
    return out;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, std::int64_t axis, std::int64_t start, std::int64_t len) {
    std::int64_t outer, extent, inner;
    detail::split_axis(x.shape(), axis, outer, extent, inner);
    if (axis < 0) axis += x.dim();
    if (start < 0 || len < 0 || start + len > extent)
        throw std::invalid_argument("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                                    ") out of range for axis extent " + std::to_string(extent));
    Shape os = x.shape();
    os[static_cast<std::size_t>(axis)] = len;
    Tensor<S> out(os);
    const S* px = x.data().data();
    S* po = out.mutable_data().data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < len; ++j)
            std::copy_n(px + (o * extent + start + j) * inner, inner, po + (o * len + j) * inner);
    if (grad_enabled() && x.tracked()) {
        auto xn = x.node();
        Shape xs = x.shape();
        out.set_node(detail::make_node<S>(os, "slice", {xn}, [=](const Tensor<S>& up) {
            Tensor<S> g(xs);
            const S* pu = up.data().data();
            S* pg = g.mutable_data().data();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t j = 0; j < len; ++j)
                    std::copy_n(pu + (o * len + j) * inner, inner, pg + (o * extent + start + j) * inner);
            accumulate_grad(xn, g);
        }));
    }
    return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, std::int64_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    std::int64_t ax = axis < 0 ? axis + parts[0].dim() : axis;
    Shape os = parts[0].shape();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p.dim() != parts[0].dim())
            throw std::invalid_argument("concat: rank mismatch " + shape_str(p.shape()));
        for (std::int64_t d = 0; d < p.dim(); ++d)
            if (d != ax && p.shape()[d] != os[d])
                throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(os));
        total += p.extent(ax);
    }
    os[static_cast<std::size_t>(ax)] = total;
    Tensor<S> out(os);
    std::int64_t outer, extent, inner;
    detail::split_axis(os, ax, outer, extent, inner);
    S* po = out.mutable_data().data();
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const S* pp = p.data().data();
        const std::int64_t pe = p.extent(ax);
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(pp + o * pe * inner, pe * inner, po + (o * extent + offset) * inner);
        offset += pe;
    }
    bool any_tracked = false;
    for (const auto& p : parts) any_tracked = any_tracked || p.tracked();
    if (grad_enabled() && any_tracked) {
        std::vector<std::shared_ptr<GradNode<S>>> parents;
        std::vector<std::shared_ptr<GradNode<S>>> nodes;
        std::vector<std::int64_t> extents;
        for (const auto& p : parts) {
            nodes.push_back(p.node());
            extents.push_back(p.extent(ax));
            if (p.tracked()) parents.push_back(p.node());
        }
        out.set_node(detail::make_node<S>(os, "concat", std::move(parents), [=](const Tensor<S>& up) {
            const S* pu = up.data().data();
            std::int64_t off = 0;
            for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                const std::int64_t pe = extents[pi];
                if (nodes[pi]) {
                    Shape ps = up.shape();
                    ps[static_cast<std::size_t>(ax)] = pe;
                    Tensor<S> g(ps);
                    S* pg = g.mutable_data().data();
                    for (std::int64_t o = 0; o < outer; ++o)
                        std::copy_n(pu + (o * extent + off) * inner, pe * inner, pg + o * pe * inner);
                    accumulate_grad(nodes[pi], g);
                }
                off += pe;
            }
        }));
    }
    return out;
}

// Rows repeated k times consecutively: (B, d) -> (B*k, d). Value-level helper.
template <typename S>
Tensor<S> repeat_rows(const Tensor<S>& x, std::int64_t k) {
    if (x.dim() != 2) throw std::invalid_argument("repeat_rows: need 2-d input, got " + shape_str(x.shape()));
    const std::int64_t b = x.extent(0), d = x.extent(1);
    Tensor<S> out({b * k, d});
    const S* px = x.data().data();
    S* po = out.mutable_data().data();
    for (std::int64_t r = 0; r < b; ++r)
        for (std::int64_t j = 0; j < k; ++j) std::copy_n(px + r * d, d, po + (r * k + j) * d);
    return out;
}

// --- operator sugar ---

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) { return div(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& x) { return neg(x); }
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, S c) { return add_scalar(a, c); }
template <typename S>
Tensor<S> operator+(S c, const Tensor<S>& a) { return add_scalar(a, c); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, S c) { return add_scalar(a, -c); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S c) { return mul_scalar(a, c); }
template <typename S>
Tensor<S> operator*(S c, const Tensor<S>& a) { return mul_scalar(a, c); }
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, S c) { return mul_scalar(a, S(1) / c); }

}  // namespace abi::num
