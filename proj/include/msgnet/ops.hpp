#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "msgnet/autodiff.hpp"
#include "msgnet/errors.hpp"
#include "msgnet/random.hpp"
#include "msgnet/tensor.hpp"

// Differentiable primitives. Every operation returns a fresh Var; when
// recording is enabled and an input requires a gradient, the adjoint is taped.
namespace msgnet {

namespace detail {

inline Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op)
{
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                 " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

/// Strides of `in` aligned to `out`'s rank, zero on broadcast axes.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out)
{
    std::vector<std::size_t> s(out.size(), 0);
    const auto own = shape_strides(in);
    const std::size_t lead = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i)
        s[lead + i] = in[i] == 1 ? 0 : own[i];
    return s;
}

/// Calls f(flat_out, off_a, off_b) over every element of `out`.
template <class F>
void broadcast_for_each(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f)
{
    const std::size_t n = shape_numel(out);
    const std::size_t r = out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, oa, ob);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d])
                break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

/// Calls f(flat_out, off_src) walking `out` with arbitrary source strides.
template <class F>
void strided_for_each(const Shape& out, const std::vector<std::size_t>& src_strides, F&& f)
{
    const std::size_t n = shape_numel(out);
    const std::size_t r = out.size();
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, off);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            off += src_strides[d];
            if (idx[d] < out[d])
                break;
            off -= src_strides[d] * out[d];
            idx[d] = 0;
        }
    }
}

// Partials receive (a, b, out) and return d(out)/d(a) resp. d(out)/d(b).
template <class Fwd, class DA, class DB>
Var binary_op(const Var& a, const Var& b, const char* name, Fwd fwd, DA da, DB db)
{
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape() == bv.shape()) {
        Tensor out(av.shape());
        for (std::size_t i = 0; i < out.numel(); ++i)
            out[i] = fwd(av[i], bv[i]);
        auto na = a.node(), nb = b.node();
        return make_result(std::move(out), {&a, &b}, [na, nb, da, db](const Node& self) {
            const Tensor& g = self.grad;
            Tensor* ga = grad_sink(na);
            Tensor* gb = grad_sink(nb);
            for (std::size_t i = 0; i < g.numel(); ++i) {
                const double x = na->value[i], y = nb->value[i], z = self.value[i];
                if (ga)
                    (*ga)[i] += g[i] * da(x, y, z);
                if (gb)
                    (*gb)[i] += g[i] * db(x, y, z);
            }
        });
    }
    Shape out_shape = broadcast_shapes(av.shape(), bv.shape(), name);
    auto sa = broadcast_strides(av.shape(), out_shape);
    auto sb = broadcast_strides(bv.shape(), out_shape);
    Tensor out(out_shape);
    broadcast_for_each(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
    auto na = a.node(), nb = b.node();
    return make_result(std::move(out), {&a, &b},
                       [na, nb, da, db, out_shape, sa, sb](const Node& self) {
                           const Tensor& g = self.grad;
                           Tensor* ga = grad_sink(na);
                           Tensor* gb = grad_sink(nb);
                           broadcast_for_each(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                               const double x = na->value[ia], y = nb->value[ib], z = self.value[i];
                               if (ga)
                                   (*ga)[ia] += g[i] * da(x, y, z);
                               if (gb)
                                   (*gb)[ib] += g[i] * db(x, y, z);
                           });
                       });
}

// Derivative receives (x, y) with y = f(x).
template <class Fwd, class Deriv>
Var unary_op(const Var& x, Fwd fwd, Deriv deriv)
{
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = fwd(xv[i]);
    auto nx = x.node();
    return make_result(std::move(out), {&x}, [nx, deriv](const Node& self) {
        Tensor* gx = grad_sink(nx);
        if (!gx)
            return;
        const Tensor& g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i)
            (*gx)[i] += g[i] * deriv(nx->value[i], self.value[i]);
    });
}

/// outer × axis × inner factorisation around one axis.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& shape, std::size_t axis)
{
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i)
        s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i)
        s.inner *= shape[i];
    return s;
}

// C[m,n] += A[m,p] B[p,n]
inline void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t p, std::size_t n)
{
    for (std::size_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        for (std::size_t k = 0; k < p; ++k) {
            const double a = A[i * p + k];
            const double* b = B + k * n;
            for (std::size_t j = 0; j < n; ++j)
                c[j] += a * b[j];
        }
    }
}

// dA[m,p] += dC[m,n] B[p,n]^T
inline void gemm_nt(const double* dC, const double* B, double* dA, std::size_t m, std::size_t p, std::size_t n)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* g = dC + i * n;
        for (std::size_t k = 0; k < p; ++k) {
            const double* b = B + k * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                acc += g[j] * b[j];
            dA[i * p + k] += acc;
        }
    }
}

// dB[p,n] += A[m,p]^T dC[m,n]
inline void gemm_tn(const double* A, const double* dC, double* dB, std::size_t m, std::size_t p, std::size_t n)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* g = dC + i * n;
        for (std::size_t k = 0; k < p; ++k) {
            const double a = A[i * p + k];
            double* d = dB + k * n;
            for (std::size_t j = 0; j < n; ++j)
                d[j] += a * g[j];
        }
    }
}

} // namespace detail

// ---- elementwise -----------------------------------------------------------

inline Var add(const Var& a, const Var& b)
{
    return detail::binary_op(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b)
{
    return detail::binary_op(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b)
{
    return detail::binary_op(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

inline Var div(const Var& a, const Var& b)
{
    return detail::binary_op(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double x, double y, double) { return -x / (y * y); });
}

inline Var scale(const Var& x, double c)
{
    return detail::unary_op(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Var add_scalar(const Var& x, double c)
{
    return detail::unary_op(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Var square(const Var& x)
{
    return detail::unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Var relu(const Var& x)
{
    return detail::unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(const Var& x)
{
    return detail::unary_op(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

/// Exact (erf-based) GELU.
inline Var gelu(const Var& x)
{
    return detail::unary_op(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5)); },
        [](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
            const double pdf = std::exp(-0.5 * v * v) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
            return cdf + v * pdf;
        });
}

inline Var abs(const Var& x)
{
    return detail::unary_op(
        x, [](double v) { return std::abs(v); }, [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// ---- shape ------------------------------------------------------------------

inline Var reshape(const Var& x, Shape shape)
{
    Tensor out = x.value().reshaped(std::move(shape));
    auto nx = x.node();
    return detail::make_result(std::move(out), {&x}, [nx](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        if (!gx)
            return;
        for (std::size_t i = 0; i < self.grad.numel(); ++i)
            (*gx)[i] += self.grad[i];
    });
}

/// Reorders axes: output axis d is input axis axes[d].
inline Var permute(const Var& x, const std::vector<std::size_t>& axes)
{
    const Shape& in = x.shape();
    if (axes.size() != in.size())
        throw DimensionError("permute: " + std::to_string(axes.size()) + " axes given for shape " + shape_str(in));
    std::vector<bool> seen(in.size(), false);
    for (auto a : axes) {
        if (a >= in.size() || seen[a])
            throw DimensionError("permute: invalid axis order for shape " + shape_str(in));
        seen[a] = true;
    }
    const auto in_strides = shape_strides(in);
    Shape out_shape(in.size());
    std::vector<std::size_t> src(in.size());
    for (std::size_t d = 0; d < in.size(); ++d) {
        out_shape[d] = in[axes[d]];
        src[d] = in_strides[axes[d]];
    }
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    detail::strided_for_each(out_shape, src, [&](std::size_t i, std::size_t o) { out[i] = xv[o]; });
    auto nx = x.node();
    return detail::make_result(std::move(out), {&x}, [nx, out_shape, src](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        if (!gx)
            return;
        detail::strided_for_each(out_shape, src, [&](std::size_t i, std::size_t o) { (*gx)[o] += self.grad[i]; });
    });
}

/// Swap two axes.
inline Var transpose(const Var& x, long a, long b)
{
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[normalize_axis(a, x.rank())], axes[normalize_axis(b, x.rank())]);
    return permute(x, axes);
}

inline Var concat(const std::vector<Var>& parts, long axis_in)
{
    if (parts.empty())
        throw ContractError("concat: no inputs");
    const Shape& first = parts.front().shape();
    const std::size_t axis = normalize_axis(axis_in, first.size());
    std::size_t total = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d)
            ok = d == axis || s[d] == first[d];
        if (!ok)
            throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first) +
                                 " along axis " + std::to_string(axis));
        total += s[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = total;
    const auto split = detail::split_at(out_shape, axis);
    Tensor out(out_shape);
    std::vector<std::size_t> extents;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t e = p.shape()[axis];
        extents.push_back(e);
        const Tensor& v = p.value();
        for (std::size_t o = 0; o < split.outer; ++o)
            std::copy_n(v.data().begin() + o * e * split.inner, e * split.inner,
                        out.data().begin() + (o * total + offset) * split.inner);
        offset += e;
    }
    std::vector<detail::NodePtr> nodes;
    for (const auto& p : parts)
        nodes.push_back(p.node());
    return detail::make_result_vec(std::move(out), parts, [nodes, extents, split, total](const detail::Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            const std::size_t e = extents[k];
            if (Tensor* g = detail::grad_sink(nodes[k])) {
                for (std::size_t o = 0; o < split.outer; ++o)
                    for (std::size_t j = 0; j < e * split.inner; ++j)
                        (*g)[o * e * split.inner + j] += self.grad[(o * total + offset) * split.inner + j];
            }
            offset += e;
        }
    });
}

/// Contiguous sub-range [start, start + length) along one axis.
inline Var slice(const Var& x, long axis_in, std::size_t start, std::size_t length)
{
    const Shape& in = x.shape();
    const std::size_t axis = normalize_axis(axis_in, in.size());
    if (length == 0 || start + length > in[axis])
        throw RangeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds extent " + std::to_string(in[axis]) + " of shape " + shape_str(in));
    const auto split = detail::split_at(in, axis);
    Shape out_shape = in;
    out_shape[axis] = length;
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < split.outer; ++o)
        std::copy_n(xv.data().begin() + (o * split.extent + start) * split.inner, length * split.inner,
                    out.data().begin() + o * length * split.inner);
    auto nx = x.node();
    return detail::make_result(std::move(out), {&x}, [nx, split, start, length](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        if (!gx)
            return;
        for (std::size_t o = 0; o < split.outer; ++o)
            for (std::size_t j = 0; j < length * split.inner; ++j)
                (*gx)[(o * split.extent + start) * split.inner + j] += self.grad[o * length * split.inner + j];
    });
}

/// Zero-extends one axis at its end to `new_extent`.
inline Var pad_end(const Var& x, long axis_in, std::size_t new_extent)
{
    const Shape& in = x.shape();
    const std::size_t axis = normalize_axis(axis_in, in.size());
    if (new_extent < in[axis])
        throw RangeError("pad_end: target extent " + std::to_string(new_extent) + " below current " +
                         std::to_string(in[axis]));
    if (new_extent == in[axis])
        return reshape(x, in);
    const auto split = detail::split_at(in, axis);
    Shape out_shape = in;
    out_shape[axis] = new_extent;
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < split.outer; ++o)
        std::copy_n(xv.data().begin() + o * split.extent * split.inner, split.extent * split.inner,
                    out.data().begin() + o * new_extent * split.inner);
    auto nx = x.node();
    return detail::make_result(std::move(out), {&x}, [nx, split, new_extent](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        if (!gx)
            return;
        for (std::size_t o = 0; o < split.outer; ++o)
            for (std::size_t j = 0; j < split.extent * split.inner; ++j)
                (*gx)[o * split.extent * split.inner + j] += self.grad[o * new_extent * split.inner + j];
    });
}

// ---- reductions ---------------------------------------------------------------

inline Var sum(const Var& x)
{
    double acc = 0.0;
    for (double v : x.value().data())
        acc += v;
    auto nx = x.node();
    return detail::make_result(Tensor::scalar(acc), {&x}, [nx](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        if (!gx)
            return;
        const double g = self.grad[0];
        for (auto& v : gx->data())
            v += g;
    });
}

inline Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

inline Var sum(const Var& x, long axis_in, bool keepdim = false)
{
    const Shape& in = x.shape();
    const std::size_t axis = normalize_axis(axis_in, in.size());
    const auto split = detail::split_at(in, axis);
    Shape out_shape = in;
    if (keepdim)
        out_shape[axis] = 1;
    else
        out_shape.erase(out_shape.begin() + static_cast<long>(axis));
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    for (std::size_t o = 0; o < split.outer; ++o)
        for (std::size_t a = 0; a < split.extent; ++a)
            for (std::size_t q = 0; q < split.inner; ++q)
                out[o * split.inner + q] += xv[(o * split.extent + a) * split.inner + q];
    auto nx = x.node();
    return detail::make_result(std::move(out), {&x}, [nx, split](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        if (!gx)
            return;
        for (std::size_t o = 0; o < split.outer; ++o)
            for (std::size_t a = 0; a < split.extent; ++a)
                for (std::size_t q = 0; q < split.inner; ++q)
                    (*gx)[(o * split.extent + a) * split.inner + q] += self.grad[o * split.inner + q];
    });
}

inline Var mean(const Var& x, long axis, bool keepdim = false)
{
    const double n = static_cast<double>(x.shape()[normalize_axis(axis, x.rank())]);
    return scale(sum(x, axis, keepdim), 1.0 / n);
}

/// Max-subtracted softmax along one axis.
inline Var softmax(const Var& x, long axis_in)
{
    const Shape& in = x.shape();
    const std::size_t axis = normalize_axis(axis_in, in.size());
    const auto sp = detail::split_at(in, axis);
    const Tensor& xv = x.value();
    Tensor out(in);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t q = 0; q < sp.inner; ++q) {
            const std::size_t base = o * sp.extent * sp.inner + q;
            double m = xv[base];
            for (std::size_t a = 1; a < sp.extent; ++a)
                m = std::max(m, xv[base + a * sp.inner]);
            double z = 0.0;
            for (std::size_t a = 0; a < sp.extent; ++a) {
                const double e = std::exp(xv[base + a * sp.inner] - m);
                out[base + a * sp.inner] = e;
                z += e;
            }
            for (std::size_t a = 0; a < sp.extent; ++a)
                out[base + a * sp.inner] /= z;
        }
    auto nx = x.node();
    return detail::make_result(std::move(out), {&x}, [nx, sp](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        if (!gx)
            return;
        const Tensor& y = self.value;
        const Tensor& g = self.grad;
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t q = 0; q < sp.inner; ++q) {
                const std::size_t base = o * sp.extent * sp.inner + q;
                double dot = 0.0;
                for (std::size_t a = 0; a < sp.extent; ++a)
                    dot += g[base + a * sp.inner] * y[base + a * sp.inner];
                for (std::size_t a = 0; a < sp.extent; ++a) {
                    const std::size_t i = base + a * sp.inner;
                    (*gx)[i] += y[i] * (g[i] - dot);
                }
            }
    });
}

// ---- linear algebra -----------------------------------------------------------

/// Batched matrix product [..., m, p] x [..., p, n] -> [..., m, n] with
/// broadcasting over the leading (batch) axes.
inline Var matmul(const Var& a, const Var& b)
{
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2 || as[as.size() - 1] != bs[bs.size() - 2])
        throw DimensionError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
    const std::size_t m = as[as.size() - 2], p = as.back(), n = bs.back();
    const Shape a_batch(as.begin(), as.end() - 2);
    const Shape b_batch(bs.begin(), bs.end() - 2);
    Shape batch;
    try {
        batch = detail::broadcast_shapes(a_batch, b_batch, "matmul");
    } catch (const DimensionError&) {
        throw DimensionError("matmul: batch extents of " + shape_str(as) + " and " + shape_str(bs) +
                             " are not broadcastable");
    }
    // Offsets in units of whole matrices.
    const auto sa = detail::broadcast_strides(a_batch, batch);
    const auto sb = detail::broadcast_strides(b_batch, batch);
    struct Triple {
        std::size_t out, a, b;
    };
    std::vector<Triple> pairs;
    pairs.reserve(shape_numel(batch));
    detail::broadcast_for_each(batch, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) { pairs.push_back({i, ia, ib}); });

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape);
    const double* A = a.value().data().data();
    const double* B = b.value().data().data();
    double* C = out.data().data();
    for (const auto& t : pairs)
        detail::gemm_nn(A + t.a * m * p, B + t.b * p * n, C + t.out * m * n, m, p, n);

    auto na = a.node(), nb = b.node();
    return detail::make_result(std::move(out), {&a, &b}, [na, nb, pairs, m, p, n](const detail::Node& self) {
        Tensor* ga = detail::grad_sink(na);
        Tensor* gb = detail::grad_sink(nb);
        const double* G = self.grad.data().data();
        for (const auto& t : pairs) {
            if (ga)
                detail::gemm_nt(G + t.out * m * n, nb->value.data().data() + t.b * p * n, ga->data().data() + t.a * m * p,
                                m, p, n);
            if (gb)
                detail::gemm_tn(na->value.data().data() + t.a * m * p, G + t.out * m * n, gb->data().data() + t.b * p * n,
                                m, p, n);
        }
    });
}

/// Cross-correlation with kernel width 3, stride 1 and one zero on each end:
/// x [B, C_in, L], kernels [C_out, C_in, 3] -> [B, C_out, L].
inline Var conv1d(const Var& x, const Var& kernels)
{
    const Shape& xs = x.shape();
    const Shape& ws = kernels.shape();
    if (xs.size() != 3 || ws.size() != 3 || ws[2] != 3 || ws[1] != xs[1])
        throw DimensionError("conv1d: input " + shape_str(xs) + " incompatible with kernels " + shape_str(ws));
    const std::size_t B = xs[0], Ci = xs[1], L = xs[2], Co = ws[0];
    Tensor out({B, Co, L});
    const Tensor& xv = x.value();
    const Tensor& wv = kernels.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Co; ++o) {
            double* y = &out[(b * Co + o) * L];
            for (std::size_t c = 0; c < Ci; ++c) {
                const double* in = &xv[(b * Ci + c) * L];
                const double* w = &wv[(o * Ci + c) * 3];
                for (std::size_t t = 0; t < L; ++t) {
                    double acc = w[1] * in[t];
                    if (t > 0)
                        acc += w[0] * in[t - 1];
                    if (t + 1 < L)
                        acc += w[2] * in[t + 1];
                    y[t] += acc;
                }
            }
        }
    auto nx = x.node(), nw = kernels.node();
    return detail::make_result(std::move(out), {&x, &kernels}, [nx, nw, B, Ci, L, Co](const detail::Node& self) {
        Tensor* gx = detail::grad_sink(nx);
        Tensor* gw = detail::grad_sink(nw);
        const Tensor& xv = nx->value;
        const Tensor& wv = nw->value;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < Co; ++o) {
                const double* g = &self.grad[(b * Co + o) * L];
                for (std::size_t c = 0; c < Ci; ++c) {
                    const std::size_t xo = (b * Ci + c) * L;
                    const std::size_t wo = (o * Ci + c) * 3;
                    for (std::size_t t = 0; t < L; ++t) {
                        for (std::size_t k = 0; k < 3; ++k) {
                            if ((t == 0 && k == 0) || (t + 1 == L && k == 2))
                                continue;
                            const std::size_t src = t + k - 1;
                            if (gx)
                                (*gx)[xo + src] += g[t] * wv[wo + k];
                            if (gw)
                                (*gw)[wo + k] += g[t] * xv[xo + src];
                        }
                    }
                }
            }
    });
}

/// Row lookup: table [V, D], `indices` laid out as `index_shape` -> index_shape + [D].
inline Var embedding(const Var& table, const std::vector<std::size_t>& indices, Shape index_shape)
{
    const Shape& ts = table.shape();
    if (ts.size() != 2)
        throw DimensionError("embedding: table must be rank 2, got " + shape_str(ts));
    if (shape_numel(index_shape) != indices.size())
        throw DimensionError("embedding: index count does not match index shape " + shape_str(index_shape));
    const std::size_t V = ts[0], D = ts[1];
    for (auto i : indices)
        if (i >= V)
            throw RangeError("embedding: index " + std::to_string(i) + " outside vocabulary of " + std::to_string(V));
    Shape out_shape = std::move(index_shape);
    out_shape.push_back(D);
    Tensor out(out_shape);
    const Tensor& tv = table.value();
    for (std::size_t r = 0; r < indices.size(); ++r)
        std::copy_n(tv.data().begin() + indices[r] * D, D, out.data().begin() + r * D);
    auto nt = table.node();
    return detail::make_result(std::move(out), {&table}, [nt, indices, D](const detail::Node& self) {
        Tensor* gt = detail::grad_sink(nt);
        if (!gt)
            return;
        for (std::size_t r = 0; r < indices.size(); ++r)
            for (std::size_t d = 0; d < D; ++d)
                (*gt)[indices[r] * D + d] += self.grad[r * D + d];
    });
}

/// Inverted dropout; identity when p == 0.
inline Var dropout(const Var& x, double p, Rng& rng)
{
    if (p < 0.0 || p >= 1.0)
        throw RangeError("dropout probability must lie in [0, 1)");
    if (p == 0.0)
        return x;
    Tensor mask(x.shape());
    for (auto& m : mask.data())
        m = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
    return mul(x, Var::constant(std::move(mask)));
}

// ---- forward-only helpers ---------------------------------------------------------

/// Indices of the k largest values, descending; ties resolved toward the lower index.
inline std::vector<std::size_t> top_k(std::span<const double> values, std::size_t k)
{
    if (k > values.size())
        throw RangeError("top_k: k = " + std::to_string(k) + " exceeds " + std::to_string(values.size()) + " values");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(), [&](std::size_t a, std::size_t b) {
        return values[a] > values[b] || (values[a] == values[b] && a < b);
    });
    idx.resize(k);
    return idx;
}

} // namespace msgnet
