#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "msgnet/errors.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/parameters.hpp"
#include "msgnet/random.hpp"

// Per-scale inter-series correlation learning: channel-to-variable projection,
// adaptive adjacency, Mixhop propagation and the projection back to d_model.
namespace msgnet {

enum class Activation { gelu, tanh, relu, identity };

inline Var activate(const Var& x, Activation act)
{
    switch (act) {
    case Activation::gelu:
        return gelu(x);
    case Activation::tanh:
        return tanh(x);
    case Activation::relu:
        return relu(x);
    case Activation::identity:
        return x;
    }
    return x;
}

/// Adjacency powers {0, 1, ..., order}.
inline std::vector<std::size_t> mixhop_powers(std::size_t order)
{
    std::vector<std::size_t> p(order + 1);
    for (std::size_t i = 0; i <= order; ++i)
        p[i] = i;
    return p;
}

namespace detail {

// Applies w [out, C] along axis 1 of x [B, C, ...sites].
inline Var channel_linear(const Var& x, const Var& w, const char* who)
{
    const Shape& xs = x.shape();
    if (xs.size() < 2 || w.rank() != 2 || w.dim(1) != xs[1])
        throw DimensionError(std::string(who) + ": weight " + shape_str(w.shape()) + " does not match input " +
                             shape_str(xs));
    const std::size_t sites = shape_numel(Shape(xs.begin() + 2, xs.end()));
    Var flat = reshape(x, {xs[0], xs[1], sites});
    Var y = matmul(w, flat);
    Shape out = xs;
    out[1] = w.dim(0);
    return reshape(y, out);
}

} // namespace detail

/// H = W x at every (s, c) site: x [B, d_model, s, c], W [N, d_model] -> [B, N, s, c].
inline Var project_to_variables(const Var& x, const Var& w_proj)
{
    return detail::channel_linear(x, w_proj, "project_to_variables");
}

/// Row-stochastic A = softmax_row(relu(E1 E2^T)).
inline Var build_adjacency(const Var& e1, const Var& e2)
{
    if (e1.rank() != 2 || e2.rank() != 2 || e1.shape() != e2.shape())
        throw DimensionError("build_adjacency: embeddings " + shape_str(e1.shape()) + " and " + shape_str(e2.shape()) +
                             " must both be [N, h]");
    return softmax(relu(matmul(e1, transpose(e2, 0, 1))), 1);
}

/// Logits before normalisation, exposed for inspection and scaling checks.
inline Var adjacency_logits(const Var& e1, const Var& e2) { return matmul(e1, transpose(e2, 0, 1)); }

/// sigma( ||_{j in P} A^j H ), concatenated along the node axis.
/// h [B, N, F]; a [N, N] or batched [..., N, N]; A^0 is the identity.
inline Var mixhop_convolve(const Var& h, const Var& a, const std::vector<std::size_t>& powers,
                           Activation act = Activation::gelu)
{
    if (powers.empty())
        throw ContractError("mixhop_convolve: adjacency power set is empty");
    if (h.rank() < 2 || a.rank() < 2 || a.dim(-1) != a.dim(-2) || a.dim(-1) != h.dim(-2))
        throw DimensionError("mixhop_convolve: adjacency " + shape_str(a.shape()) + " incompatible with features " +
                             shape_str(h.shape()));
    const std::set<std::size_t> wanted(powers.begin(), powers.end());
    const std::size_t top = *wanted.rbegin();
    std::vector<Var> parts;
    Var cur = h;
    for (std::size_t p = 0; p <= top; ++p) {
        if (p > 0)
            cur = matmul(a, cur);
        if (wanted.count(p))
            parts.push_back(cur);
    }
    return activate(concat(parts, -2), act);
}

/// Two-layer map back to d_model: W2 gelu(W1 h + b1) + b2, hidden width d_model.
struct BackProjection {
    Var w1, b1, w2, b2;

    static BackProjection init(std::size_t in_features, std::size_t d_model, Rng& rng)
    {
        BackProjection m;
        m.w1 = linear_weight(d_model, in_features, rng);
        m.b1 = Var::parameter(Tensor::zeros({d_model, 1}));
        m.w2 = linear_weight(d_model, d_model, rng);
        m.b2 = Var::parameter(Tensor::zeros({d_model, 1}));
        return m;
    }

    void collect(const std::string& prefix, ParameterList& out) const
    {
        out.push_back({prefix + "w1", w1});
        out.push_back({prefix + "b1", b1});
        out.push_back({prefix + "w2", w2});
        out.push_back({prefix + "b2", b2});
    }
};

/// h [B, F_in, s, c] -> [B, d_model, s, c].
inline Var project_back(const Var& h, const BackProjection& mlp)
{
    const Shape& hs = h.shape();
    if (hs.size() < 2)
        throw DimensionError("project_back: expected [B, F, ...], got " + shape_str(hs));
    const std::size_t sites = shape_numel(Shape(hs.begin() + 2, hs.end()));
    Var flat = reshape(h, {hs[0], hs[1], sites});
    Var hidden = gelu(add(detail::channel_linear(flat, mlp.w1, "project_back"), mlp.b1));
    Var out = add(detail::channel_linear(hidden, mlp.w2, "project_back"), mlp.b2);
    Shape shape = hs;
    shape[1] = mlp.w2.dim(0);
    return reshape(out, shape);
}

/// Learnable state of one scale's graph pipeline.
struct AdaptiveGraphParams {
    Var e1, e2;   // [N, h] node embeddings
    Var w_proj;   // [N, d_model]
    std::vector<Var> mixhop_weights; // one [N, N] map per power
    BackProjection back;
    std::vector<std::size_t> powers;
    Activation activation = Activation::gelu;

    static AdaptiveGraphParams init(std::size_t n_vars, std::size_t d_model, std::size_t node_dim,
                                    std::vector<std::size_t> powers, Rng& rng)
    {
        if (powers.empty())
            throw ContractError("AdaptiveGraphParams: adjacency power set is empty");
        std::sort(powers.begin(), powers.end());
        powers.erase(std::unique(powers.begin(), powers.end()), powers.end());
        AdaptiveGraphParams g;
        g.e1 = Var::parameter(normal_tensor({n_vars, node_dim}, 1.0, rng));
        g.e2 = Var::parameter(normal_tensor({n_vars, node_dim}, 1.0, rng));
        g.w_proj = linear_weight(n_vars, d_model, rng);
        for (std::size_t i = 0; i < powers.size(); ++i)
            g.mixhop_weights.push_back(linear_weight(n_vars, n_vars, rng));
        g.back = BackProjection::init(powers.size() * n_vars, d_model, rng);
        g.powers = std::move(powers);
        return g;
    }

    std::size_t n_vars() const { return e1.dim(0); }

    void collect(const std::string& prefix, ParameterList& out) const
    {
        out.push_back({prefix + "e1", e1});
        out.push_back({prefix + "e2", e2});
        out.push_back({prefix + "w_proj", w_proj});
        for (std::size_t j = 0; j < mixhop_weights.size(); ++j)
            out.push_back({prefix + "mixhop." + std::to_string(powers[j]), mixhop_weights[j]});
        back.collect(prefix + "back.", out);
    }
};

/// Full per-scale graph pipeline: x [B, d_model, s, c] -> [B, d_model, s, c].
inline Var graph_forward(const AdaptiveGraphParams& g, const Var& x)
{
    const Shape& xs = x.shape();
    if (xs.size() != 4)
        throw DimensionError("graph_forward: expected [B, d_model, s, c], got " + shape_str(xs));
    const std::size_t B = xs[0], N = g.n_vars(), F = xs[2] * xs[3];
    Var h = reshape(project_to_variables(x, g.w_proj), {B, N, F});
    Var adj = build_adjacency(g.e1, g.e2);
    Var mixed = mixhop_convolve(h, adj, g.powers, g.activation); // [B, |P| N, F]
    std::vector<Var> mapped;
    mapped.reserve(g.powers.size());
    for (std::size_t j = 0; j < g.powers.size(); ++j)
        mapped.push_back(matmul(g.mixhop_weights[j], slice(mixed, 1, j * N, N)));
    Var joined = concat(mapped, 1);
    return project_back(reshape(joined, {B, g.powers.size() * N, xs[2], xs[3]}), g.back);
}

} // namespace msgnet
