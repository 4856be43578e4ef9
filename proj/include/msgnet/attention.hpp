#pragma once

#include <cmath>
#include <string>

#include "msgnet/errors.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/parameters.hpp"
#include "msgnet/random.hpp"

namespace msgnet {

/// Multi-head self-attention weights. Projections are stored [d_in, d_out]
/// and applied as x W + b on token rows.
struct AttentionParams {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t n_heads = 1;
    double dropout = 0.0;

    static AttentionParams init(std::size_t d_model, std::size_t n_heads, Rng& rng)
    {
        if (n_heads == 0 || d_model % n_heads != 0)
            throw ConfigError("attention: d_model " + std::to_string(d_model) + " is not divisible by " +
                              std::to_string(n_heads) + " heads");
        AttentionParams p;
        p.n_heads = n_heads;
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
        auto w = [&] { return Var::parameter(uniform_tensor({d_model, d_model}, bound, rng)); };
        auto b = [&] { return Var::parameter(Tensor::zeros({d_model})); };
        p.wq = w();
        p.bq = b();
        p.wk = w();
        p.bk = b();
        p.wv = w();
        p.bv = b();
        p.wo = w();
        p.bo = b();
        return p;
    }

    std::size_t d_model() const { return wq.dim(0); }

    void collect(const std::string& prefix, ParameterList& out) const
    {
        out.push_back({prefix + "wq", wq});
        out.push_back({prefix + "bq", bq});
        out.push_back({prefix + "wk", wk});
        out.push_back({prefix + "bk", bk});
        out.push_back({prefix + "wv", wv});
        out.push_back({prefix + "bv", bv});
        out.push_back({prefix + "wo", wo});
        out.push_back({prefix + "bo", bo});
    }
};

struct AttentionOutput {
    Var out;        // [B, d_model, s, c]
    Tensor weights; // [B * c, heads, s, s]
};

/// Self-attention over the within-period axis s of x [B, d_model, s, c].
/// Columns are folded into the batch, so they never interact. No mask.
inline AttentionOutput scale_attention_with_weights(const Var& x, const AttentionParams& p, Rng* dropout_rng = nullptr)
{
    const Shape& xs = x.shape();
    if (xs.size() != 4)
        throw DimensionError("scale_attention: expected [B, d_model, s, c], got " + shape_str(xs));
    const std::size_t B = xs[0], d = xs[1], s = xs[2], c = xs[3];
    if (d != p.d_model())
        throw DimensionError("scale_attention: input width " + std::to_string(d) + " does not match parameters width " +
                             std::to_string(p.d_model()));
    if (p.n_heads == 0 || d % p.n_heads != 0)
        throw ConfigError("scale_attention: d_model " + std::to_string(d) + " is not divisible by " +
                          std::to_string(p.n_heads) + " heads");
    const std::size_t H = p.n_heads, dh = d / H, Bc = B * c;

    Var tokens = reshape(permute(x, {0, 3, 2, 1}), {Bc, s, d});
    auto heads = [&](const Var& w, const Var& b) {
        Var proj = add(matmul(tokens, w), b);
        return permute(reshape(proj, {Bc, s, H, dh}), {0, 2, 1, 3}); // [Bc, H, s, dh]
    };
    Var q = heads(p.wq, p.bq);
    Var k = heads(p.wk, p.bk);
    Var v = heads(p.wv, p.bv);

    Var scores = scale(matmul(q, transpose(k, -1, -2)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = softmax(scores, -1);
    Tensor weights = attn.value();
    if (p.dropout > 0.0 && dropout_rng)
        attn = dropout(attn, p.dropout, *dropout_rng);
    Var ctx = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {Bc, s, d});
    Var out = add(matmul(ctx, p.wo), p.bo);
    Var restored = permute(reshape(out, {B, c, s, d}), {0, 3, 2, 1});
    return {restored, std::move(weights)};
}

inline Var scale_attention(const Var& x, const AttentionParams& p, Rng* dropout_rng = nullptr)
{
    return scale_attention_with_weights(x, p, dropout_rng).out;
}

} // namespace msgnet
