#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "msgnet/graph.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/parameters.hpp"
#include "msgnet/random.hpp"
#include "msgnet/training.hpp"

// Representability probe: can a model recover tanh(A X) - tanh(A^2 X) when the
// row-stochastic graph A changes from sample to sample? One Mixhop layer with
// powers {1, 2} can; a graph-free MLP of the same depth cannot see A at all.
namespace msgnet {

/// The three-node graph whose two-hop delta C - C^2 is nonzero.
inline Tensor delta_fixture_graph()
{
    return Tensor({3, 3}, {0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.0});
}

/// A - A^2 for a square matrix.
inline Tensor two_hop_delta(const Tensor& a)
{
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw DimensionError("two_hop_delta: expected a square matrix, got " + shape_str(a.shape()));
    const std::size_t n = a.dim(0);
    Tensor out = a;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t p = 0; p < n; ++p)
                sq += a[i * n + p] * a[p * n + j];
            out[i * n + j] -= sq;
        }
    return out;
}

/// Random graph with Bernoulli(1/2) edges, each row normalised to sum 1.
inline Tensor random_row_stochastic(std::size_t n, Rng& rng)
{
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            a[i * n + j] = rng.uniform() < 0.5 ? 1.0 : 0.0;
            row += a[i * n + j];
        }
        if (row == 0.0) {
            a[i * n + rng.below(n)] = 1.0;
            row = 1.0;
        }
        for (std::size_t j = 0; j < n; ++j)
            a[i * n + j] /= row;
    }
    return a;
}

struct DeltaExperimentConfig {
    std::size_t n_nodes = 3;
    std::size_t features = 4;
    std::size_t samples = 64;
    std::size_t steps = 2000;
    double lr = 2e-2;
    bool identity_graph = false; // every sample uses A = I (target vanishes)
};

struct DeltaResult {
    double mixhop_loss = 0.0;
    double mlp_loss = 0.0;
};

struct DeltaProblem {
    Tensor graphs; // [M, N, N]; sample 0 is the fixture graph when N = 3
    Tensor x;      // [M, N, F]
    Tensor target; // [M, N, F]
};

inline DeltaProblem make_delta_problem(const DeltaExperimentConfig& cfg, Rng& rng)
{
    const std::size_t M = cfg.samples, N = cfg.n_nodes, F = cfg.features;
    DeltaProblem p{Tensor({M, N, N}), Tensor({M, N, F}), Tensor({M, N, F})};
    for (std::size_t m = 0; m < M; ++m) {
        Tensor a = cfg.identity_graph ? Tensor::zeros({N, N})
                   : (m == 0 && N == 3) ? delta_fixture_graph()
                                        : random_row_stochastic(N, rng);
        if (cfg.identity_graph)
            for (std::size_t i = 0; i < N; ++i)
                a[i * N + i] = 1.0;
        std::copy(a.data().begin(), a.data().end(), p.graphs.data().begin() + static_cast<long>(m * N * N));
    }
    for (auto& v : p.x.data())
        v = rng.uniform(-1.0, 1.0);
    NoGradGuard guard;
    Var a = Var::constant(p.graphs), x = Var::constant(p.x);
    Var ax = matmul(a, x);
    p.target = sub(tanh(ax), tanh(matmul(a, ax))).value();
    return p;
}

namespace detail {

inline double fit_full_batch(const ParameterList& params, const std::function<Var()>& loss_fn,
                             const DeltaExperimentConfig& cfg)
{
    Adam opt(params, AdamOptions{cfg.lr});
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const double progress = static_cast<double>(step) / static_cast<double>(cfg.steps);
        opt.set_lr(cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
        opt.zero_grad();
        backward(loss_fn());
        opt.step();
    }
    NoGradGuard guard;
    return loss_fn().value().item();
}

} // namespace detail

/// Trains both models on one seeded problem and returns their final MSEs.
inline DeltaResult delta_operator_experiment(std::uint64_t seed, const DeltaExperimentConfig& cfg = {})
{
    Rng rng(seed);
    const DeltaProblem prob = make_delta_problem(cfg, rng);
    const std::size_t N = cfg.n_nodes, F = cfg.features;
    const Var a = Var::constant(prob.graphs), x = Var::constant(prob.x);

    // Mixhop: R tanh([A X W || A^2 X W]).
    const Var w = linear_weight(F, F, rng);
    const Var readout = linear_weight(N, 2 * N, rng);
    auto mixhop_loss = [&] {
        Var mixed = mixhop_convolve(matmul(x, w), a, {1, 2}, Activation::tanh);
        return mse_loss(matmul(readout, mixed), prob.target);
    };

    // Graph-free MLP of equal depth: U2 tanh(U1 X V1).
    const Var u1 = linear_weight(2 * N, N, rng);
    const Var v1 = linear_weight(F, F, rng);
    const Var u2 = linear_weight(N, 2 * N, rng);
    auto mlp_loss = [&] { return mse_loss(matmul(u2, tanh(matmul(matmul(u1, x), v1))), prob.target); };

    DeltaResult r;
    r.mixhop_loss = detail::fit_full_batch({{"w", w}, {"readout", readout}}, mixhop_loss, cfg);
    r.mlp_loss = detail::fit_full_batch({{"u1", u1}, {"v1", v1}, {"u2", u2}}, mlp_loss, cfg);
    return r;
}

struct DeltaSummary {
    std::vector<DeltaResult> runs;
    double mixhop_win_rate = 0.0;
    double mixhop_median = 0.0;
    double mlp_median = 0.0;
};

inline double median(std::vector<double> v)
{
    if (v.empty())
        throw ContractError("median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Runs seeds base_seed, base_seed + 1, ... and summarises the comparison.
inline DeltaSummary delta_experiment_sweep(std::size_t seeds, std::uint64_t base_seed = 0,
                                           const DeltaExperimentConfig& cfg = {})
{
    DeltaSummary s;
    std::vector<double> mh, mlp;
    std::size_t wins = 0;
    for (std::size_t i = 0; i < seeds; ++i) {
        auto r = delta_operator_experiment(base_seed + i, cfg);
        wins += r.mixhop_loss < r.mlp_loss;
        mh.push_back(r.mixhop_loss);
        mlp.push_back(r.mlp_loss);
        s.runs.push_back(r);
    }
    s.mixhop_win_rate = static_cast<double>(wins) / static_cast<double>(seeds);
    s.mixhop_median = median(mh);
    s.mlp_median = median(mlp);
    return s;
}

} // namespace msgnet
