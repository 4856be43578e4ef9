#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "msgnet/autodiff.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/parameters.hpp"
#include "msgnet/random.hpp"

namespace msgnet::testing {

struct GradCheckReport {
    double worst = 0.0;
    std::string worst_name;
};

/// Compares tape gradients with central differences, per tensor:
/// ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline GradCheckReport grad_check(const std::function<Var()>& loss_fn, const ParameterList& params,
                                  double step = 1e-5)
{
    zero_grads(params);
    backward(loss_fn());
    GradCheckReport report;
    for (const auto& p : params) {
        Var v = p.var;
        const Tensor analytic = v.grad();
        Tensor numeric(v.shape());
        {
            NoGradGuard guard;
            for (std::size_t i = 0; i < numeric.numel(); ++i) {
                const double orig = v.value()[i];
                v.mutable_value()[i] = orig + step;
                const double up = loss_fn().value().item();
                v.mutable_value()[i] = orig - step;
                const double down = loss_fn().value().item();
                v.mutable_value()[i] = orig;
                numeric[i] = (up - down) / (2.0 * step);
            }
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < numeric.numel(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
        // Relative error is undefined for a structurally zero gradient (a key
        // bias under softmax, say); there the numeric side must be pure noise.
        if (std::sqrt(na) < 1e-12)
            rel = std::sqrt(nn) < 1e-7 ? 0.0 : 1.0;
        if (rel >= report.worst) {
            report.worst = rel;
            report.worst_name = p.name;
        }
    }
    zero_grads(params);
    return report;
}

/// Scalar probe <y, w> with fixed random weights, so every output element
/// contributes a distinct adjoint.
inline Var probe(const Var& y, std::uint64_t seed = 99)
{
    Rng rng(seed);
    Tensor w(y.shape());
    for (auto& v : w.data())
        v = rng.uniform(-1.0, 1.0);
    return sum(mul(y, Var::constant(std::move(w))));
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.uniform(lo, hi);
    return t;
}

} // namespace msgnet::testing
