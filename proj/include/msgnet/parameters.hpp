#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "msgnet/autodiff.hpp"
#include "msgnet/random.hpp"
#include "msgnet/tensor.hpp"

namespace msgnet {

struct NamedParameter {
    std::string name;
    Var var;
};

using ParameterList = std::vector<NamedParameter>;

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.uniform(-bound, bound);
    return t;
}

inline Tensor normal_tensor(Shape shape, double stddev, Rng& rng)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = rng.normal(0.0, stddev);
    return t;
}

/// Fan-in scaled uniform initialisation for a weight matrix [out, in].
inline Var linear_weight(std::size_t out, std::size_t in, Rng& rng)
{
    return Var::parameter(uniform_tensor({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

inline void zero_parameters(const ParameterList& params)
{
    for (auto p : params)
        p.var.mutable_value().fill(0.0);
}

inline void zero_grads(const ParameterList& params)
{
    for (auto p : params)
        p.var.zero_grad();
}

inline std::size_t parameter_count(const ParameterList& params)
{
    std::size_t n = 0;
    for (const auto& p : params)
        n += p.var.value().numel();
    return n;
}

} // namespace msgnet
