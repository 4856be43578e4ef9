#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "msgnet/data.hpp"
#include "msgnet/errors.hpp"
#include "msgnet/model.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/parameters.hpp"
#include "msgnet/random.hpp"

namespace msgnet {

// ---- metrics -----------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* who)
{
    if (a.shape() != b.shape())
        throw DimensionError(std::string(who) + ": prediction " + shape_str(a.shape()) + " vs target " +
                             shape_str(b.shape()));
}

inline double mse(const Tensor& pred, const Tensor& target)
{
    check_same_shape(pred, target, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i)
        s += (pred[i] - target[i]) * (pred[i] - target[i]);
    return s / static_cast<double>(pred.numel());
}

inline double mae(const Tensor& pred, const Tensor& target)
{
    check_same_shape(pred, target, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i)
        s += std::abs(pred[i] - target[i]);
    return s / static_cast<double>(pred.numel());
}

inline Var mse_loss(const Var& pred, const Tensor& target)
{
    check_same_shape(pred.value(), target, "mse_loss");
    return mean(square(sub(pred, Var::constant(target))));
}

// ---- Adam ----------------------------------------------------------------------------

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Tensor m, v;
    std::size_t t = 0;
};

/// One bias-corrected Adam update of `param` in place.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& st, const AdamOptions& o)
{
    check_same_shape(param, grad, "adam_step");
    if (st.m.empty()) {
        st.m = Tensor::zeros(param.shape());
        st.v = Tensor::zeros(param.shape());
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        st.m[i] = o.beta1 * st.m[i] + (1.0 - o.beta1) * grad[i];
        st.v[i] = o.beta2 * st.v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
        param[i] -= o.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + o.eps);
    }
}

class Adam {
public:
    Adam(ParameterList params, AdamOptions options)
        : params_(std::move(params))
        , options_(options)
        , states_(params_.size())
    {
        if (!(options.lr > 0.0) || !std::isfinite(options.lr))
            throw ConfigError("learning rate must be positive and finite");
    }

    void step()
    {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Var v = params_[i].var;
            if (!v.has_grad())
                continue;
            adam_step(v.mutable_value(), v.grad(), states_[i], options_);
            if (!v.value().all_finite())
                throw NumericError("parameter " + params_[i].name + " became non-finite after an optimizer step");
        }
    }

    void zero_grad() { zero_grads(params_); }
    void set_lr(double lr) { options_.lr = lr; }
    const AdamOptions& options() const noexcept { return options_; }
    const std::vector<AdamState>& states() const noexcept { return states_; }

private:
    ParameterList params_;
    AdamOptions options_;
    std::vector<AdamState> states_;
};

inline std::vector<Tensor> snapshot_parameters(const ParameterList& params)
{
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params)
        out.push_back(p.var.value());
    return out;
}

inline void restore_parameters(const ParameterList& params, const std::vector<Tensor>& values)
{
    if (values.size() != params.size())
        throw ContractError("restore_parameters: snapshot size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var v = params[i].var;
        if (v.shape() != values[i].shape())
            throw DimensionError("restore_parameters: shape mismatch for " + params[i].name);
        v.mutable_value() = values[i];
    }
}

// ---- evaluation ------------------------------------------------------------------------

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t windows = 0;
};

/// Errors over every window of a split, in standardized units.
inline Metrics evaluate(const MsgNet& model, const SeriesDataset& ds, Split split, std::size_t batch_size = 32)
{
    const auto& cfg = model.config();
    if (ds.n_vars() != cfg.n_vars)
        throw SchemaError("dataset has " + std::to_string(ds.n_vars()) + " variables, model expects " +
                          std::to_string(cfg.n_vars));
    WindowSampler sampler(ds, split, cfg.lookback, cfg.horizon);
    double se = 0.0, ae = 0.0;
    std::size_t count = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < sampler.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(sampler.size(), start + batch_size); ++i)
            idx.push_back(i);
        auto b = sampler.batch(idx);
        Tensor pred = model.predict(b.x, b.marks);
        for (std::size_t i = 0; i < pred.numel(); ++i) {
            const double e = pred[i] - b.y[i];
            se += e * e;
            ae += std::abs(e);
        }
        count += pred.numel();
    }
    return {se / static_cast<double>(count), ae / static_cast<double>(count), sampler.size()};
}

enum class Baseline { persistence, train_mean };

/// Reference forecasters: repeat the last lookback value, or predict the
/// train mean (zero after standardization).
inline Metrics evaluate_baseline(const SeriesDataset& ds, Split split, std::size_t lookback, std::size_t horizon,
                                 Baseline kind)
{
    WindowSampler sampler(ds, split, lookback, horizon);
    const std::size_t N = ds.n_vars();
    double se = 0.0, ae = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < sampler.size(); ++i) {
        const std::size_t s = sampler.start_row(i);
        for (std::size_t n = 0; n < N; ++n) {
            const double guess = kind == Baseline::persistence ? ds.value(s + lookback - 1, n) : 0.0;
            for (std::size_t t = 0; t < horizon; ++t) {
                const double e = guess - ds.value(s + lookback + t, n);
                se += e * e;
                ae += std::abs(e);
                ++count;
            }
        }
    }
    return {se / static_cast<double>(count), ae / static_cast<double>(count), sampler.size()};
}

/// Relative error reduction (percent) of 7:1:2 training over 4:4:2 training.
inline double ood_decrease_percent(double mse_442, double mse_712)
{
    if (!(mse_442 > 0.0))
        throw ContractError("ood_decrease_percent: reference MSE must be positive");
    return 100.0 * (mse_442 - mse_712) / mse_442;
}

// ---- training loop ------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 10;
    std::size_t patience = 3;
    std::uint64_t seed = 2024;
    std::size_t max_batches_per_epoch = 0; // 0: every training window each epoch

    void validate() const
    {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("learning rate must be positive and finite");
        if (batch_size < 1)
            throw ConfigError("batch size must be positive");
        if (max_epochs < 1)
            throw ConfigError("epoch budget must be positive");
    }
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;
    double seconds = 0.0;
    bool improved = false;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_mse = std::numeric_limits<double>::infinity();
    bool stopped_early = false;
    Metrics test;
};

/// Mini-batch Adam on the train split with early stopping on validation MSE.
/// The parameters of the best validation epoch are restored before testing.
inline TrainResult train(MsgNet& model, const SeriesDataset& ds, const TrainConfig& tc,
                         const std::function<void(const EpochRecord&)>& on_epoch = {})
{
    tc.validate();
    const auto& cfg = model.config();
    if (ds.n_vars() != cfg.n_vars)
        throw SchemaError("dataset has " + std::to_string(ds.n_vars()) + " variables, model expects " +
                          std::to_string(cfg.n_vars));
    WindowSampler sampler(ds, Split::train, cfg.lookback, cfg.horizon);
    // Fail on a short validation or test split before spending any epochs.
    WindowSampler(ds, Split::val, cfg.lookback, cfg.horizon);
    WindowSampler(ds, Split::test, cfg.lookback, cfg.horizon);

    const ParameterList params = model.parameters();
    Adam opt(params, AdamOptions{tc.learning_rate});
    Rng shuffle_rng(tc.seed);
    Rng dropout_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(sampler.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult res;
    std::vector<Tensor> best = snapshot_parameters(params);
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        std::size_t n_batches = (order.size() + tc.batch_size - 1) / tc.batch_size;
        if (tc.max_batches_per_epoch > 0)
            n_batches = std::min(n_batches, tc.max_batches_per_epoch);
        double loss_sum = 0.0;
        for (std::size_t bi = 0; bi < n_batches; ++bi) {
            const std::size_t lo = bi * tc.batch_size;
            const std::size_t hi = std::min(order.size(), lo + tc.batch_size);
            auto b = sampler.batch(std::span<const std::size_t>(order.data() + lo, hi - lo));
            opt.zero_grad();
            Var loss = mse_loss(model.forward(b.x, b.marks, &dropout_rng).forecast, b.y);
            backward(loss);
            opt.step();
            loss_sum += loss.value().item();
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_mse = loss_sum / static_cast<double>(n_batches);
        rec.val_mse = evaluate(model, ds, Split::val, tc.batch_size).mse;
        if (!std::isfinite(rec.val_mse))
            throw NumericError("validation MSE is not finite at epoch " + std::to_string(epoch));
        rec.improved = rec.val_mse < res.best_val_mse;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.epochs.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
        if (rec.improved) {
            res.best_val_mse = rec.val_mse;
            res.best_epoch = epoch;
            best = snapshot_parameters(params);
            stale = 0;
        } else if (++stale >= tc.patience) {
            res.stopped_early = epoch < tc.max_epochs;
            break;
        }
    }
    restore_parameters(params, best);
    res.test = evaluate(model, ds, Split::test, tc.batch_size);
    return res;
}

} // namespace msgnet
