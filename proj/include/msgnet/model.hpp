#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msgnet/attention.hpp"
#include "msgnet/errors.hpp"
#include "msgnet/graph.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/parameters.hpp"
#include "msgnet/random.hpp"
#include "msgnet/spectral.hpp"

namespace msgnet {

/// Calendar granularities fed to the timestamp embedding, in code order.
enum class TimeFeature : std::size_t { month = 0, day, weekday, hour, minute };
inline constexpr std::size_t kTimeFeatureCount = 5;
inline constexpr std::array<const char*, kTimeFeatureCount> kTimeFeatureNames{"month", "day", "weekday", "hour",
                                                                                "minute"};

struct ModelConfig {
    std::size_t n_vars = 7;
    std::size_t lookback = 96;
    std::size_t horizon = 96;
    std::size_t d_model = 16;
    std::size_t k = 3;
    std::size_t n_blocks = 2;
    std::size_t n_heads = 8;
    std::size_t mixhop_order = 2;
    std::size_t node_dim = 10;
    double alpha = 1.0;
    double dropout = 0.0;
    std::array<std::size_t, kTimeFeatureCount> time_vocab{13, 32, 7, 24, 60};
    std::uint64_t seed = 2024;

    void validate() const
    {
        auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
        if (n_vars < 1)
            fail("n_vars must be positive");
        if (horizon < 1)
            fail("horizon must be positive");
        if (n_blocks < 1)
            fail("n_blocks must be positive");
        if (k < 1)
            fail("k must be positive");
        if (lookback < 4 || lookback < 2 * k)
            fail("lookback " + std::to_string(lookback) + " leaves no room for " + std::to_string(k) + " scales");
        if (d_model < 1 || node_dim < 1)
            fail("d_model and node_dim must be positive");
        if (n_heads < 1 || d_model % n_heads != 0)
            fail("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(n_heads) + " heads");
        if (dropout < 0.0 || dropout >= 1.0)
            fail("dropout must lie in [0, 1)");
        for (auto v : time_vocab)
            if (v < 1)
                fail("timestamp vocabularies must be non-empty");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Integer calendar codes for a batch of windows, laid out [batch, length, 5].
struct TimeFeatures {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<std::size_t> codes;

    static TimeFeatures zeros(std::size_t batch, std::size_t length)
    {
        return {batch, length, std::vector<std::size_t>(batch * length * kTimeFeatureCount, 0)};
    }

    std::size_t& at(std::size_t b, std::size_t t, TimeFeature f)
    {
        return codes[(b * length + t) * kTimeFeatureCount + static_cast<std::size_t>(f)];
    }
    std::size_t at(std::size_t b, std::size_t t, TimeFeature f) const
    {
        return codes[(b * length + t) * kTimeFeatureCount + static_cast<std::size_t>(f)];
    }
};

/// Per-window, per-variable statistics of the lookback, each [B, N, 1].
struct NormalizationStats {
    Tensor mean;
    Tensor std;
};

inline constexpr double kStdFloor = 1e-5;

/// Instance normalisation of x [B, N, L] over the time axis. The population
/// standard deviation is floored at kStdFloor.
inline std::pair<Tensor, NormalizationStats> instance_normalize(const Tensor& x)
{
    if (x.rank() != 3)
        throw DimensionError("instance_normalize: expected [B, N, L], got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), N = x.dim(1), L = x.dim(2);
    NormalizationStats st{Tensor({B, N, 1}), Tensor({B, N, 1})};
    Tensor out(x.shape());
    for (std::size_t r = 0; r < B * N; ++r) {
        const double* row = &x[r * L];
        double m = 0.0;
        for (std::size_t t = 0; t < L; ++t)
            m += row[t];
        m /= static_cast<double>(L);
        double v = 0.0;
        for (std::size_t t = 0; t < L; ++t)
            v += (row[t] - m) * (row[t] - m);
        const double sd = std::max(std::sqrt(v / static_cast<double>(L)), kStdFloor);
        st.mean[r] = m;
        st.std[r] = sd;
        for (std::size_t t = 0; t < L; ++t)
            out[r * L + t] = (row[t] - m) / sd;
    }
    return {std::move(out), std::move(st)};
}

/// Fixed sinusoidal positional encoding laid out [d_model, L].
inline Tensor sinusoidal_positions(std::size_t d_model, std::size_t length)
{
    Tensor pe({d_model, length});
    for (std::size_t i = 0; i < d_model; ++i) {
        const double rate = std::exp(-std::log(10000.0) * static_cast<double>(i - i % 2) / static_cast<double>(d_model));
        for (std::size_t t = 0; t < length; ++t) {
            const double angle = static_cast<double>(t) * rate;
            pe[i * length + t] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

struct EmbeddingParams {
    Var conv;                                       // [d_model, N, 3]
    std::array<Var, kTimeFeatureCount> time_tables; // [vocab_p, d_model]
    Tensor positions;                               // [d_model, L], fixed
    double alpha = 1.0;

    static EmbeddingParams init(const ModelConfig& cfg, Rng& rng)
    {
        EmbeddingParams e;
        e.conv = Var::parameter(
            uniform_tensor({cfg.d_model, cfg.n_vars, 3}, 1.0 / std::sqrt(3.0 * static_cast<double>(cfg.n_vars)), rng));
        for (std::size_t p = 0; p < kTimeFeatureCount; ++p)
            e.time_tables[p] = Var::parameter(normal_tensor({cfg.time_vocab[p], cfg.d_model}, 0.1, rng));
        e.positions = sinusoidal_positions(cfg.d_model, cfg.lookback);
        e.alpha = cfg.alpha;
        return e;
    }

    void collect(const std::string& prefix, ParameterList& out) const
    {
        out.push_back({prefix + "conv", conv});
        for (std::size_t p = 0; p < kTimeFeatureCount; ++p)
            out.push_back({prefix + "time." + kTimeFeatureNames[p], time_tables[p]});
    }
};

/// alpha * Conv1D(x_hat) + PE + sum_p SE_p(marks): x_hat [B, N, L] -> [B, d_model, L].
inline Var embed(const Tensor& x_hat, const TimeFeatures& marks, const EmbeddingParams& e)
{
    if (x_hat.rank() != 3)
        throw DimensionError("embed: expected [B, N, L], got " + shape_str(x_hat.shape()));
    const std::size_t B = x_hat.dim(0), L = x_hat.dim(2);
    if (marks.batch != B || marks.length != L || marks.codes.size() != B * L * kTimeFeatureCount)
        throw SchemaError("embed: timestamp features must be [" + std::to_string(B) + ", " + std::to_string(L) + ", " +
                          std::to_string(kTimeFeatureCount) + "], got " + std::to_string(marks.codes.size()) +
                          " codes for batch " + std::to_string(marks.batch) + " x length " +
                          std::to_string(marks.length));
    if (e.positions.dim(1) != L)
        throw DimensionError("embed: positional table covers " + std::to_string(e.positions.dim(1)) +
                             " steps, window has " + std::to_string(L));

    Var values = scale(conv1d(Var::constant(x_hat), e.conv), e.alpha);
    Var out = add(values, Var::constant(e.positions));

    Var stamps;
    for (std::size_t p = 0; p < kTimeFeatureCount; ++p) {
        std::vector<std::size_t> idx(B * L);
        for (std::size_t r = 0; r < B * L; ++r)
            idx[r] = marks.codes[r * kTimeFeatureCount + p];
        Var looked = embedding(e.time_tables[p], idx, {B, L});
        stamps = p == 0 ? looked : add(stamps, looked);
    }
    return add(out, permute(stamps, {0, 2, 1}));
}

/// Softmax of the scale amplitudes: the gate of each scale expert.
inline std::vector<double> scale_weights(std::span<const double> amplitudes)
{
    std::vector<double> w(amplitudes.begin(), amplitudes.end());
    if (w.empty())
        return w;
    for (double a : w)
        if (!std::isfinite(a) || a < 0.0)
            throw ContractError("scale amplitudes must be finite and nonnegative");
    const double m = *std::max_element(w.begin(), w.end());
    double z = 0.0;
    for (auto& v : w) {
        v = std::exp(v - m);
        z += v;
    }
    for (auto& v : w)
        v /= z;
    return w;
}

/// sum_i softmax(amplitudes)_i * outputs_i over equally shaped outputs.
/// `amplitudes` is a [k] tensor; gradients flow through the gate.
inline Var aggregate_scales(const std::vector<Var>& outputs, const Var& amplitudes)
{
    if (outputs.empty() || amplitudes.rank() != 1 || outputs.size() != amplitudes.dim(0))
        throw ContractError("aggregate_scales: " + std::to_string(outputs.size()) + " outputs but amplitudes of shape " +
                            shape_str(amplitudes.shape()));
    for (const auto& o : outputs)
        if (o.shape() != outputs.front().shape())
            throw DimensionError("aggregate_scales: output shapes differ: " + shape_str(o.shape()) + " vs " +
                                 shape_str(outputs.front().shape()));
    for (double a : amplitudes.value().data())
        if (!std::isfinite(a) || a < 0.0)
            throw ContractError("scale amplitudes must be finite and nonnegative");
    const std::size_t k = outputs.size();
    Var gates = softmax(amplitudes, 0);
    Shape gate_shape(outputs.front().rank(), 1);
    Var acc;
    for (std::size_t i = 0; i < k; ++i) {
        Var term = mul(outputs[i], reshape(slice(gates, 0, i, 1), gate_shape));
        acc = i == 0 ? term : add(acc, term);
    }
    return acc;
}

inline Var aggregate_scales(const std::vector<Var>& outputs, std::span<const double> amplitudes)
{
    if (amplitudes.empty())
        throw ContractError("aggregate_scales: no amplitudes");
    return aggregate_scales(outputs,
                            Var::constant(Tensor({amplitudes.size()}, std::vector<double>(amplitudes.begin(), amplitudes.end()))));
}

struct BlockOutput {
    Var out;
    ScaleSet scales;
    std::vector<double> weights;
};

/// One residual layer: scale detection, per-scale graph convolution and
/// attention, amplitude-gated aggregation. Graph parameters bind to scale rank.
struct ScaleGraphBlock {
    std::vector<AdaptiveGraphParams> graphs;
    AttentionParams attention;

    static ScaleGraphBlock init(const ModelConfig& cfg, Rng& rng)
    {
        ScaleGraphBlock b;
        for (std::size_t i = 0; i < cfg.k; ++i)
            b.graphs.push_back(
                AdaptiveGraphParams::init(cfg.n_vars, cfg.d_model, cfg.node_dim, mixhop_powers(cfg.mixhop_order), rng));
        b.attention = AttentionParams::init(cfg.d_model, cfg.n_heads, rng);
        b.attention.dropout = cfg.dropout;
        return b;
    }

    std::size_t k() const { return graphs.size(); }

    void collect(const std::string& prefix, ParameterList& out) const
    {
        for (std::size_t i = 0; i < graphs.size(); ++i)
            graphs[i].collect(prefix + "graph." + std::to_string(i) + ".", out);
        attention.collect(prefix + "attention.", out);
    }

    /// x [B, d_model, L] -> block(x) + x.
    BlockOutput forward(const Var& x, Rng* dropout_rng = nullptr) const
    {
        if (x.rank() != 3)
            throw DimensionError("scale_graph_block: expected [B, d_model, L], got " + shape_str(x.shape()));
        const std::size_t L = x.dim(2);
        BlockOutput r;
        r.scales = identify_scales(x.value(), k());
        std::vector<Var> per_scale;
        per_scale.reserve(k());
        for (std::size_t i = 0; i < k(); ++i) {
            Var plane = to_scale_tensor(x, r.scales[i].period);
            Var mixed = graph_forward(graphs[i], plane);
            Var attended = scale_attention(mixed, attention, dropout_rng);
            per_scale.push_back(from_scale_tensor(attended, L));
        }
        std::vector<std::size_t> freqs;
        for (const auto& e : r.scales.entries)
            freqs.push_back(e.frequency);
        // Bin choice is detached; the gate sees the amplitudes of the chosen bins.
        Var amps = bin_amplitudes(x, freqs);
        r.weights = scale_weights(amps.value().values());
        r.out = add(aggregate_scales(per_scale, amps), x);
        return r;
    }
};

struct ForecastHead {
    Var w_s; // [N, d_model]
    Var w_t; // [L, T]
    Var b;   // [T]

    static ForecastHead init(const ModelConfig& cfg, Rng& rng)
    {
        ForecastHead h;
        h.w_s = linear_weight(cfg.n_vars, cfg.d_model, rng);
        h.w_t = Var::parameter(
            uniform_tensor({cfg.lookback, cfg.horizon}, 1.0 / std::sqrt(static_cast<double>(cfg.lookback)), rng));
        h.b = Var::parameter(Tensor::zeros({cfg.horizon}));
        return h;
    }

    void collect(const std::string& prefix, ParameterList& out) const
    {
        out.push_back({prefix + "w_s", w_s});
        out.push_back({prefix + "w_t", w_t});
        out.push_back({prefix + "b", b});
    }
};

/// W_s x_out W_t + b, then de-normalised with the stored instance statistics.
/// x_out [B, d_model, L] -> [B, N, T].
inline Var forecast_head(const Var& x_out, const ForecastHead& head, const NormalizationStats& stats)
{
    Var y = add(matmul(matmul(head.w_s, x_out), head.w_t), head.b);
    if (stats.mean.shape() != Shape{y.dim(0), y.dim(1), 1} || stats.std.shape() != stats.mean.shape())
        throw DimensionError("forecast_head: statistics " + shape_str(stats.mean.shape()) +
                             " do not match forecast " + shape_str(y.shape()));
    return add(mul(y, Var::constant(stats.std)), Var::constant(stats.mean));
}

struct ForwardResult {
    Var forecast;                // [B, N, T]
    std::vector<ScaleSet> scales; // one per block
    std::vector<std::vector<double>> weights;
};

/// The complete forecaster.
class MsgNet {
public:
    explicit MsgNet(ModelConfig cfg)
        : cfg_(std::move(cfg))
    {
        cfg_.validate();
        Rng rng(cfg_.seed);
        embedding = EmbeddingParams::init(cfg_, rng);
        for (std::size_t l = 0; l < cfg_.n_blocks; ++l)
            blocks.push_back(ScaleGraphBlock::init(cfg_, rng));
        head = ForecastHead::init(cfg_, rng);
    }

    const ModelConfig& config() const noexcept { return cfg_; }

    ParameterList parameters() const
    {
        ParameterList out;
        embedding.collect("embedding.", out);
        for (std::size_t l = 0; l < blocks.size(); ++l)
            blocks[l].collect("blocks." + std::to_string(l) + ".", out);
        head.collect("head.", out);
        return out;
    }

    /// Block-stack output before the head: x_hat [B, N, L] -> [B, d_model, L].
    Var encode(const Tensor& x_hat, const TimeFeatures& marks, ForwardResult* trace = nullptr,
               Rng* dropout_rng = nullptr) const
    {
        Var h = embed(x_hat, marks, embedding);
        for (const auto& block : blocks) {
            auto r = block.forward(h, dropout_rng);
            h = r.out;
            if (trace) {
                trace->scales.push_back(std::move(r.scales));
                trace->weights.push_back(std::move(r.weights));
            }
        }
        return h;
    }

    /// x [B, N, L] raw (un-normalised) window values.
    ForwardResult forward(const Tensor& x, const TimeFeatures& marks, Rng* dropout_rng = nullptr) const
    {
        if (x.rank() != 3 || x.dim(1) != cfg_.n_vars || x.dim(2) != cfg_.lookback)
            throw SchemaError("model expects windows [B, " + std::to_string(cfg_.n_vars) + ", " +
                              std::to_string(cfg_.lookback) + "], got " + shape_str(x.shape()));
        auto [x_hat, stats] = instance_normalize(x);
        ForwardResult r;
        Var h = encode(x_hat, marks, &r, dropout_rng);
        r.forecast = forecast_head(h, head, stats);
        return r;
    }

    /// Inference without recording.
    Tensor predict(const Tensor& x, const TimeFeatures& marks) const
    {
        NoGradGuard guard;
        return forward(x, marks).forecast.value();
    }

    /// Learned adjacency per block and scale rank.
    std::vector<std::vector<Tensor>> adjacencies() const
    {
        NoGradGuard guard;
        std::vector<std::vector<Tensor>> out;
        for (const auto& b : blocks) {
            auto& row = out.emplace_back();
            for (const auto& g : b.graphs)
                row.push_back(build_adjacency(g.e1, g.e2).value());
        }
        return out;
    }

    EmbeddingParams embedding;
    std::vector<ScaleGraphBlock> blocks;
    ForecastHead head;

private:
    ModelConfig cfg_;
};

} // namespace msgnet
