#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msgnet/checkpoint.hpp"
#include "msgnet/data.hpp"
#include "msgnet/model.hpp"
#include "msgnet/spectral.hpp"

// Machine-readable artifacts: scale reports, adjacency exports, forecasts.
namespace msgnet {

inline constexpr const char* kScalesSchema = "msgnet.scales/1";
inline constexpr const char* kGraphsSchema = "msgnet.graphs/1";
inline constexpr const char* kMetricsSchema = "msgnet.metrics/1";
inline constexpr const char* kDeltaSchema = "msgnet.delta/1";
inline constexpr const char* kEpochLogSchema = "msgnet.epoch/1";

/// Dominant scales of every length-L window (step `stride`) of a raw series,
/// plus a histogram of detected frequencies with normalised shares.
inline Json scales_report(const SeriesDataset& ds, std::size_t lookback, std::size_t k, std::size_t stride)
{
    if (stride == 0)
        throw RangeError("scales: stride must be positive");
    if (ds.rows() < lookback)
        throw DatasetError("scales: series has " + std::to_string(ds.rows()) + " rows, the window needs " +
                           std::to_string(lookback));
    const std::size_t N = ds.n_vars();
    Json windows = Json::array();
    std::map<std::size_t, std::size_t> counts; // frequency -> detections
    std::size_t detections = 0;
    for (std::size_t start = 0; start + lookback <= ds.rows(); start += stride) {
        Tensor w({1, N, lookback});
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < lookback; ++t)
                w[n * lookback + t] = ds.value(start + t, n);
        const ScaleSet set = identify_scales(w, k);
        Json entries = Json::array();
        for (const auto& e : set.entries) {
            entries.push_back({{"frequency", e.frequency}, {"period", e.period}, {"amplitude", e.amplitude}});
            ++counts[e.frequency];
            ++detections;
        }
        windows.push_back({{"start", start}, {"timestamp", format_timestamp(ds.timestamps[start])}, {"scales", entries}});
    }
    Json hist = Json::array();
    for (const auto& [f, c] : counts)
        hist.push_back({{"frequency", f},
                        {"period", (lookback + f - 1) / f},
                        {"count", c},
                        {"share", static_cast<double>(c) / static_cast<double>(detections)}});
    Json j;
    j["schema"] = kScalesSchema;
    j["lookback"] = lookback;
    j["k"] = k;
    j["stride"] = stride;
    j["windows"] = std::move(windows);
    j["histogram"] = std::move(hist);
    return j;
}

/// Last-window forecast of a raw series in its own units.
struct ForecastFrame {
    std::vector<TimePoint> timestamps; // T extrapolated instants
    Tensor values;                     // [T, N]
    std::vector<ScaleSet> scales;      // per block, from the input window
};

inline ForecastFrame forecast_last_window(const MsgNet& model, const std::optional<DataStats>& stats,
                                          const SeriesDataset& ds, std::size_t horizon)
{
    const auto& cfg = model.config();
    const std::size_t N = cfg.n_vars, L = cfg.lookback;
    if (ds.n_vars() != N)
        throw SchemaError("input has " + std::to_string(ds.n_vars()) + " variables, checkpoint expects " +
                          std::to_string(N));
    if (ds.rows() < L)
        throw DatasetError("input has " + std::to_string(ds.rows()) + " rows, the lookback needs " +
                           std::to_string(L));
    if (horizon < 1 || horizon > cfg.horizon)
        throw RangeError("forecast horizon must lie in [1, " + std::to_string(cfg.horizon) + "]");
    const std::size_t start = ds.rows() - L;
    Tensor x({1, N, L});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < L; ++t) {
            double v = ds.value(start + t, n);
            if (stats)
                v = (v - stats->mean[n]) / stats->std[n];
            x[n * L + t] = v;
        }
    const auto marks = marks_from_timestamps(std::span<const TimePoint>(ds.timestamps).subspan(start, L));
    NoGradGuard guard;
    ForwardResult r = model.forward(x, marks);
    ForecastFrame f;
    f.values = Tensor({horizon, N});
    for (std::size_t t = 0; t < horizon; ++t) {
        f.timestamps.push_back(ds.timestamps.back() + ds.step * static_cast<long>(t + 1));
        for (std::size_t n = 0; n < N; ++n) {
            double v = r.forecast.value()[n * cfg.horizon + t];
            if (stats)
                v = v * stats->std[n] + stats->mean[n];
            f.values[t * N + n] = v;
        }
    }
    f.scales = std::move(r.scales);
    return f;
}

inline SeriesDataset forecast_as_dataset(const ForecastFrame& f, const SeriesDataset& source)
{
    SeriesDataset out;
    out.time_column = source.time_column;
    out.names = source.names;
    out.step = source.step;
    out.timestamps = f.timestamps;
    out.values = f.values;
    return out;
}

/// Adjacency of every block and scale rank. Periods are attached when a
/// forward trace supplies them; they vary with the input window.
inline Json graph_export(const MsgNet& model, const std::vector<ScaleSet>* periods = nullptr)
{
    const auto adj = model.adjacencies();
    const std::size_t N = model.config().n_vars;
    Json graphs = Json::array();
    for (std::size_t b = 0; b < adj.size(); ++b)
        for (std::size_t i = 0; i < adj[b].size(); ++i) {
            Json g;
            g["block"] = b;
            g["scale_rank"] = i;
            g["scale_period"] = periods ? Json((*periods)[b][i].period) : Json(nullptr);
            g["matrix"] = adj[b][i].values();
            graphs.push_back(std::move(g));
        }
    Json j;
    j["schema"] = kGraphsSchema;
    j["n_vars"] = N;
    j["n_blocks"] = adj.size();
    j["k"] = model.config().k;
    j["graphs"] = std::move(graphs);
    return j;
}

} // namespace msgnet
