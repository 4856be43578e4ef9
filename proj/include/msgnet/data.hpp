#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "msgnet/errors.hpp"
#include "msgnet/model.hpp"
#include "msgnet/random.hpp"
#include "msgnet/tensor.hpp"

// Dataset ingestion (ETT-style CSV), chronological splits, train-statistic
// standardisation, sliding windows and synthetic fixtures.
namespace msgnet {

using TimePoint = std::chrono::sys_seconds;

// ---- timestamps ------------------------------------------------------------------

/// Parses "YYYY-MM-DD[ T]HH:MM[:SS]" or "YYYY-MM-DD".
inline std::optional<TimePoint> parse_timestamp(const std::string& text)
{
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    int used = 0;
    const char* c = text.c_str();
    bool ok = false;
    if (std::sscanf(c, "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s, &used) == 7 &&
        (sep == ' ' || sep == 'T'))
        ok = true;
    else if (h = mi = s = 0; std::sscanf(c, "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &used) == 6 &&
                             (sep == ' ' || sep == 'T'))
        ok = true;
    else if (h = mi = s = 0; std::sscanf(c, "%4d-%2d-%2d%n", &y, &mo, &d, &used) == 3)
        ok = true;
    if (!ok || static_cast<std::size_t>(used) != text.size())
        return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59)
        return std::nullopt;
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_timestamp(TimePoint t)
{
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

/// Calendar codes (month 1-12, day 1-31, weekday 0-6 from Sunday, hour, minute).
inline std::array<std::size_t, kTimeFeatureCount> time_codes(TimePoint t)
{
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    return {static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), weekday{day_point}.c_encoding(),
            static_cast<std::size_t>(hms.hours().count()), static_cast<std::size_t>(hms.minutes().count())};
}

// ---- dataset -----------------------------------------------------------------------

enum class Split { train, val, test };

inline const char* split_name(Split s)
{
    switch (s) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    }
    return "?";
}

struct SplitRatios {
    double train = 0.7, val = 0.1, test = 0.2;
    friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

/// Ratio sets of the evaluation protocol.
inline constexpr std::array<SplitRatios, 3> kProtocolRatios{SplitRatios{0.7, 0.1, 0.2}, SplitRatios{0.6, 0.2, 0.2},
                                                            SplitRatios{0.4, 0.4, 0.2}};

/// Row ranges [0, train_end), [train_end, val_end), [val_end, rows).
struct SplitBounds {
    std::size_t train_end = 0, val_end = 0, rows = 0;

    std::size_t begin(Split s) const { return s == Split::train ? 0 : (s == Split::val ? train_end : val_end); }
    std::size_t end(Split s) const { return s == Split::train ? train_end : (s == Split::val ? val_end : rows); }
    std::size_t length(Split s) const { return end(s) - begin(s); }
    friend bool operator==(const SplitBounds&, const SplitBounds&) = default;
};

struct SeriesDataset {
    std::vector<TimePoint> timestamps;
    std::vector<std::string> names; // variable columns; the time column is named `time_column`
    std::string time_column = "date";
    Tensor values; // [rows, N]
    std::chrono::seconds step{0};

    std::optional<SplitBounds> splits;
    SplitRatios ratios;
    std::vector<double> train_mean, train_std; // set by split_and_standardize
    bool standardized = false;

    std::size_t rows() const { return timestamps.size(); }
    std::size_t n_vars() const { return names.size(); }
    double value(std::size_t row, std::size_t var) const { return values[row * n_vars() + var]; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t\r\"");
        const auto e = c.find_last_not_of(" \t\r\"");
        c = b == std::string::npos ? std::string{} : c.substr(b, e - b + 1);
    }
    return cells;
}

// lines[r] is the file line of data row r.
inline void check_time_axis(const std::vector<TimePoint>& ts, const std::vector<std::size_t>& lines,
                            std::chrono::seconds& step)
{
    if (ts.size() < 2)
        throw DatasetError("dataset needs at least 2 rows, got " + std::to_string(ts.size()));
    step = ts[1] - ts[0];
    for (std::size_t r = 1; r < ts.size(); ++r) {
        const auto d = ts[r] - ts[r - 1];
        const std::string where = "row " + std::to_string(r + 1) + " (line " + std::to_string(lines[r]) + ")";
        if (d.count() == 0)
            throw DatasetError("duplicated timestamp " + format_timestamp(ts[r]) + " at " + where);
        if (d.count() < 0)
            throw DatasetError("timestamps not increasing at " + where);
        if (d != step)
            throw DatasetError("irregular step at " + where + ": expected " + std::to_string(step.count()) +
                               " s, found " + std::to_string(d.count()) + " s");
    }
}

} // namespace detail

/// Reads an ETT-convention CSV: a header row, an ISO-8601 time column first,
/// numeric variable columns after it. Rows must have one constant time step.
inline SeriesDataset load_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw DatasetError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw DatasetError(path + ": missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
        line.erase(0, 3); // UTF-8 BOM
    auto header = detail::split_csv_line(line);
    if (header.size() < 2)
        throw DatasetError(path + ": header needs a time column and at least one variable");

    SeriesDataset ds;
    ds.time_column = header[0];
    ds.names.assign(header.begin() + 1, header.end());
    const std::size_t N = ds.names.size();
    std::vector<double> values;
    std::vector<std::size_t> lines;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const std::size_t row = ds.timestamps.size() + 1;
        const std::string where = path + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) + ")";
        auto cells = detail::split_csv_line(line);
        if (cells.size() != N + 1)
            throw DatasetError(where + ": expected " + std::to_string(N + 1) + " cells, found " +
                               std::to_string(cells.size()));
        auto t = parse_timestamp(cells[0]);
        if (!t)
            throw DatasetError(where + ": unparseable timestamp '" + cells[0] + "'");
        ds.timestamps.push_back(*t);
        lines.push_back(line_no);
        for (std::size_t j = 1; j <= N; ++j) {
            const char* s = cells[j].c_str();
            char* end = nullptr;
            const double v = std::strtod(s, &end);
            if (cells[j].empty() || end != s + cells[j].size() || !std::isfinite(v))
                throw DatasetError(where + ": non-numeric value '" + cells[j] + "' in column " + ds.names[j - 1]);
            values.push_back(v);
        }
    }
    try {
        detail::check_time_axis(ds.timestamps, lines, ds.step);
    } catch (const DatasetError& e) {
        throw DatasetError(path + ": " + e.what());
    }
    ds.values = Tensor({ds.timestamps.size(), N}, std::move(values));
    return ds;
}

inline void save_csv(const SeriesDataset& ds, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw DatasetError("cannot write " + path);
    out << ds.time_column;
    for (const auto& n : ds.names)
        out << ',' << n;
    out << '\n';
    char buf[40];
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        out << format_timestamp(ds.timestamps[r]);
        for (std::size_t j = 0; j < ds.n_vars(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.value(r, j));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out)
        throw DatasetError("failed writing " + path);
}

/// Chronological split with floor(ratio * rows) train and test rows (the
/// validation split takes the remainder), then z-scoring of every split with
/// train-split statistics. Equal test ratios therefore share one test range.
inline SeriesDataset split_and_standardize(SeriesDataset ds, SplitRatios r)
{
    if (ds.standardized)
        throw DatasetError("dataset is already standardized");
    if (r.train <= 0 || r.val <= 0 || r.test <= 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
        throw DatasetError("split ratios must be positive and sum to 1");
    bool known = false;
    for (const auto& p : kProtocolRatios)
        known = known || (std::abs(p.train - r.train) < 1e-9 && std::abs(p.val - r.val) < 1e-9 &&
                          std::abs(p.test - r.test) < 1e-9);
    if (!known)
        throw DatasetError("split ratios must be one of 0.7/0.1/0.2, 0.6/0.2/0.2 or 0.4/0.4/0.2");

    const std::size_t rows = ds.rows();
    // The epsilon keeps products such as 0.7 * 10 from landing just below an integer.
    const auto n_train = static_cast<std::size_t>(std::floor(r.train * static_cast<double>(rows) + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(r.test * static_cast<double>(rows) + 1e-9));
    if (n_train == 0 || n_test == 0 || n_train + n_test >= rows)
        throw DatasetError("split of " + std::to_string(rows) + " rows leaves an empty split");
    SplitBounds b{n_train, rows - n_test, rows};

    const std::size_t N = ds.n_vars();
    ds.train_mean.assign(N, 0.0);
    ds.train_std.assign(N, 0.0);
    for (std::size_t j = 0; j < N; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n_train; ++i)
            m += ds.value(i, j);
        m /= static_cast<double>(n_train);
        double v = 0.0;
        for (std::size_t i = 0; i < n_train; ++i)
            v += (ds.value(i, j) - m) * (ds.value(i, j) - m);
        ds.train_mean[j] = m;
        ds.train_std[j] = std::max(std::sqrt(v / static_cast<double>(n_train)), kStdFloor);
    }
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < N; ++j)
            ds.values[i * N + j] = (ds.values[i * N + j] - ds.train_mean[j]) / ds.train_std[j];
    ds.splits = b;
    ds.ratios = r;
    ds.standardized = true;
    return ds;
}

// ---- windows --------------------------------------------------------------------------

struct WindowSample {
    std::size_t start = 0; // absolute row of the first lookback step
    Tensor lookback;       // [N, L]
    Tensor target;         // [N, T]
    TimeFeatures lookback_marks; // [1, L, 5]
    TimeFeatures target_marks;   // [1, T, 5]
};

struct WindowBatch {
    Tensor x;           // [B, N, L]
    Tensor y;           // [B, N, T]
    TimeFeatures marks; // [B, L, 5]
    std::vector<std::size_t> starts;
};

/// Every contiguous (lookback, horizon) pair inside one split, in order.
class WindowSampler {
public:
    WindowSampler(const SeriesDataset& ds, Split split, std::size_t lookback, std::size_t horizon,
                  std::size_t stride = 1)
        : ds_(&ds)
        , lookback_(lookback)
        , horizon_(horizon)
        , stride_(stride)
    {
        if (!ds.splits)
            throw DatasetError("dataset has no split boundaries; call split_and_standardize first");
        if (lookback == 0 || horizon == 0 || stride == 0)
            throw DatasetError("lookback, horizon and stride must be positive");
        begin_ = ds.splits->begin(split);
        const std::size_t len = ds.splits->length(split);
        if (len < lookback + horizon)
            throw DatasetError(std::string(split_name(split)) + " split has " + std::to_string(len) +
                               " rows; windows need at least L + T = " + std::to_string(lookback + horizon));
        count_ = (len - lookback - horizon) / stride + 1;
        codes_.reserve(len);
        for (std::size_t r = begin_; r < begin_ + len; ++r)
            codes_.push_back(time_codes(ds.timestamps[r]));
    }

    std::size_t size() const noexcept { return count_; }
    std::size_t lookback() const noexcept { return lookback_; }
    std::size_t horizon() const noexcept { return horizon_; }
    std::size_t start_row(std::size_t i) const { return begin_ + i * stride_; }

    WindowSample sample(std::size_t i) const
    {
        auto b = batch(std::span<const std::size_t>(&i, 1));
        const std::size_t N = ds_->n_vars();
        WindowSample s;
        s.start = b.starts[0];
        s.lookback = b.x.reshaped({N, lookback_});
        s.target = b.y.reshaped({N, horizon_});
        s.lookback_marks = std::move(b.marks);
        s.target_marks = marks_for(s.start + lookback_, horizon_);
        return s;
    }

    WindowBatch batch(std::span<const std::size_t> indices) const
    {
        const std::size_t B = indices.size(), N = ds_->n_vars(), L = lookback_, T = horizon_;
        WindowBatch wb{Tensor({B, N, L}), Tensor({B, N, T}), TimeFeatures::zeros(B, L), {}};
        for (std::size_t b = 0; b < B; ++b) {
            if (indices[b] >= count_)
                throw RangeError("window index " + std::to_string(indices[b]) + " out of range");
            const std::size_t start = start_row(indices[b]);
            wb.starts.push_back(start);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t t = 0; t < L; ++t)
                    wb.x[(b * N + n) * L + t] = ds_->value(start + t, n);
                for (std::size_t t = 0; t < T; ++t)
                    wb.y[(b * N + n) * T + t] = ds_->value(start + L + t, n);
            }
            for (std::size_t t = 0; t < L; ++t)
                for (std::size_t f = 0; f < kTimeFeatureCount; ++f)
                    wb.marks.codes[(b * L + t) * kTimeFeatureCount + f] = codes_[start - begin_ + t][f];
        }
        return wb;
    }

private:
    TimeFeatures marks_for(std::size_t row, std::size_t len) const
    {
        auto m = TimeFeatures::zeros(1, len);
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t f = 0; f < kTimeFeatureCount; ++f)
                m.codes[t * kTimeFeatureCount + f] = codes_[row - begin_ + t][f];
        return m;
    }

    const SeriesDataset* ds_;
    std::size_t lookback_, horizon_, stride_;
    std::size_t begin_ = 0, count_ = 0;
    std::vector<std::array<std::size_t, kTimeFeatureCount>> codes_;
};

/// Calendar codes for an arbitrary run of timestamps as a [1, len, 5] batch.
inline TimeFeatures marks_from_timestamps(std::span<const TimePoint> ts)
{
    auto m = TimeFeatures::zeros(1, ts.size());
    for (std::size_t t = 0; t < ts.size(); ++t) {
        const auto c = time_codes(ts[t]);
        for (std::size_t f = 0; f < kTimeFeatureCount; ++f)
            m.codes[t * kTimeFeatureCount + f] = c[f];
    }
    return m;
}

// ---- synthetic fixtures -------------------------------------------------------------------

struct TwoToneParts {
    SeriesDataset data;
    Tensor long_part;  // [rows, N] noise-free long-period component
    Tensor short_part; // [rows, N] noise-free short-period component
};

inline TimePoint default_series_start()
{
    using namespace std::chrono;
    return sys_days{year{2020} / January / 1};
}

/// Two sinusoids per variable (amplitudes 1 and 0.5) plus Gaussian noise of
/// standard deviation `noise`. Variables 0 and 1 share the long-period phase
/// and carry opposite short-period signs: positively correlated on the long
/// scale, negatively on the short one. Later variables draw random phases.
inline TwoToneParts synth_two_tone_parts(std::size_t n_vars, std::size_t rows, std::array<std::size_t, 2> periods,
                                         double noise, std::uint64_t seed)
{
    if (n_vars < 1 || rows < 2 || periods[0] == 0 || periods[1] == 0)
        throw DatasetError("synth_two_tone: need at least one variable, two rows and positive periods");
    Rng rng(seed);
    std::vector<double> phase_long(n_vars, 0.0), phase_short(n_vars, 0.0), sign(n_vars, 1.0);
    for (std::size_t n = 0; n < n_vars; ++n) {
        if (n == 1) {
            sign[n] = -1.0;
        } else if (n >= 2) {
            phase_long[n] = rng.uniform(0.0, 2.0 * std::numbers::pi);
            phase_short[n] = rng.uniform(0.0, 2.0 * std::numbers::pi);
            sign[n] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        }
    }
    TwoToneParts out;
    out.long_part = Tensor({rows, n_vars});
    out.short_part = Tensor({rows, n_vars});
    Tensor values({rows, n_vars});
    const double w1 = 2.0 * std::numbers::pi / static_cast<double>(periods[0]);
    const double w2 = 2.0 * std::numbers::pi / static_cast<double>(periods[1]);
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t n = 0; n < n_vars; ++n) {
            const double lp = std::sin(w1 * static_cast<double>(t) + phase_long[n]);
            const double sp = 0.5 * sign[n] * std::sin(w2 * static_cast<double>(t) + phase_short[n]);
            out.long_part[t * n_vars + n] = lp;
            out.short_part[t * n_vars + n] = sp;
            values[t * n_vars + n] = lp + sp + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
        }
    SeriesDataset& ds = out.data;
    ds.step = std::chrono::hours{1};
    const TimePoint start = default_series_start();
    for (std::size_t t = 0; t < rows; ++t)
        ds.timestamps.push_back(start + ds.step * static_cast<long>(t));
    for (std::size_t n = 0; n < n_vars; ++n)
        ds.names.push_back("v" + std::to_string(n));
    ds.values = std::move(values);
    return out;
}

inline SeriesDataset synth_two_tone(std::size_t n_vars, std::size_t rows, std::array<std::size_t, 2> periods,
                                    double noise, std::uint64_t seed)
{
    return synth_two_tone_parts(n_vars, rows, periods, noise, seed).data;
}

/// Two-tone series with a distribution shift: at `shift_fraction` of the rows
/// the level drops by `drop` and then recovers half of it linearly over
/// `recovery` rows, while the periodic amplitude shrinks by the same factor.
inline SeriesDataset synth_level_shift(std::size_t n_vars, std::size_t rows, double noise, std::uint64_t seed,
                                       double shift_fraction = 0.5, double drop = 3.0, std::size_t recovery = 500)
{
    SeriesDataset ds = synth_two_tone(n_vars, rows, {24, 12}, noise, seed);
    const auto shift_row = static_cast<std::size_t>(shift_fraction * static_cast<double>(rows));
    for (std::size_t t = shift_row; t < rows; ++t) {
        const double progress =
            recovery == 0 ? 1.0 : std::min(1.0, static_cast<double>(t - shift_row) / static_cast<double>(recovery));
        const double level = -drop * (1.0 - 0.5 * progress);
        const double damp = 1.0 - 0.5 * (1.0 - 0.5 * progress);
        for (std::size_t n = 0; n < n_vars; ++n)
            ds.values[t * n_vars + n] = damp * ds.values[t * n_vars + n] + level;
    }
    return ds;
}

} // namespace msgnet
