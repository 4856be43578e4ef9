#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "msgnet/errors.hpp"
#include "msgnet/ops.hpp"
#include "msgnet/tensor.hpp"

namespace msgnet {

/// One detected periodic scale.
struct ScaleEntry {
    std::size_t frequency = 0; // FFT bin index, 1..L/2
    std::size_t period = 0;    // ceil(L / frequency)
    double amplitude = 0.0;    // batch/channel averaged amplitude of the bin

    friend bool operator==(const ScaleEntry&, const ScaleEntry&) = default;
};

/// The k dominant scales of one window, strongest first.
struct ScaleSet {
    std::size_t window_length = 0;
    std::vector<ScaleEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    const ScaleEntry& operator[](std::size_t i) const { return entries[i]; }

    std::vector<double> amplitudes() const
    {
        std::vector<double> a;
        a.reserve(entries.size());
        for (const auto& e : entries)
            a.push_back(e.amplitude);
        return a;
    }

    friend bool operator==(const ScaleSet&, const ScaleSet&) = default;
};

namespace detail {

// FFTW planning is not thread-safe; execution on fresh arrays is.
class RealFftPlans {
public:
    static RealFftPlans& instance()
    {
        static RealFftPlans plans;
        return plans;
    }

    fftw_plan get(std::size_t n)
    {
        std::lock_guard lock(mutex_);
        auto it = plans_.find(n);
        if (it != plans_.end())
            return it->second;
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
        fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
        plans_.emplace(n, p);
        return p;
    }

    RealFftPlans(const RealFftPlans&) = delete;
    RealFftPlans& operator=(const RealFftPlans&) = delete;

private:
    RealFftPlans() = default;
    ~RealFftPlans()
    {
        for (auto& [n, p] : plans_)
            fftw_destroy_plan(p);
    }

    std::mutex mutex_;
    std::map<std::size_t, fftw_plan> plans_;
};

struct FftBuffers {
    std::size_t n = 0;
    double* in = nullptr;
    fftw_complex* out = nullptr;

    void ensure(std::size_t len)
    {
        if (len == n)
            return;
        release();
        in = fftw_alloc_real(len);
        out = fftw_alloc_complex(len / 2 + 1);
        n = len;
    }
    void release()
    {
        if (in)
            fftw_free(in);
        if (out)
            fftw_free(out);
        in = nullptr;
        out = nullptr;
        n = 0;
    }
    ~FftBuffers() { release(); }
};

} // namespace detail

/// |DFT| of each length-L row along the last axis: [..., L] -> [..., L/2 + 1].
/// Not differentiable; scale selection is structure, not a trained quantity.
inline Tensor rfft_amplitude(const Tensor& x)
{
    if (x.rank() == 0 || x.shape().back() < 2)
        throw RangeError("rfft_amplitude: signal length must be at least 2, got shape " + shape_str(x.shape()));
    const std::size_t L = x.shape().back();
    const std::size_t bins = L / 2 + 1;
    const std::size_t rows = x.numel() / L;
    Shape out_shape = x.shape();
    out_shape.back() = bins;
    Tensor out(out_shape);

    fftw_plan plan = detail::RealFftPlans::instance().get(L);
    thread_local detail::FftBuffers buf;
    buf.ensure(L);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data().begin() + r * L, L, buf.in);
        fftw_execute_dft_r2c(plan, buf.in, buf.out);
        for (std::size_t f = 0; f < bins; ++f)
            out[r * bins + f] = std::hypot(buf.out[f][0], buf.out[f][1]);
    }
    return out;
}

/// Top-k periodic scales of x [..., L]: amplitudes averaged over every leading
/// axis, DC excluded, ties resolved toward the lower frequency.
inline ScaleSet identify_scales(const Tensor& x, std::size_t k)
{
    if (x.rank() == 0)
        throw DimensionError("identify_scales: input must have a temporal axis");
    const std::size_t L = x.shape().back();
    if (L < 4)
        throw RangeError("identify_scales: window length " + std::to_string(L) + " below minimum 4");
    if (k < 1)
        throw RangeError("identify_scales: k must be at least 1");
    const std::size_t max_f = L / 2;
    if (k > max_f)
        throw RangeError("identify_scales: too many scales, k = " + std::to_string(k) + " exceeds L/2 = " +
                         std::to_string(max_f));

    const Tensor amp = rfft_amplitude(x);
    const std::size_t bins = L / 2 + 1;
    const std::size_t rows = amp.numel() / bins;
    std::vector<double> avg(max_f, 0.0); // avg[f - 1] for f = 1..L/2
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t f = 1; f <= max_f; ++f)
            avg[f - 1] += amp[r * bins + f];
    for (auto& v : avg)
        v /= static_cast<double>(rows);

    ScaleSet set;
    set.window_length = L;
    for (std::size_t i : top_k(avg, k)) {
        const std::size_t f = i + 1;
        set.entries.push_back({f, (L + f - 1) / f, avg[i]});
    }
    return set;
}

/// Mean |DFT| at the given bins over every leading axis: x [..., L] -> [k].
/// Differentiable in x; which bins to read is decided elsewhere.
inline Var bin_amplitudes(const Var& x, const std::vector<std::size_t>& freqs)
{
    if (x.rank() == 0 || x.shape().back() < 2)
        throw RangeError("bin_amplitudes: signal length must be at least 2, got shape " + shape_str(x.shape()));
    const std::size_t L = x.shape().back();
    const std::size_t rows = x.value().numel() / L;
    const std::size_t k = freqs.size();
    for (auto f : freqs)
        if (f > L / 2)
            throw RangeError("bin_amplitudes: bin " + std::to_string(f) + " above L/2 = " + std::to_string(L / 2));
    // cos/sin tables per requested bin; angles reduced mod L to keep them exact.
    std::vector<double> cs(k * L), sn(k * L);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t t = 0; t < L; ++t) {
            const double th = 2.0 * std::numbers::pi * static_cast<double>(freqs[i] * t % L) / static_cast<double>(L);
            cs[i * L + t] = std::cos(th);
            sn[i * L + t] = std::sin(th);
        }
    // Per (row, bin): real part re = sum x cos, imaginary im = -sum x sin.
    std::vector<double> re(rows * k), im(rows * k), mag(rows * k);
    Tensor out({k});
    const Tensor& xv = x.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < k; ++i) {
            double a = 0.0, b = 0.0;
            for (std::size_t t = 0; t < L; ++t) {
                a += xv[r * L + t] * cs[i * L + t];
                b -= xv[r * L + t] * sn[i * L + t];
            }
            re[r * k + i] = a;
            im[r * k + i] = b;
            mag[r * k + i] = std::hypot(a, b);
            out[i] += mag[r * k + i] / static_cast<double>(rows);
        }
    auto nx = x.node();
    return detail::make_result(std::move(out), {&x},
                               [nx, L, rows, k, cs = std::move(cs), sn = std::move(sn), re = std::move(re),
                                im = std::move(im), mag = std::move(mag)](const detail::Node& self) {
                                   Tensor* gx = detail::grad_sink(nx);
                                   if (!gx)
                                       return;
                                   for (std::size_t r = 0; r < rows; ++r)
                                       for (std::size_t i = 0; i < k; ++i) {
                                           const double m = mag[r * k + i];
                                           if (m == 0.0)
                                               continue; // subgradient 0 at the cusp
                                           const double g = self.grad[i] / (static_cast<double>(rows) * m);
                                           const double a = re[r * k + i], b = im[r * k + i];
                                           for (std::size_t t = 0; t < L; ++t)
                                               (*gx)[r * L + t] += g * (a * cs[i * L + t] - b * sn[i * L + t]);
                                       }
                               });
}

/// Folds x [..., L] into [..., s, c] with c = ceil(L / s): the series is
/// zero-padded to s * c and column j holds the contiguous segment j, so
/// element (r, j) is x[j * s + r].
inline Var to_scale_tensor(const Var& x, std::size_t period)
{
    if (x.rank() == 0)
        throw DimensionError("to_scale_tensor: input must have a temporal axis");
    const std::size_t L = x.shape().back();
    if (period < 1 || period > L)
        throw RangeError("to_scale_tensor: period " + std::to_string(period) + " outside [1, " + std::to_string(L) +
                         "]");
    const std::size_t cols = (L + period - 1) / period;
    const long last = static_cast<long>(x.rank()) - 1;
    Var padded = pad_end(x, last, period * cols);
    Shape seg = x.shape();
    seg.back() = cols;
    seg.push_back(period);
    Var folded = reshape(padded, seg);
    return transpose(folded, -1, -2);
}

/// Inverse of to_scale_tensor: [..., s, c] -> [..., L], dropping the padding.
inline Var from_scale_tensor(const Var& t, std::size_t length)
{
    if (t.rank() < 2)
        throw DimensionError("from_scale_tensor: expected [..., s, c], got " + shape_str(t.shape()));
    const std::size_t period = t.dim(-2);
    const std::size_t cols = t.dim(-1);
    if (period * cols < length)
        throw RangeError("from_scale_tensor: " + std::to_string(period) + " x " + std::to_string(cols) +
                         " scale plane holds fewer than " + std::to_string(length) + " steps");
    Var segs = transpose(t, -1, -2);
    Shape flat(t.shape().begin(), t.shape().end() - 2);
    flat.push_back(period * cols);
    Var series = reshape(segs, flat);
    if (period * cols == length)
        return series;
    return slice(series, -1, 0, length);
}

} // namespace msgnet
