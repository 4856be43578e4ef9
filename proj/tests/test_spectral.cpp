#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "msgnet/spectral.hpp"
#include "support/gradcheck.hpp"

using namespace msgnet;
using msgnet::testing::random_tensor;

namespace {

std::vector<double> naive_dft_amplitude(std::span<const double> x)
{
    const std::size_t L = x.size();
    std::vector<double> amp(L / 2 + 1);
    for (std::size_t f = 0; f <= L / 2; ++f) {
        std::complex<double> s = 0.0;
        for (std::size_t t = 0; t < L; ++t)
            s += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(f * t % L) / static_cast<double>(L));
        amp[f] = std::abs(s);
    }
    return amp;
}

Tensor tone_window(std::size_t channels, std::size_t L, std::vector<std::pair<double, double>> tones)
{
    Tensor x({1, channels, L});
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t t = 0; t < L; ++t)
            for (auto [f, a] : tones)
                x[c * L + t] += a * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / static_cast<double>(L));
    return x;
}

} // namespace

TEST(RfftAmplitude, ConstantSignalIsDcOnly)
{
    Tensor x({96}, -2.5);
    Tensor a = rfft_amplitude(x);
    ASSERT_EQ(a.shape(), (Shape{49}));
    EXPECT_NEAR(a[0], 96 * 2.5, 1e-9);
    for (std::size_t f = 1; f < 49; ++f)
        EXPECT_NEAR(a[f], 0.0, 1e-9);
}

TEST(RfftAmplitude, SingleToneHasOneBin)
{
    Tensor a = rfft_amplitude(tone_window(1, 96, {{4.0, 1.0}}).reshaped({96}));
    for (std::size_t f = 0; f < 49; ++f)
        EXPECT_NEAR(a[f], f == 4 ? 48.0 : 0.0, 1e-9);
}

TEST(RfftAmplitude, MatchesNaiveDftAndParseval)
{
    Rng rng(1);
    for (std::size_t L : {2, 3, 17, 128, 255}) {
        Tensor x = random_tensor({2, L}, rng);
        Tensor a = rfft_amplitude(x);
        for (std::size_t r = 0; r < 2; ++r) {
            auto row = std::span<const double>(x.data()).subspan(r * L, L);
            auto ref = naive_dft_amplitude(row);
            double energy = 0.0, spectral = 0.0;
            for (double v : row)
                energy += v * v;
            for (std::size_t f = 0; f <= L / 2; ++f) {
                EXPECT_NEAR(a[r * (L / 2 + 1) + f], ref[f], 1e-9);
                const double mult = (f == 0 || (L % 2 == 0 && f == L / 2)) ? 1.0 : 2.0;
                spectral += mult * ref[f] * ref[f];
            }
            EXPECT_NEAR(energy, spectral / static_cast<double>(L), 1e-8 * energy);
        }
    }
}

TEST(RfftAmplitude, RejectsShortSignal)
{
    EXPECT_THROW(rfft_amplitude(Tensor({1})), RangeError);
}

TEST(IdentifyScales, SingleToneAcrossChannels)
{
    ScaleSet s = identify_scales(tone_window(5, 96, {{4.0, 1.0}}), 1);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].frequency, 4u);
    EXPECT_EQ(s[0].period, 24u);
    EXPECT_EQ(s.window_length, 96u);
}

TEST(IdentifyScales, TwoTonesInAmplitudeOrder)
{
    ScaleSet s = identify_scales(tone_window(3, 96, {{4.0, 1.0}, {8.0, 0.5}}), 2);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].frequency, 4u);
    EXPECT_EQ(s[0].period, 24u);
    EXPECT_EQ(s[1].frequency, 8u);
    EXPECT_EQ(s[1].period, 12u);
    EXPECT_GT(s[0].amplitude, s[1].amplitude);
}

TEST(IdentifyScales, NonDivisiblePeriodRoundsUp)
{
    ScaleSet s = identify_scales(tone_window(1, 100, {{3.0, 1.0}}), 1);
    EXPECT_EQ(s[0].frequency, 3u);
    EXPECT_EQ(s[0].period, 34u);
}

TEST(IdentifyScales, Preconditions)
{
    EXPECT_THROW(identify_scales(Tensor({1, 1, 3}), 1), RangeError);
    EXPECT_THROW(identify_scales(Tensor({1, 1, 16}), 0), RangeError);
    EXPECT_THROW(identify_scales(Tensor({1, 1, 16}), 9), RangeError);
    EXPECT_NO_THROW(identify_scales(Tensor({1, 1, 16}), 8));
}

TEST(IdentifyScales, InvariantToOffsetAndBatchOrder)
{
    Rng rng(2);
    Tensor x = random_tensor({3, 4, 40}, rng);
    Tensor shifted = x;
    for (auto& v : shifted.data())
        v += 3.0;
    Tensor swapped = x;
    std::swap_ranges(swapped.data().begin(), swapped.data().begin() + 160, swapped.data().begin() + 320);
    const ScaleSet a = identify_scales(x, 4);
    const ScaleSet b = identify_scales(shifted, 4);
    const ScaleSet c = identify_scales(swapped, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a[i].frequency, b[i].frequency);
        EXPECT_NEAR(a[i].amplitude, b[i].amplitude, 1e-9);
        EXPECT_EQ(a[i].frequency, c[i].frequency);
        EXPECT_NEAR(a[i].amplitude, c[i].amplitude, 1e-12);
    }
}

TEST(IdentifyScales, SortedDistinctAndInRange)
{
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t L = 4 + rng.below(100);
        const std::size_t k = 1 + rng.below(L / 2);
        ScaleSet s = identify_scales(random_tensor({2, 3, L}, rng), k);
        ASSERT_EQ(s.size(), k);
        for (std::size_t i = 0; i < k; ++i) {
            EXPECT_GE(s[i].frequency, 1u);
            EXPECT_LE(s[i].frequency, L / 2);
            EXPECT_EQ(s[i].period, (L + s[i].frequency - 1) / s[i].frequency);
            if (i > 0) {
                EXPECT_GE(s[i - 1].amplitude, s[i].amplitude);
            }
            for (std::size_t j = 0; j < i; ++j)
                EXPECT_NE(s[i].frequency, s[j].frequency);
        }
    }
}

TEST(IdentifyScales, TiesGoToLowerFrequency)
{
    // Every bin of a silent window is exactly zero.
    ScaleSet s = identify_scales(Tensor({1, 2, 32}), 3);
    EXPECT_EQ(s[0].frequency, 1u);
    EXPECT_EQ(s[1].frequency, 2u);
    EXPECT_EQ(s[2].frequency, 3u);
}

TEST(IdentifyScales, PlantedToneWinsUnderNoise)
{
    Rng rng(4);
    int hits = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double f = static_cast<double>(1 + rng.below(20));
        Tensor x = tone_window(2, 96, {{f, 1.0}});
        for (auto& v : x.data())
            v += rng.uniform(-0.1, 0.1);
        hits += identify_scales(x, 1)[0].frequency == static_cast<std::size_t>(f);
    }
    EXPECT_GE(hits, 990);
}

TEST(ScaleTensor, ExactDivisionLayout)
{
    Var x = Var::constant(Tensor({1, 1, 6}, {0, 1, 2, 3, 4, 5}));
    Tensor t = to_scale_tensor(x, 3).value();
    ASSERT_EQ(t.shape(), (Shape{1, 1, 3, 2}));
    // Column j holds segment j: element (r, j) = x[j * s + r].
    EXPECT_EQ(t, Tensor({1, 1, 3, 2}, {0, 3, 1, 4, 2, 5}));
}

TEST(ScaleTensor, PaddingRule)
{
    Var x = Var::constant(Tensor({1, 1, 7}, {0, 1, 2, 3, 4, 5, 6}));
    Tensor t = to_scale_tensor(x, 3).value();
    ASSERT_EQ(t.shape(), (Shape{1, 1, 3, 3}));
    EXPECT_EQ(t.at({0, 0, 0, 2}), 6.0);
    EXPECT_EQ(t.at({0, 0, 1, 2}), 0.0);
    EXPECT_EQ(t.at({0, 0, 2, 2}), 0.0);
}

TEST(ScaleTensor, RangeErrors)
{
    Var x = Var::constant(Tensor({1, 1, 7}));
    EXPECT_THROW(to_scale_tensor(x, 0), RangeError);
    EXPECT_THROW(to_scale_tensor(x, 8), RangeError);
    EXPECT_THROW(from_scale_tensor(Var::constant(Tensor({1, 1, 3, 2})), 7), RangeError);
}

TEST(ScaleTensor, ExhaustiveRoundTrip)
{
    Rng rng(5);
    for (std::size_t L = 1; L <= 256; ++L) {
        Var x = Var::constant(random_tensor({1, 2, L}, rng));
        for (std::size_t s = 1; s <= L; ++s)
            ASSERT_EQ(from_scale_tensor(to_scale_tensor(x, s), L).value(), x.value()) << "L=" << L << " s=" << s;
    }
}

TEST(ScaleTensor, GradientsFlowThroughLayouts)
{
    Rng rng(6);
    Var x = Var::parameter(random_tensor({2, 3, 10}, rng));
    auto r = msgnet::testing::grad_check(
        [&] { return msgnet::testing::probe(from_scale_tensor(scale(to_scale_tensor(x, 4), 2.0), 10)); },
        {{"x", x}});
    EXPECT_LT(r.worst, 1e-4);
}
