#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "stimclean/baselines.hpp"
#include "stimclean/eval.hpp"

using namespace stimclean;
using namespace stimclean::baselines;

namespace {

constexpr double kFs = 22000.0;

Recording make_rec(std::vector<double> x) {
    Recording r;
    r.samples = std::move(x);
    r.fs = kFs;
    return r;
}

std::vector<SampleIndex> regular_peaks(SampleIndex first, SampleIndex step, int count) {
    std::vector<SampleIndex> out;
    for (int i = 0; i < count; ++i) out.push_back(first + step * i);
    return out;
}

}  // namespace

TEST(TemplateSubtraction, PeriodicArtifactCancels) {
    const auto peaks = regular_peaks(500, 170, 100);
    std::vector<double> x(static_cast<std::size_t>(peaks.back() + 1000), 0.0);
    testutil::add_pulses(x, peaks, testutil::spike_shape(60, 400.0));
    const auto out = template_subtraction(make_rec(x), peaks, 10);
    ASSERT_EQ(out.size(), x.size());
    double worst = 0.0;
    for (auto i = static_cast<std::size_t>(peaks[1]); i < x.size(); ++i) worst = std::max(worst, std::abs(out.samples[i]));
    EXPECT_LT(worst, 1e-9);
    // The first segment has no history.
    EXPECT_NEAR(out.samples[static_cast<std::size_t>(peaks[0])], x[static_cast<std::size_t>(peaks[0])], 1e-12);
}

TEST(TemplateSubtraction, LinearGrowthLagsByHalfTheHistory) {
    const int k = 10;
    const double slope = 0.01;
    const auto peaks = regular_peaks(500, 170, 80);
    const auto shape = testutil::spike_shape(60, 400.0);
    std::vector<double> x(static_cast<std::size_t>(peaks.back() + 1000), 0.0);
    for (std::size_t j = 0; j < peaks.size(); ++j)
        testutil::add_pulses(x, {peaks[j]}, shape, 1.0 + slope * static_cast<double>(j));
    const auto out = template_subtraction(make_rec(x), peaks, k);
    const double lag = slope * (k + 1) / 2.0;
    for (std::size_t j = static_cast<std::size_t>(k); j < peaks.size(); ++j)
        for (std::size_t t = 0; t < shape.size(); ++t)
            ASSERT_NEAR(out.samples[static_cast<std::size_t>(peaks[j]) + t], lag * shape[t], 1e-9);
}

TEST(TemplateSubtraction, Causal) {
    std::mt19937_64 rng(1);
    const auto peaks = regular_peaks(500, 169, 60);
    auto x = testutil::noise(static_cast<std::size_t>(peaks.back() + 1000), rng, 3.0);
    testutil::add_pulses(x, peaks, testutil::spike_shape(60, 400.0));
    const auto ref = template_subtraction(make_rec(x), peaks, 10);
    const auto geo = SegmentGeometry::from(kFs, 130.0);
    for (std::size_t i : {5u, 20u, 41u}) {
        const auto end = static_cast<std::size_t>(peaks[i] - geo.pre + geo.p);
        auto y = x;
        for (std::size_t s = end; s < y.size(); ++s) y[s] += 50.0 * std::sin(0.01 * static_cast<double>(s));
        const auto out = template_subtraction(make_rec(y), peaks, 10);
        for (std::size_t s = 0; s < end; ++s) ASSERT_EQ(out.samples[s], ref.samples[s]) << "segment " << i;
    }
}

TEST(PulseBlanking, FlatLineSurvives) {
    const auto peaks = regular_peaks(300, 170, 40);
    std::vector<double> x(static_cast<std::size_t>(peaks.back() + 500), 7.5);
    testutil::add_pulses(x, peaks, testutil::spike_shape(40, 900.0));
    const auto out = pulse_blanking(make_rec(x), peaks);
    for (double v : out.samples) ASSERT_EQ(v, 7.5);
}

TEST(PulseBlanking, BetaSineBarelyChanges) {
    const auto x = testutil::tone(static_cast<std::size_t>(4 * kFs), 20.0, kFs, 30.0);
    const auto peaks = testutil::train(0.0, 4.0, kFs, 130.0);
    const auto out = pulse_blanking(make_rec(x), peaks);
    const auto beta = eval::standard_bands()[1];
    EXPECT_LT(eval::nmse(out.samples, x, beta, kFs), -15.0);
}

TEST(PulseBlanking, EdgesAndIdentity) {
    std::mt19937_64 rng(2);
    const auto x = testutil::noise(2000, rng);
    EXPECT_EQ(pulse_blanking(make_rec(x), {}).samples, x);
    const std::vector<SampleIndex> edge{3, 1990};
    const auto out = pulse_blanking(make_rec(x), edge);
    ASSERT_EQ(out.size(), x.size());
    for (double v : out.samples) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(out.samples[1000], x[1000]);
}

TEST(TransientBlanking, MaskBookkeeping) {
    std::mt19937_64 rng(3);
    const auto x = testutil::noise(static_cast<std::size_t>(10 * kFs), rng);
    StimPeriods periods;
    periods.periods = {{1000, 1000 + 5000}, {40000, 40000 + 30000}, {150000, 219000}};
    const auto out = transient_blanking(make_rec(x), periods);
    const SampleIndex blank = 550 * 22;
    EXPECT_EQ(out.masked_samples(), 5000 + blank + blank);
    ASSERT_EQ(out.mask.size(), 3u);
    EXPECT_EQ(out.mask[0], (SampleInterval{1000, 6000}));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool masked = std::any_of(out.mask.begin(), out.mask.end(), [&](const SampleInterval& m) {
            return static_cast<SampleIndex>(i) >= m.start && static_cast<SampleIndex>(i) < m.end;
        });
        ASSERT_EQ(out.lfp.samples[i], masked ? 0.0 : x[i]);
    }
    const auto none = transient_blanking(make_rec(x), StimPeriods{});
    EXPECT_TRUE(none.mask.empty());
    EXPECT_EQ(none.lfp.samples, x);
}
