#include <gtest/gtest.h>

#include "helpers.hpp"
#include "stimclean/preprocess.hpp"
#include "stimclean/synth.hpp"

using namespace stimclean;
using namespace stimclean::preprocess;

namespace {

constexpr double kFs = 22000.0;

Recording impulse_recording(const std::vector<SampleIndex>& peaks, std::size_t n, double height, double sigma,
                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Recording r;
    r.samples = testutil::noise(n, rng, sigma);
    for (auto pk : peaks) r.samples[static_cast<std::size_t>(pk)] += height;
    return r;
}

}  // namespace

TEST(DetectPeaks, ImpulseTrainAt40dB) {
    // Single-sample impulses leave a flat 11-sample envelope plateau; the train
    // must cover less than ~75% of the recording for the 95th percentile to sit
    // below the plateau.
    const auto truth = testutil::train(0.5, 2.5, kFs, 130.0);
    const Recording r = impulse_recording(truth, 5 * 22000, 1000.0, 10.0, 1);
    const auto peaks = detect_peaks(r);
    ASSERT_EQ(peaks.size(), truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_LE(std::llabs(peaks[i] - truth[i]), 1);
}

TEST(DetectPeaks, NoiseOnlyHasNoStimulation) {
    const Recording r = impulse_recording({}, 5 * 22000, 0.0, 10.0, 2);
    EXPECT_THROW(detect_peaks(r), NoStimulationError);
}

TEST(DetectPeaks, MinimumDistanceKeepsLarger) {
    auto truth = testutil::train(0.5, 1.5, kFs, 130.0);
    Recording r = impulse_recording(truth, 2 * 22000, 1000.0, 10.0, 3);
    const SampleIndex extra = truth[40] + 110;  // 5 ms later
    r.samples[static_cast<std::size_t>(extra)] += 600.0;
    const auto peaks = detect_peaks(r);
    EXPECT_EQ(peaks.size(), truth.size());
    EXPECT_EQ(std::count_if(peaks.begin(), peaks.end(), [&](SampleIndex p) { return std::llabs(p - extra) <= 1; }), 0);
}

TEST(DetectPeaks, InvariantToOffsetAndScale) {
    const auto truth = testutil::train(0.5, 2.5, kFs, 130.0);
    const Recording r = impulse_recording(truth, 3 * 22000, 800.0, 10.0, 4);
    const auto base = detect_peaks(r);
    Recording shifted = r, scaled = r;
    for (auto& v : shifted.samples) v += 250.0;
    for (auto& v : scaled.samples) v *= 3.0;
    EXPECT_EQ(detect_peaks(shifted), base);
    EXPECT_EQ(detect_peaks(scaled), base);
}

TEST(StimPeriods, SingleAndSeparatedTrains) {
    const auto one = testutil::train(0.5, 2.0, kFs, 130.0);
    const auto p1 = identify_stim_periods(one, kFs, 130.0, 3 * 22000);
    ASSERT_EQ(p1.periods.size(), 1u);
    EXPECT_EQ(p1.periods[0].start, one.front() - 22);
    EXPECT_EQ(p1.periods[0].end, one.back() + 158);

    auto two = testutil::train(0.5, 1.0, kFs, 130.0);
    const auto second = testutil::train(1.5, 2.0, kFs, 130.0);
    two.insert(two.end(), second.begin(), second.end());
    EXPECT_EQ(identify_stim_periods(two, kFs, 130.0, 3 * 22000).periods.size(), 2u);
    EXPECT_TRUE(identify_stim_periods(std::vector<SampleIndex>{}, kFs, 130.0, 100).empty());
}

TEST(StimPeriods, RecoverSynthesizerSchedule) {
    EventList schedule;
    for (int i = 0; i < 10; ++i) schedule.events.push_back({0.2 + 0.7 * i, 0.6 + 0.7 * i});
    synth::ArtifactModel m;
    const std::size_t n = static_cast<std::size_t>(7.5 * kFs);
    auto art = synth::gen_artifact_track(schedule, m, kFs, n);
    std::mt19937_64 rng(5);
    const auto nz = testutil::noise(n, rng, 5.0);
    for (std::size_t i = 0; i < n; ++i) art[i] += nz[i];
    Recording r;
    r.samples = art;
    const auto peaks = detect_peaks(r);
    const auto periods = identify_stim_periods(peaks, kFs, 130.0, n);
    ASSERT_EQ(periods.periods.size(), schedule.events.size());
    const double ipi = kFs / 130.0;
    for (std::size_t i = 0; i < schedule.events.size(); ++i) {
        EXPECT_NEAR(static_cast<double>(periods.periods[i].start), schedule.events[i].onset * kFs, ipi);
        EXPECT_NEAR(static_cast<double>(periods.periods[i].end), schedule.events[i].offset * kFs, ipi);
    }
    // Every peak lies in exactly one period.
    for (auto pk : peaks) {
        int hits = 0;
        for (const auto& p : periods.periods) hits += pk >= p.start && pk < p.end;
        EXPECT_EQ(hits, 1);
    }
}

TEST(Detrend, PolynomialInsidePeriodVanishes) {
    const std::size_t n = 22000;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(i) - 11000.0) / 11000.0;
        x[i] = 100.0 * (0.5 - t + 2.0 * t * t - 3.0 * std::pow(t, 3) + 1.5 * std::pow(t, 6));
    }
    StimPeriods periods{{{0, static_cast<SampleIndex>(n)}}};
    const auto trend = estimate_trend(x, kFs, periods);
    const int edge = 220;  // 10 ms smoothing half-window and then some
    double worst = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::abs(x[i]));
    for (std::size_t i = edge; i + edge < n; ++i) worst = std::max(worst, std::abs(x[i] - trend[i]));
    // The 10 ms pre-smoothing biases a curved trend by about w^2 x'' / 24 and the
    // truncated windows at the piece ends tilt the fit slightly.
    EXPECT_LT(worst, 2e-3 * peak);
    const auto zero = estimate_trend(std::vector<double>(n, 0.0), kFs, periods);
    for (double v : zero) EXPECT_EQ(v, 0.0);
}

TEST(Detrend, RemovesOnsetTransient) {
    const std::size_t n = 2 * 22000;
    const SampleIndex on = 22000;
    std::vector<double> x(n, 0.0), transient(n, 0.0);
    for (std::size_t i = static_cast<std::size_t>(on); i < n; ++i)
        transient[i] = 300.0 * std::exp(-(static_cast<double>(i) - on) / kFs / 0.05);
    std::mt19937_64 rng(6);
    const auto nz = testutil::noise(n, rng, 5.0);
    for (std::size_t i = 0; i < n; ++i) x[i] = transient[i] + nz[i];
    Recording r;
    r.samples = x;
    StimPeriods periods{{{on, static_cast<SampleIndex>(n)}}};
    const auto d = remove_dc_transient(r, periods);
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = d.detrended.samples[i] - nz[i];
    EXPECT_LE(testutil::rms(resid, static_cast<std::size_t>(on), n),
              0.15 * testutil::rms(transient, static_cast<std::size_t>(on), n));
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(d.detrended.samples[i] + d.trend[i], x[i], 1e-9);
}

TEST(Segment, ColumnsDroppedAndReconstruction) {
    const auto peaks = testutil::train(0.1, 0.95, kFs, 130.0);
    std::mt19937_64 rng(7);
    Recording r;
    r.samples = testutil::noise(22000, rng);
    const auto m = segment(r, peaks);
    EXPECT_EQ(m.n(), static_cast<Eigen::Index>(peaks.size()));
    EXPECT_EQ(m.p(), 180);
    std::vector<double> rebuilt(r.size(), std::nan(""));
    for (Eigen::Index j = 0; j < m.n(); ++j)
        for (Eigen::Index i = 0; i < m.p(); ++i) rebuilt[static_cast<std::size_t>(m.start(j) + i)] = m.data(i, j);
    for (std::size_t i = 0; i < r.size(); ++i)
        if (!std::isnan(rebuilt[i])) ASSERT_EQ(rebuilt[i], r.samples[i]);

    std::vector<SampleIndex> edge{5, 1000, 21990};
    const auto e = segment(r, edge);
    EXPECT_EQ(e.n(), 1);
    EXPECT_EQ(e.dropped, 2u);
}
