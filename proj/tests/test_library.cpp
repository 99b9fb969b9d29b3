#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "stimclean/dsp.hpp"
#include "stimclean/library.hpp"
#include "stimclean/parallel.hpp"

using namespace stimclean;
using namespace stimclean::library;

namespace {

struct PulseRec {
    Recording rec;
    std::vector<double> clean;  // artifact only
};

PulseRec pulse_recording(const std::string& id, double seconds, double sigma, double scale, std::uint64_t seed) {
    const double fs = 22000.0;
    std::mt19937_64 rng(seed);
    PulseRec out;
    out.clean.assign(static_cast<std::size_t>(seconds * fs), 0.0);
    testutil::add_pulses(out.clean, testutil::train(0.5, seconds - 0.5, fs, 130.0), testutil::spike_shape(), scale);
    out.rec.samples = testutil::noise(out.clean.size(), rng, sigma);
    for (std::size_t i = 0; i < out.clean.size(); ++i) out.rec.samples[i] += out.clean[i];
    out.rec.fs = fs;
    out.rec.f_sti = 130.0;
    out.rec.id = id;
    return out;
}

BuildParams plain_params() {
    BuildParams p;
    p.prepare.apply_notch = false;
    return p;
}

RecordingEntry summary_entry(const std::string& id, double a_m, Eigen::VectorXd s_m) {
    RecordingEntry e;
    e.id = id;
    e.a_m = a_m;
    e.s_m = std::move(s_m);
    return e;
}

}  // namespace

TEST(Entry, DenoisedSegmentsTrackTheTrueArtifact) {
    const double sigma = 5.0;
    const auto pr = pulse_recording("a", 6.0, sigma, 1.0, 1);
    // The trend estimate would absorb the train's own mean; compare shrinkage alone.
    auto params = plain_params();
    params.prepare.remove_dc = false;
    const auto e = build_entry(pr.rec, params);
    ASSERT_GT(e.n(), 600);
    const auto geo = SegmentGeometry::from(22000.0, 130.0);
    double worst = 0.0;
    Eigen::MatrixXd truth_w(e.q(), e.n());
    for (Eigen::Index j = 0; j < e.n(); ++j) {
        const auto start = static_cast<std::size_t>(e.peaks[static_cast<std::size_t>(j)] - geo.pre);
        double err = 0.0;
        Eigen::VectorXd truth(e.p());
        for (Eigen::Index i = 0; i < e.p(); ++i) {
            truth(i) = pr.clean[start + static_cast<std::size_t>(i)];
            err += std::pow(e.D(i, j) - truth(i), 2);
        }
        truth_w.col(j) = haar_columns(truth);
        worst = std::max(worst, std::sqrt(err / static_cast<double>(e.p())));
    }
    // Per-sample error far below the noise level.
    EXPECT_LT(worst, 0.4 * sigma);
    Eigen::VectorXd truth_s(e.q());
    for (Eigen::Index r = 0; r < e.q(); ++r) {
        std::vector<double> row;
        for (Eigen::Index j = 0; j < e.n(); ++j) row.push_back(truth_w(r, j));
        truth_s(r) = dsp::median(row);
    }
    EXPECT_LT((e.s_m - truth_s).norm() / truth_s.norm(), 0.05);
    for (Eigen::Index j = 0; j < e.n(); j += 50) {
        const Eigen::MatrixXd w = haar_columns(e.D.col(j));
        EXPECT_LT((w - e.W.col(j)).norm(), 1e-9);
    }
}

TEST(Entry, MeanPeakAmplitude) {
    const double fs = 22000.0;
    const auto shape = testutil::spike_shape(60, 1.0);
    const double top = *std::max_element(shape.begin(), shape.end());
    std::vector<double> x(static_cast<std::size_t>(2.0 * fs), 0.0);
    const auto peaks = testutil::train(0.2, 1.8, fs, 130.0);
    testutil::add_pulses(x, peaks, shape, 100.0 / top);
    Recording rec;
    rec.samples = x;
    rec.id = "flat";
    preprocess::Prepared prep;
    prep.segments = preprocess::segment(rec, peaks);
    prep.periods.periods = {{peaks.front(), peaks.back() + 1}};
    const auto e = make_entry(rec, prep);
    EXPECT_NEAR(e.a_m, 100.0, 1e-9);
    EXPECT_NEAR(e.onset_offsets_ms.front(), 0.0, 1e-12);
    EXPECT_NEAR(e.onset_offsets_ms.back(), 1000.0 * static_cast<double>(peaks.back() - peaks.front()) / fs, 1e-9);

    preprocess::Prepared small = prep;
    small.segments.data = prep.segments.data.leftCols(30);
    small.segments.peaks.resize(30);
    EXPECT_THROW(make_entry(rec, small), ValidationError);
}

TEST(Features, OneDifferingCoefficient) {
    Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(8, 0.0, 7.0);
    Eigen::VectorXd b = a;
    b(5) += 3.0;
    const auto fs = select_features(std::vector<RecordingEntry>{summary_entry("a", 1, a), summary_entry("b", 1, b)});
    EXPECT_EQ(fs.selected_idx, std::vector<int>{5});
}

TEST(Features, CumulativeVarianceRule) {
    // Row variances 8, 1, 0.5, 0.5 for two entries: (a - b)^2 / 2.
    Eigen::VectorXd a = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd b(4);
    b << 4.0, std::sqrt(2.0), 1.0, 1.0;
    const auto fs = select_features(std::vector<RecordingEntry>{summary_entry("a", 1, a), summary_entry("b", 1, b)});
    ASSERT_EQ(fs.variance.size(), 4);
    EXPECT_NEAR(fs.variance(0), 8.0, 1e-12);
    EXPECT_NEAR(fs.variance(1), 1.0, 1e-12);
    EXPECT_EQ(fs.selected_idx, (std::vector<int>{0, 1, 2}));
}

TEST(Features, IdenticalSummariesSelectOne) {
    Eigen::VectorXd a = Eigen::VectorXd::Ones(4);
    const auto fs = select_features(std::vector<RecordingEntry>{summary_entry("a", 1, a), summary_entry("b", 1, a)});
    EXPECT_EQ(fs.selected_idx.size(), 1u);
    EXPECT_THROW(select_features(std::vector<RecordingEntry>{summary_entry("a", 1, a)}), ValidationError);
}

TEST(Features, OrderOfEntriesDoesNotMatter) {
    std::mt19937_64 rng(3);
    std::vector<RecordingEntry> entries;
    for (int m = 0; m < 9; ++m) {
        Eigen::VectorXd s = testutil::gaussian(32, 1, rng);
        for (Eigen::Index i = 0; i < 32; ++i) s(i) *= std::pow(0.7, static_cast<double>(i));
        entries.push_back(summary_entry("e" + std::to_string(m), 1, s));
    }
    const auto ref = select_features(entries);
    for (int t = 0; t < 5; ++t) {
        std::shuffle(entries.begin(), entries.end(), rng);
        EXPECT_EQ(select_features(entries).selected_idx, ref.selected_idx);
    }
    for (std::size_t i = 1; i < ref.selected_idx.size(); ++i)
        EXPECT_GE(ref.variance(ref.selected_idx[i - 1]), ref.variance(ref.selected_idx[i]));
}

TEST(Recordings, AmplitudeWindow) {
    ArtifactLibrary lib;
    const double a[] = {95, 108, 111, 120};
    for (int m = 0; m < 4; ++m) lib.entries.push_back(summary_entry("e" + std::to_string(m), a[m], Eigen::VectorXd::Zero(2)));
    lib.features.selected_idx = {0, 1};
    const auto target = summary_entry("t", 100, Eigen::VectorXd::Zero(2));
    EXPECT_EQ(select_recordings(lib, target, lib.features), (std::vector<std::size_t>{0, 1}));
}

TEST(Recordings, ClosestQAndSelfExcluded) {
    ArtifactLibrary lib;
    // Distances 6, 5, 4, 3, 2, 1 from the target in feature 0.
    for (int m = 0; m < 6; ++m) {
        Eigen::VectorXd s(2);
        s << 6.0 - m, 100.0 * m;  // feature 1 is not selected
        lib.entries.push_back(summary_entry("e" + std::to_string(m), 100, s));
    }
    lib.features.selected_idx = {0};
    const auto target = summary_entry("t", 100, Eigen::VectorXd::Zero(2));
    EXPECT_EQ(select_recordings(lib, target, lib.features), (std::vector<std::size_t>{5, 4, 3, 2, 1}));
    EXPECT_EQ(select_recordings(lib, target, lib.features, 10).size(), 6u);
    EXPECT_EQ(select_recordings(lib, lib.entries[2], lib.features, 10).size(), 5u);

    ArtifactLibrary three;
    three.entries.assign(lib.entries.begin(), lib.entries.begin() + 3);
    three.features = lib.features;
    EXPECT_EQ(select_recordings(three, target, three.features).size(), 3u);

    const auto far = summary_entry("far", 1000, Eigen::VectorXd::Zero(2));
    EXPECT_TRUE(select_recordings(lib, far, lib.features).empty());
}

TEST(Build, DeterministicIndependentAndPersistent) {
    std::vector<Recording> recs;
    for (int m = 0; m < 3; ++m) recs.push_back(pulse_recording("r" + std::to_string(m), 3.0, 4.0, 1.0 + 0.02 * m, 10 + m).rec);
    const int before = default_threads();
    set_default_threads(1);
    const auto a = build_library({recs[0], recs[1]}, plain_params());
    set_default_threads(3);
    const auto b = build_library(recs, plain_params());
    set_default_threads(before);
    ASSERT_EQ(b.entries.size(), 3u);
    for (int m = 0; m < 2; ++m) {
        EXPECT_EQ(a.entries[m].D, b.entries[m].D);
        EXPECT_EQ(a.entries[m].W, b.entries[m].W);
    }
    // Same artifact shape: summaries agree up to the amplitude scale.
    for (int m = 1; m < 3; ++m) {
        const double s = b.entries[m].a_m / b.entries[0].a_m;
        EXPECT_LT((b.entries[m].s_m / s - b.entries[0].s_m).norm() / b.entries[0].s_m.norm(), 0.05);
    }

    testutil::TempDir dir;
    save_library(b, dir.path() / "lib");
    const auto c = load_library(dir.path() / "lib");
    ASSERT_EQ(c.entries.size(), 3u);
    EXPECT_EQ(c.features.selected_idx, b.features.selected_idx);
    for (int m = 0; m < 3; ++m) {
        const auto& x = b.entries[m];
        const auto& y = c.entries[m];
        EXPECT_EQ(y.id, x.id);
        EXPECT_EQ(y.peaks, x.peaks);
        EXPECT_EQ(y.D, x.D.cast<float>().cast<double>());
        EXPECT_EQ(y.W, x.W.cast<float>().cast<double>());
        EXPECT_EQ(y.X, x.X.cast<float>().cast<double>());
        EXPECT_DOUBLE_EQ(y.a_m, x.a_m);
        EXPECT_LT((y.s_m - x.s_m).norm(), 1e-12);
        EXPECT_EQ(y.onset_offsets_ms.size(), x.onset_offsets_ms.size());
    }
}

TEST(Build, RejectsShortRecordingsAndMixedRates) {
    auto good = pulse_recording("good", 3.0, 4.0, 1.0, 20).rec;
    auto tiny = pulse_recording("tiny", 1.2, 4.0, 1.0, 21).rec;  // ~26 pulses
    BuildReport report;
    const auto lib = build_library({good, tiny}, plain_params(), &report);
    EXPECT_EQ(lib.entries.size(), 1u);
    ASSERT_EQ(report.rejected.size(), 1u);
    EXPECT_EQ(report.rejected[0].rfind("tiny", 0), 0u);
    EXPECT_THROW(build_library({tiny}, plain_params()), ValidationError);
    auto other = good;
    other.fs = 44000.0;
    EXPECT_THROW(build_library({good, other}, plain_params()), ValidationError);
    EXPECT_THROW(build_library({}, plain_params()), ValidationError);
}
