#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stimclean/ann.hpp"
#include "stimclean/core.hpp"
#include "stimclean/library.hpp"

namespace stimclean::smarta {

inline constexpr double kArEpsilon = 1e-12;

/// Artifact residual index between an early window zhat and a reference window z.
/// Spreads below kArEpsilon are clamped and reported through `clamped`.
double ar_index(std::span<const double> zhat, std::span<const double> z, bool* clamped = nullptr);

/// Sample counts of the AR windows: the first `head` and last `tail` samples of a residual.
struct ArWindows {
    int head = 66;
    int tail = 114;
    static ArWindows from(double fs, double t1_ms = 3.0, double t2_ms = 5.2);
};

std::vector<int> default_k_grid();

struct TemplateResult {
    Eigen::VectorXd tmpl;
    int K_opt = 0;
    std::vector<double> ar_curve;  // one value per grid entry
    bool failed = false;
};

/// Picks K from the grid minimizing the AR index of x - median(first K neighbors).
/// `ranked` indexes columns of D, nearest first. Ties go to the smaller K.
/// An empty `ranked` yields a zero template with failed = true.
TemplateResult derive_template(const Eigen::VectorXd& x, std::span<const std::uint32_t> ranked,
                               const Eigen::MatrixXd& D, std::span<const int> K_grid, const ArWindows& win);

/// Overlap-add weights for one segment of length p whose first g1 samples overlap
/// the previous segment and last g2 samples overlap the next one. Throws
/// ValidationError unless 0 <= g1, g2 and g1 + g2 < p.
std::vector<double> window(int p, int g1, int g2);

/// Overlap counts (g1, g2) for each segment from the spacing of its neighbors.
std::vector<std::pair<int, int>> overlaps(std::span<const SampleIndex> starts, int p);

/// Windowed overlap-add of template columns placed at `starts` into a track of length n.
std::vector<double> overlap_add(const Eigen::MatrixXd& templates, std::span<const SampleIndex> starts, std::size_t n);

struct SegmentReport {
    SampleIndex peak_sample = 0;
    int K_opt = 0;
    double ar = 0.0;
    double micros_elapsed = 0.0;
    bool failed = false;
};

struct CleanReport {
    std::string method;
    std::string recording_id;
    bool stimulation_found = true;
    std::vector<std::string> selected_recordings;
    std::size_t pool_size = 0;
    std::size_t dropped_peaks = 0;
    std::vector<SegmentReport> segments;

    double mean_micros() const;
    /// JSON text; timing fields are omitted when include_timing is false so
    /// reports can be compared byte-wise across runs.
    std::string to_json(bool include_timing = true) const;
};

struct CleanParams {
    library::BuildParams build;
    std::size_t Q = 5;
    ann::ForestParams forest;
    std::vector<int> K_grid = default_k_grid();
    double t1_ms = 3.0;
    double t2_ms = 5.2;
    /// Library entries with these ids are ignored (e.g. the target's own entry).
    std::vector<std::string> exclude_ids;
    /// Time each segment's template derivation.
    bool timing = true;
};

struct CleanResult {
    Recording lfp;
    std::vector<double> artifact;  // overlap-added template track
    std::vector<double> trend;     // trend removed before and after subtraction, summed
    StimPeriods periods;
    std::vector<SampleIndex> peaks;
    CleanReport report;
};

/// Full pipeline: notch, detection, DC removal, shrinkage, library-backed ANN
/// template search, overlap-add subtraction and a second DC pass. Without
/// stimulation the output is the input minus its linear trend.
CleanResult clean_recording(const Recording& rec, const library::ArtifactLibrary& lib, const CleanParams& params = {});

/// Within-recording variant: no library, exhaustive KNN over the recording's own
/// denoised segments in the time domain, no DC passes.
CleanResult clean_recording_exact(const Recording& rec, const CleanParams& params = {});

}  // namespace stimclean::smarta
