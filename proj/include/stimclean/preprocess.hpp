#pragma once

#include <span>
#include <vector>

#include "stimclean/core.hpp"

namespace stimclean::preprocess {

/// Raised when a recording contains no qualifying stimulation pulse train.
class NoStimulationError : public NumericError {
public:
    explicit NoStimulationError(const std::string& what) : NumericError(what) {}
};

struct PeakDetectionParams {
    double highpass_hz = 300.0;
    int highpass_order = 3;
    double trend_ms = 1000.0;
    double smooth_ms = 0.5;
    double threshold_percentile = 95.0;
    double tau_ms = 0.5;
    /// Peaks must also exceed this multiple of the median processed level, so
    /// recordings without stimulation do not yield a percentile-driven train.
    double noise_floor_ratio = 5.0;
    /// Runs of fewer pulses than this (gap rule of identify_stim_periods) are dropped.
    int min_train_pulses = 3;
};

/// Artifact peak sample indices, strictly increasing. Throws NoStimulationError
/// when nothing qualifies.
std::vector<SampleIndex> detect_peaks(const Recording& rec, const PeakDetectionParams& params = {});

/// Largest consecutive-peak gap (samples) still inside one stimulation period.
double period_gap_max(double fs, double f_sti, double gap_periods = 2.5);

/// Groups peaks into stimulation periods; each period spans
/// [first peak - pre, last peak + post) clamped to [0, n_samples).
StimPeriods identify_stim_periods(std::span<const SampleIndex> peaks, double fs, double f_sti, std::size_t n_samples,
                                  double gap_periods = 2.5);

struct DetrendParams {
    double smooth_ms = 10.0;
    int stim_degree = 6;
    int rest_degree = 1;
};

struct Detrended {
    Recording detrended;
    std::vector<double> trend;  // detrended.samples + trend == input samples
};

/// Piecewise smoothing + polynomial trend removal: stimulation periods get the
/// high-degree fit, the gaps between them the low-degree one. Pieces shorter
/// than degree+1 fall back to a line, pieces shorter than 2 to their mean.
Detrended remove_dc_transient(const Recording& rec, const StimPeriods& periods, const DetrendParams& params = {});

/// The trend alone, as remove_dc_transient computes it.
std::vector<double> estimate_trend(std::span<const double> x, double fs, const StimPeriods& periods,
                                   const DetrendParams& params = {});

/// Slices one column per peak; peaks whose window leaves the recording are dropped
/// and counted in SegmentMatrix::dropped.
SegmentMatrix segment(const Recording& rec, std::span<const SampleIndex> peaks);

struct NotchParams {
    double base_hz = 60.0;
    double max_hz = 3000.0;
    double q = 200.0;
};

/// Zero-phase line-noise comb.
Recording notch_line_noise(const Recording& rec, const NotchParams& params = {});

/// Output of the full per-recording chain notch -> detect -> periods -> detrend -> segment.
struct Prepared {
    Recording notched;
    std::vector<SampleIndex> peaks;
    StimPeriods periods;
    Detrended dc;
    SegmentMatrix segments;
};

struct PrepareParams {
    NotchParams notch;
    PeakDetectionParams peaks;
    DetrendParams detrend;
    bool apply_notch = true;
    bool remove_dc = true;
};

Prepared prepare(const Recording& rec, const PrepareParams& params = {});

}  // namespace stimclean::preprocess
