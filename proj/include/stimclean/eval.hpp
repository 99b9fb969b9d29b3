#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stimclean/core.hpp"

namespace stimclean::eval {

struct ArOptions {
    double t1_ms = 3.0;
    double t2_ms = 5.2;
    int neighbors = 20;
};

/// Mean AR index over segments at `peaks`: each segment's first t1 ms against the
/// concatenated last t2 ms of segments i-20..i+20 (clipped at the ends).
/// Throws ValidationError when no segment fits inside the recording.
double signal_ar(const Recording& estimate, std::span<const SampleIndex> peaks, const ArOptions& opts = {});

struct ScResult {
    double sc = 0.0;
    bool degenerate = false;  // zero power in the neighborhood
    bool narrowed = false;    // neighborhood clipped at 0 Hz or Nyquist
};

/// Power within +-1 Hz of f_c over power within +-20 Hz (Welch, 1 s Hann).
ScResult spectral_concentration(std::span<const double> x, double fs, double f_c);

/// Line frequencies of the stimulation hardware: pulse harmonics and their
/// aliases at the 22 kHz sampling rate.
struct ScGrid {
    double pulse_hz = 129.16;
    double alias1_hz = 42.8;
    double alias2_hz = 86.36;
    int harmonics = 3;
    int alias_steps = 4;
    std::vector<double> frequencies() const;
};

/// Mean SC over the grid (one Welch estimate reused for all frequencies).
double mean_spectral_concentration(std::span<const double> x, double fs, const ScGrid& grid = {});

struct Band {
    std::string name;
    double low_hz = 0.0;
    double high_hz = 0.0;
};

/// alpha, beta, gamma, HFO, VHFO1, VHFO2.
std::vector<Band> standard_bands();

inline constexpr double kNmseFloorDb = -120.0;

/// 10 log10(sum (e - t)^2 / sum t^2), floored at kNmseFloorDb. Throws
/// ValidationError on length mismatch or an all-zero truth.
double nmse(std::span<const double> estimate, std::span<const double> truth);
/// Band-limited variant: both signals pass an order-4 zero-phase Butterworth band-pass first.
double nmse(std::span<const double> estimate, std::span<const double> truth, const Band& band, double fs);
/// Band-pass helper shared with callers that cache the filtered truth.
std::vector<double> band_filter(std::span<const double> x, const Band& band, double fs);

struct TpDetail {
    double deviation = 0.0;  // d1 + d2, seconds
    double or1 = 0.0;
    double or2 = 0.0;
};

struct MatchResult {
    int tp = 0;            // detections matched to a truth event
    int fn = 0;            // truth events without a matching detection
    int fp = 0;            // detections without a matching truth event
    int truth_hit = 0;     // truth events with at least one match
    std::vector<TpDetail> details;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;  // no detections
    bool recall_undefined = false;     // no truth events

    double mean_deviation() const;
};

struct MatchOptions {
    bool one_to_one = false;
};

MatchResult match_events(const EventList& detected, const EventList& truth, const MatchOptions& opts = {});

/// Intersection of each event with the union of [onset, onset + window_s).
EventList clip_to_windows(const EventList& ev, std::span<const double> onsets, double window_s);

/// match_events restricted to the first window_s after each stimulation onset.
MatchResult match_events_onset(const EventList& detected, const EventList& truth, std::span<const double> onsets,
                               double window_s = 0.05, const MatchOptions& opts = {});

}  // namespace stimclean::eval
