#pragma once

#include <optional>
#include <span>
#include <vector>

#include "stimclean/core.hpp"
#include "stimclean/dsp.hpp"
#include "stimclean/synth.hpp"

namespace stimclean::adbs {

struct BetaConfig {
    double bp_low_hz = 3.0;
    double bp_high_hz = 37.0;
    int bp_order = 2;
    double search_low_hz = 13.0;
    double search_high_hz = 35.0;
    double default_peak_hz = 24.0;
    double peak_q = 3.0;
    int peak_passes = 3;
    double ma_ms = 400.0;
    double threshold_percentile = 75.0;
    double min_on_ms = 400.0;
};

/// PSD argmax of the band-passed signal inside the search band. Falls back to
/// cfg.default_peak_hz (with a warning) when the band has no clear peak.
double find_beta_peak(std::span<const double> x, double fs, const BetaConfig& cfg = {}, bool* fallback = nullptr);

struct BetaAmplitude {
    std::vector<double> amplitude;
    double peak_hz = 0.0;
};

/// Offline (zero-phase) amplitude: band-pass, peak filter passes, rectification,
/// centered moving average.
BetaAmplitude beta_amplitude(std::span<const double> x, double fs, const BetaConfig& cfg = {},
                             std::optional<double> peak_hz = std::nullopt);

/// The same chain run causally, one sample at a time, with a trailing mean.
class CausalBetaAmplitude {
public:
    CausalBetaAmplitude(double fs, double peak_hz, const BetaConfig& cfg = {});
    double step(double x);

private:
    dsp::CausalFilter chain_;
    std::vector<double> ring_;
    std::size_t pos_ = 0;
    std::size_t filled_ = 0;
    long double sum_ = 0.0L;
};

std::vector<double> causal_beta_amplitude(std::span<const double> x, double fs, double peak_hz,
                                          const BetaConfig& cfg = {});

/// Two-state detector: opens when amplitude > threshold, stays open for at least
/// min_on samples, then closes at the first sample below threshold.
class EventDetector {
public:
    EventDetector(double threshold, SampleIndex min_on);
    /// Feeds amplitude at sample n (n increasing by one); returns the state after it.
    bool step(SampleIndex n, double amplitude);
    /// Closes an open event at `end` (extended to the minimum duration).
    void finish(SampleIndex end);
    bool on() const { return on_; }
    const std::vector<SampleInterval>& events() const { return events_; }

private:
    double threshold_;
    SampleIndex min_on_;
    bool on_ = false;
    SampleIndex onset_ = 0;
    std::vector<SampleInterval> events_;
};

/// Events of an amplitude trace. An event still open at the end is reported with
/// its minimum duration even if that runs past the last sample.
EventList detect_beta_events(std::span<const double> amplitude, double threshold, double fs, double min_on_ms = 400.0);

/// Threshold from the given percentile of an amplitude trace.
double threshold_from(std::span<const double> amplitude, double percentile = 75.0);

struct SimParams {
    double baseline_fraction = 0.2;
    std::optional<double> threshold;  // overrides calibration
    std::optional<double> peak_hz;
};

struct SimResult {
    Recording rec;                    // sensed signal, stim_schedule set
    EventList schedule;               // controller on intervals
    std::vector<double> artifact;
    std::vector<double> amplitude;    // causal amplitude the controller saw
    double threshold = 0.0;
    double peak_hz = 0.0;
    double on_fraction() const;
};

/// Closed-loop simulation: the sensed signal is base + artifact, the controller
/// switches stimulation from its causal beta amplitude, and the artifact follows
/// the controller's decisions. Threshold and peak frequency are calibrated on the
/// first baseline_fraction of the clean base signal.
SimResult simulate_adbs(const Recording& base, const synth::ArtifactModel& model, const BetaConfig& cfg = {},
                        const SimParams& params = {});

}  // namespace stimclean::adbs
