#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stimclean/adbs.hpp"
#include "stimclean/config.hpp"
#include "stimclean/eval.hpp"
#include "stimclean/smarta.hpp"
#include "stimclean/synth.hpp"

namespace stimclean::suite {

inline const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names{"raw", "smarta+", "smarta", "ts", "pulse-blank", "transient-blank"};
    return names;
}

struct SuiteConfig {
    int recordings = 10;
    double duration_s = 120.0;
    double fs = 22000.0;
    double f_sti = 130.0;
    std::uint64_t seed = 1;
    double gain_spread = 0.04;     // per-recording stimulation gain in [1 - s, 1 + s]
    synth::LfpSpec lfp;
    synth::ArtifactModel artifact;
    adbs::BetaConfig beta;
    double baseline_fraction = 0.2;
    std::size_t semireal_K = 500;
    smarta::CleanParams clean;
    int k_hist = 10;
    double onset_window_s = 0.05;
    eval::ScGrid sc_grid;

    /// Keys: recordings, duration_s, fs, f_sti, seed, gain_spread, semireal_K, Q, trees,
    /// leaf_capacity, k_hist, onset_window_s, plus [lfp] and [artifact] sections.
    static SuiteConfig from(const KeyValues& kv);
};

struct MethodMetrics {
    double ar = 0.0;
    double sc = 0.0;
    double nmse = 0.0;
    std::vector<double> band_nmse;   // standard_bands() order
    double recall = 0.0, precision = 0.0, f1 = 0.0;
    double deviation_ms = 0.0, or1 = 0.0, or2 = 0.0;
    int tp = 0, fn = 0, fp = 0;
    double recall_onset = 0.0, precision_onset = 0.0, f1_onset = 0.0;
    double micros_per_segment = 0.0;
};

/// Named scalar view of MethodMetrics, in report order.
std::vector<std::pair<std::string, double>> metric_fields(const MethodMetrics& m);

struct RecordingResult {
    std::string id;
    double on_fraction = 0.0;
    std::size_t n_periods = 0;
    std::size_t n_segments = 0;
    std::size_t truth_events = 0;
    std::map<std::string, MethodMetrics> methods;
};

struct SuiteReport {
    std::vector<RecordingResult> recordings;
    std::vector<std::string> rejected;
    // method -> metric -> value, across recordings
    std::map<std::string, std::map<std::string, double>> mean;
    std::map<std::string, std::map<std::string, double>> stdev;

    /// Report JSON. Timing fields are left out when include_timing is false.
    std::string to_json(bool include_timing = true) const;
    /// FNV-1a of the timing-free JSON.
    std::uint64_t hash() const;
};

/// Generates the sources, builds the library, constructs semi-real signals, runs
/// every method and evaluates every metric.
SuiteReport run_suite(const SuiteConfig& cfg);

/// Metrics of one method's output against the ground truth.
struct Truth {
    const Recording* base = nullptr;
    std::vector<std::vector<double>> base_bands;
    EventList events;
    double threshold = 0.0;
    double peak_hz = 0.0;
    std::vector<double> stim_onsets;
};

Truth make_truth(const Recording& base, const adbs::BetaConfig& beta, std::span<const double> stim_onsets);

MethodMetrics evaluate(const Recording& estimate, const Truth& truth, std::span<const SampleIndex> peaks,
                       const adbs::BetaConfig& beta, const eval::ScGrid& grid,
                       const std::vector<SampleInterval>* mask = nullptr, double onset_window_s = 0.05);

struct BenchConfig {
    std::size_t pool_target = 50000;
    double recording_s = 100.0;
    double target_s = 20.0;
    std::size_t exact_segments = 300;
    double fs = 22000.0;
    double f_sti = 130.0;
    std::uint64_t seed = 7;
    synth::LfpSpec lfp;
    synth::ArtifactModel artifact;
    smarta::CleanParams clean;

    static BenchConfig from(const KeyValues& kv);
};

struct Timing {
    double mean_ms = 0.0;
    double std_ms = 0.0;
    std::size_t count = 0;
};

struct BenchReport {
    std::size_t pool_size = 0;
    Timing ann;
    Timing exact;
    Timing template_subtraction;
    double speedup = 0.0;
    double recording_seconds = 0.0;   // end-to-end smarta+ clean of the target
    double realtime_budget_ms = 0.0;
    double total_seconds = 0.0;
    std::string machine;

    std::string to_json() const;
};

BenchReport run_benchmark(const BenchConfig& cfg);

}  // namespace stimclean::suite
