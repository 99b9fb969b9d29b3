#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "stimclean/ann.hpp"
#include "stimclean/config.hpp"
#include "stimclean/core.hpp"
#include "stimclean/library.hpp"

namespace stimclean::synth {

struct Tone {
    double hz = 0.0;
    double amplitude = 0.0;
};

struct LfpSpec {
    double exponent = 1.0;        // PSD ~ 1/f^exponent
    double colored_rms = 8.0;     // uV
    double floor_hz = 1.0;        // spectrum held flat below this
    double white_rms = 1.0;       // uV, broadband amplifier noise
    double beta_hz = 20.0;
    double beta_jitter_hz = 2.0;
    double burst_rate_hz = 0.6;   // bursts per second of burst-free time
    double burst_mean_s = 0.35;
    double burst_shape = 4.0;     // gamma shape of burst durations
    double burst_min_s = 0.1;
    double beta_amplitude = 18.0; // envelope peak, uV
    std::vector<Tone> tones;
};

struct LfpResult {
    Recording rec;
    EventList bursts;
};

LfpResult gen_lfp(double duration_s, double fs, const LfpSpec& spec, std::uint64_t seed);

/// Pulse model f(t) = A(t) * sum_j s(t - t_j) plus onset distortion and DC edges.
/// Pulse times are continuous; the pulse rate need not divide fs, which is what
/// produces the aliased spectral lines of real recordings.
struct ArtifactModel {
    double pulse_uv = 1500.0;        // height of the first phase
    double width1_ms = 0.06;         // first (cathodic) phase
    double interphase_ms = 0.02;
    double width2_ms = 0.06;
    double edge_ms = 0.004;          // logistic edge width; sharp edges alias above fs/2
    double second_ratio = 0.7;
    double tail_ratio = 0.12;
    double tail_ms = 0.8;
    double support_ms = 7.0;         // pulse is zero beyond this
    double taper_ms = 1.0;
    double pulse_hz = 129.16;
    double first_pulse_delay_ms = 0.5;
    double mod_depth = 0.05;
    double mod_hz = 0.1;
    double mod_phase = 0.0;
    double jitter = 0.01;            // relative per-pulse amplitude jitter
    double onset_ratio = 0.5;        // distortion size relative to pulse_uv
    double onset_pulses = 20.0;      // decay constant in pulses
    double onset_ms = 1.5;
    double dc_uv = 300.0;            // onset DC step
    double dc_offset_ratio = -0.3;   // offset step relative to dc_uv
    double dc_tau_ms = 50.0;
    double gain = 1.0;               // per-recording stimulation amplitude
    std::uint64_t seed = 0;

    /// Base pulse at `tau_ms` after the pulse time, before gain and modulation.
    double shape(double tau_ms) const;
    /// Extra onset waveform, scaled per pulse by exp(-j / onset_pulses).
    double onset_shape(double tau_ms) const;
    /// Slow amplitude modulation A(t).
    double modulation(double t_s) const;
    /// Earliest time before a pulse at which shape() is non-zero.
    double lead_ms() const;
};

/// Streaming artifact source. Switch decisions take effect first_pulse_delay_ms
/// later, so the output at sample n depends only on decisions at samples <= n.
/// gen_artifact_track drives the same class from a schedule.
class ArtifactGenerator {
public:
    ArtifactGenerator(const ArtifactModel& model, double fs);
    void switch_on(SampleIndex n);
    void switch_off(SampleIndex n);
    bool on() const { return on_; }
    /// Artifact value at sample n; calls must use increasing n.
    double next(SampleIndex n);

private:
    struct Pulse {
        double t;
        double amp;
        double onset_weight;
    };
    struct Edge {
        double t;
        double amp;
    };
    ArtifactModel m_;
    double fs_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> gauss_;
    bool on_ = false;
    double next_pulse_ = 0.0;
    double stop_ = 0.0;       // pulses at t >= stop_ are not emitted
    bool stopping_ = false;
    long pulse_index_ = 0;
    std::deque<Pulse> active_;
    std::deque<Edge> edges_;
};

/// Artifact for a schedule of on intervals (seconds, decisions at the interval bounds).
std::vector<double> gen_artifact_track(const EventList& schedule, const ArtifactModel& model, double fs,
                                       std::size_t n_samples);

struct SemiRealParams {
    std::size_t K = 500;
    ann::ForestParams forest;
    preprocess::PrepareParams prepare;
};

struct SemiReal {
    Recording rec;                  // artifact + trend + base
    std::vector<double> artifact;   // overlap-added neighbor means
    std::vector<double> trend;      // DC trend of the source recording
    Recording base;
    StimPeriods periods;
    std::vector<SampleIndex> peaks;
};

/// Semi-real construction from an aDBS recording, a library and a stimulation-free LFP
/// of the same length and rate.
SemiReal make_semireal(const Recording& adbs_rec, const library::ArtifactLibrary& lib, const Recording& base_lfp,
                       const SemiRealParams& params = {});

/// Profile keys under [lfp] and [artifact] override defaults; unknown keys are rejected.
LfpSpec lfp_spec_from(const KeyValues& kv, LfpSpec spec = {});
ArtifactModel artifact_model_from(const KeyValues& kv, ArtifactModel model = {});

}  // namespace stimclean::synth
