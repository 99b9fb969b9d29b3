#include "stimclean/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "stimclean/ann.hpp"
#include "stimclean/dsp.hpp"
#include "stimclean/log.hpp"
#include "stimclean/parallel.hpp"
#include "stimclean/preprocess.hpp"
#include "stimclean/smarta.hpp"

namespace stimclean::synth {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> colored_noise(std::size_t n, double fs, double exponent, double floor_hz, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    std::vector<double> white(n);
    for (auto& v : white) v = gauss(rng);
    if (n < 2) return white;
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, white);
    spec[0] = 0.0;
    for (std::size_t k = 1; k < spec.size(); ++k) {
        const double f = std::max(static_cast<double>(k) * fs / static_cast<double>(n), floor_hz);
        spec[k] *= std::pow(f, -exponent / 2.0);
    }
    std::vector<double> out;
    fft.inv(out, spec, static_cast<Eigen::Index>(n));
    return out;
}

void scale_to_rms(std::vector<double>& x, double target) {
    const double r = dsp::rms(x);
    if (r > 0.0)
        for (auto& v : x) v *= target / r;
}

}  // namespace

LfpResult gen_lfp(double duration_s, double fs, const LfpSpec& spec, std::uint64_t seed) {
    if (!(duration_s > 0.0) || !(fs > 0.0)) throw ValidationError("gen_lfp: duration and fs must be positive");
    const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
    std::mt19937_64 rng(seed);
    std::vector<double> x = colored_noise(n, fs, spec.exponent, spec.floor_hz, rng);
    scale_to_rms(x, spec.colored_rms);

    std::normal_distribution<double> gauss;
    for (auto& v : x) v += spec.white_rms * gauss(rng);

    LfpResult out;
    if (spec.beta_amplitude > 0.0 && spec.burst_rate_hz > 0.0) {
        std::exponential_distribution<double> gap(spec.burst_rate_hz);
        std::gamma_distribution<double> dur(spec.burst_shape, spec.burst_mean_s / spec.burst_shape);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double t = gap(rng);
        for (;;) {
            const double d = std::max(dur(rng), spec.burst_min_s);
            if (t + d > duration_s) break;
            const double f = spec.beta_hz + spec.beta_jitter_hz * (2.0 * unit(rng) - 1.0);
            const double phase = 2.0 * kPi * unit(rng);
            const double amp = spec.beta_amplitude * (0.7 + 0.6 * unit(rng));
            const auto s0 = static_cast<std::size_t>(std::ceil(t * fs));
            const auto s1 = std::min(n, static_cast<std::size_t>(std::ceil((t + d) * fs)));
            for (std::size_t i = s0; i < s1; ++i) {
                const double tau = static_cast<double>(i) / fs - t;
                const double env = std::sin(kPi * tau / d);
                x[i] += amp * env * env * std::sin(2.0 * kPi * f * tau + phase);
            }
            out.bursts.events.push_back({t, t + d});
            t += d + gap(rng);
        }
    }
    for (const Tone& tone : spec.tones) {
        for (std::size_t i = 0; i < n; ++i) x[i] += tone.amplitude * std::sin(2.0 * kPi * tone.hz * static_cast<double>(i) / fs);
    }
    out.rec.samples = std::move(x);
    out.rec.fs = fs;
    return out;
}

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double smooth_rect(double t, double a, double b, double edge) {
    if (!(edge > 0.0)) return (t >= a && t < b) ? 1.0 : 0.0;
    return logistic((t - a) / edge) - logistic((t - b) / edge);
}

}  // namespace

double ArtifactModel::shape(double tau) const {
    if (tau < -lead_ms() || tau >= support_ms) return 0.0;
    const double s2 = width1_ms + interphase_ms;
    double v = smooth_rect(tau, 0.0, width1_ms, edge_ms) - second_ratio * smooth_rect(tau, s2, s2 + width2_ms, edge_ms);
    if (tau > 0.0) v += tail_ratio * (1.0 - std::exp(-tau / 0.05)) * std::exp(-tau / tail_ms);
    const double taper_start = support_ms - taper_ms;
    if (tau > taper_start) v *= 0.5 * (1.0 + std::cos(kPi * (tau - taper_start) / taper_ms));
    return pulse_uv * v;
}

double ArtifactModel::onset_shape(double tau) const {
    if (tau <= 0.0 || tau >= support_ms) return 0.0;
    double v = (1.0 - std::exp(-tau / 0.2)) * std::exp(-tau / onset_ms);
    const double taper_start = support_ms - taper_ms;
    if (tau > taper_start) v *= 0.5 * (1.0 + std::cos(kPi * (tau - taper_start) / taper_ms));
    return onset_ratio * pulse_uv * v;
}

double ArtifactModel::modulation(double t) const {
    return 1.0 + mod_depth * std::sin(2.0 * kPi * mod_hz * t + mod_phase);
}

double ArtifactModel::lead_ms() const { return 10.0 * std::max(edge_ms, 0.0); }

ArtifactGenerator::ArtifactGenerator(const ArtifactModel& model, double fs) : m_(model), fs_(fs), rng_(model.seed) {
    if (!(fs > 0.0) || !(model.pulse_hz > 0.0)) throw ValidationError("artifact model needs positive fs and pulse rate");
    if (model.first_pulse_delay_ms <= model.lead_ms())
        throw ValidationError("first_pulse_delay_ms must exceed the pulse lead time");
}

void ArtifactGenerator::switch_on(SampleIndex n) {
    if (on_) return;
    on_ = true;
    stopping_ = false;
    const double t = static_cast<double>(n) / fs_ + m_.first_pulse_delay_ms / 1000.0;
    next_pulse_ = t;
    pulse_index_ = 0;
    edges_.push_back({t, m_.gain * m_.dc_uv * m_.modulation(t)});
}

void ArtifactGenerator::switch_off(SampleIndex n) {
    if (!on_) return;
    on_ = false;
    stopping_ = true;
    stop_ = static_cast<double>(n) / fs_ + m_.first_pulse_delay_ms / 1000.0;
    edges_.push_back({stop_, m_.gain * m_.dc_uv * m_.dc_offset_ratio * m_.modulation(stop_)});
}

double ArtifactGenerator::next(SampleIndex n) {
    const double t = static_cast<double>(n) / fs_;
    const double lead = m_.lead_ms() / 1000.0;
    while ((on_ || stopping_) && next_pulse_ - lead <= t) {
        if (stopping_ && next_pulse_ >= stop_) {
            stopping_ = false;
            break;
        }
        const double amp = m_.gain * m_.modulation(next_pulse_) * (1.0 + m_.jitter * gauss_(rng_));
        const double w = m_.onset_pulses > 0.0 ? std::exp(-static_cast<double>(pulse_index_) / m_.onset_pulses) : 0.0;
        active_.push_back({next_pulse_, amp, w});
        ++pulse_index_;
        next_pulse_ += 1.0 / m_.pulse_hz;
    }
    while (!active_.empty() && (t - active_.front().t) * 1000.0 >= m_.support_ms) active_.pop_front();
    double v = 0.0;
    for (const Pulse& p : active_) {
        const double tau = (t - p.t) * 1000.0;
        v += p.amp * (m_.shape(tau) + p.onset_weight * m_.onset_shape(tau));
    }
    const double tau_dc = m_.dc_tau_ms / 1000.0;
    while (!edges_.empty() && t - edges_.front().t > 30.0 * tau_dc) edges_.pop_front();
    for (const Edge& e : edges_) {
        if (t >= e.t) v += e.amp * std::exp(-(t - e.t) / tau_dc);
    }
    return v;
}

std::vector<double> gen_artifact_track(const EventList& schedule, const ArtifactModel& model, double fs,
                                       std::size_t n_samples) {
    schedule.validate();
    ArtifactGenerator gen(model, fs);
    const auto iv = to_samples(schedule.events, fs);
    std::vector<double> out(n_samples);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto n = static_cast<SampleIndex>(i);
        while (k < iv.size()) {
            if (!gen.on() && n >= iv[k].start) gen.switch_on(iv[k].start);
            if (gen.on() && n >= iv[k].end) {
                gen.switch_off(iv[k].end);
                ++k;
                continue;
            }
            break;
        }
        out[i] = gen.next(n);
    }
    return out;
}

SemiReal make_semireal(const Recording& adbs_rec, const library::ArtifactLibrary& lib, const Recording& base_lfp,
                       const SemiRealParams& params) {
    adbs_rec.validate();
    base_lfp.validate();
    if (base_lfp.size() != adbs_rec.size() || base_lfp.fs != adbs_rec.fs)
        throw ValidationError("base LFP must match the aDBS recording in length and rate");
    if (lib.entries.empty()) throw ValidationError("make_semireal needs a non-empty library");

    const preprocess::Prepared prep = preprocess::prepare(adbs_rec, params.prepare);
    const SegmentMatrix& seg = prep.segments;
    const std::vector<int>& feat = lib.features.selected_idx;

    Eigen::Index total = 0;
    for (const auto& e : lib.entries) total += e.n();
    Eigen::MatrixXd poolW(static_cast<Eigen::Index>(feat.size()), total), poolX(seg.p(), total);
    Eigen::Index col = 0;
    for (const auto& e : lib.entries) {
        if (e.p() != seg.p()) throw ValidationError("library segment length differs from the recording's");
        poolW.middleCols(col, e.n()) = library::select_rows(e.W, feat);
        poolX.middleCols(col, e.n()) = e.X;
        col += e.n();
    }
    std::size_t K = params.K;
    if (static_cast<std::size_t>(total) < K) {
        log_warn("library pool has " + std::to_string(total) + " segments; averaging all of them");
        K = static_cast<std::size_t>(total);
    }
    // Queries use the recording's denoised wavelet features.
    const Eigen::MatrixXd D = seg.n() >= 21 ? shrink::shrink_grouped(seg.data) : seg.data;
    const Eigen::MatrixXd queries = library::select_rows(library::haar_columns(D), feat);
    const ann::ProjectionForest forest = ann::ProjectionForest::build(poolW, params.forest);

    Eigen::MatrixXd templates(seg.p(), seg.n());
    const auto chunks = static_cast<std::size_t>(std::max(1, default_threads()));
    const auto per = (static_cast<std::size_t>(seg.n()) + chunks - 1) / chunks;
    parallel_for(chunks, [&](std::size_t c) {
        ann::QueryScratch scratch;
        const std::size_t end = std::min(static_cast<std::size_t>(seg.n()), (c + 1) * per);
        for (std::size_t i = c * per; i < end; ++i) {
            const std::span<const double> w(queries.col(static_cast<Eigen::Index>(i)).data(), feat.size());
            const auto cand = forest.query_candidates(w, scratch);
            const auto nn = cand.size() >= K ? ann::knn(poolW, cand, w, K) : ann::knn_exhaustive(poolW, w, K);
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(seg.p());
            for (auto j : nn) acc += poolX.col(j);
            templates.col(static_cast<Eigen::Index>(i)) = acc / static_cast<double>(nn.size());
        }
    });

    std::vector<SampleIndex> starts(static_cast<std::size_t>(seg.n()));
    for (Eigen::Index i = 0; i < seg.n(); ++i) starts[static_cast<std::size_t>(i)] = seg.start(i);
    SemiReal out;
    out.artifact = smarta::overlap_add(templates, starts, adbs_rec.size());
    out.trend = prep.dc.trend;
    out.base = base_lfp;
    out.periods = prep.periods;
    out.peaks = prep.peaks;
    std::vector<double> x(adbs_rec.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = out.artifact[i] + out.trend[i] + base_lfp.samples[i];
    out.rec = adbs_rec.with_samples(std::move(x));
    out.rec.id = adbs_rec.id + "-semireal";
    return out;
}

namespace {

void check_known(const KeyValues& kv, const std::string& section, const std::vector<std::string>& known) {
    for (const auto& [key, value] : kv.entries()) {
        if (key.rfind(section + ".", 0) != 0) continue;
        const std::string name = key.substr(section.size() + 1);
        if (std::find(known.begin(), known.end(), name) == known.end())
            throw ValidationError("unknown profile key '" + key + "'");
    }
}

}  // namespace

LfpSpec lfp_spec_from(const KeyValues& kv, LfpSpec s) {
    check_known(kv, "lfp", {"exponent", "colored_rms", "floor_hz", "white_rms", "beta_hz", "beta_jitter_hz",
                            "burst_rate_hz", "burst_mean_s", "burst_shape", "burst_min_s", "beta_amplitude",
                            "tone_hz", "tone_amplitude"});
    s.exponent = kv.get_double("lfp.exponent", s.exponent);
    s.colored_rms = kv.get_double("lfp.colored_rms", s.colored_rms);
    s.floor_hz = kv.get_double("lfp.floor_hz", s.floor_hz);
    s.white_rms = kv.get_double("lfp.white_rms", s.white_rms);
    s.beta_hz = kv.get_double("lfp.beta_hz", s.beta_hz);
    s.beta_jitter_hz = kv.get_double("lfp.beta_jitter_hz", s.beta_jitter_hz);
    s.burst_rate_hz = kv.get_double("lfp.burst_rate_hz", s.burst_rate_hz);
    s.burst_mean_s = kv.get_double("lfp.burst_mean_s", s.burst_mean_s);
    s.burst_shape = kv.get_double("lfp.burst_shape", s.burst_shape);
    s.burst_min_s = kv.get_double("lfp.burst_min_s", s.burst_min_s);
    s.beta_amplitude = kv.get_double("lfp.beta_amplitude", s.beta_amplitude);
    if (kv.has("lfp.tone_hz")) s.tones.push_back({kv.require_double("lfp.tone_hz"), kv.get_double("lfp.tone_amplitude", 1.0)});
    return s;
}

ArtifactModel artifact_model_from(const KeyValues& kv, ArtifactModel m) {
    check_known(kv, "artifact",
                {"pulse_uv", "width1_ms", "interphase_ms", "width2_ms", "edge_ms", "second_ratio", "tail_ratio", "tail_ms", "support_ms",
                 "taper_ms", "pulse_hz", "first_pulse_delay_ms", "mod_depth", "mod_hz", "mod_phase", "jitter",
                 "onset_ratio", "onset_pulses", "onset_ms", "dc_uv", "dc_offset_ratio", "dc_tau_ms", "gain", "seed"});
    m.pulse_uv = kv.get_double("artifact.pulse_uv", m.pulse_uv);
    m.width1_ms = kv.get_double("artifact.width1_ms", m.width1_ms);
    m.interphase_ms = kv.get_double("artifact.interphase_ms", m.interphase_ms);
    m.width2_ms = kv.get_double("artifact.width2_ms", m.width2_ms);
    m.edge_ms = kv.get_double("artifact.edge_ms", m.edge_ms);
    m.second_ratio = kv.get_double("artifact.second_ratio", m.second_ratio);
    m.tail_ratio = kv.get_double("artifact.tail_ratio", m.tail_ratio);
    m.tail_ms = kv.get_double("artifact.tail_ms", m.tail_ms);
    m.support_ms = kv.get_double("artifact.support_ms", m.support_ms);
    m.taper_ms = kv.get_double("artifact.taper_ms", m.taper_ms);
    m.pulse_hz = kv.get_double("artifact.pulse_hz", m.pulse_hz);
    m.first_pulse_delay_ms = kv.get_double("artifact.first_pulse_delay_ms", m.first_pulse_delay_ms);
    m.mod_depth = kv.get_double("artifact.mod_depth", m.mod_depth);
    m.mod_hz = kv.get_double("artifact.mod_hz", m.mod_hz);
    m.mod_phase = kv.get_double("artifact.mod_phase", m.mod_phase);
    m.jitter = kv.get_double("artifact.jitter", m.jitter);
    m.onset_ratio = kv.get_double("artifact.onset_ratio", m.onset_ratio);
    m.onset_pulses = kv.get_double("artifact.onset_pulses", m.onset_pulses);
    m.onset_ms = kv.get_double("artifact.onset_ms", m.onset_ms);
    m.dc_uv = kv.get_double("artifact.dc_uv", m.dc_uv);
    m.dc_offset_ratio = kv.get_double("artifact.dc_offset_ratio", m.dc_offset_ratio);
    m.dc_tau_ms = kv.get_double("artifact.dc_tau_ms", m.dc_tau_ms);
    m.gain = kv.get_double("artifact.gain", m.gain);
    m.seed = static_cast<std::uint64_t>(kv.get_int("artifact.seed", static_cast<long long>(m.seed)));
    return m;
}

}  // namespace stimclean::synth
