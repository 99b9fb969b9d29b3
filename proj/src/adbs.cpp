#include "stimclean/adbs.hpp"

#include <algorithm>
#include <cmath>

#include "stimclean/log.hpp"

namespace stimclean::adbs {

namespace {

dsp::BiquadChain bandpass(double fs, const BetaConfig& cfg) {
    return dsp::design_filter(dsp::FilterKind::butterworth_bp, cfg.bp_order, cfg.bp_low_hz, cfg.bp_high_hz, 0.0, fs);
}

dsp::BiquadChain full_chain(double fs, double peak_hz, const BetaConfig& cfg) {
    dsp::BiquadChain chain = bandpass(fs, cfg);
    const auto peak = dsp::design_filter(dsp::FilterKind::peak, 2, peak_hz, 0.0, cfg.peak_q, fs);
    for (int i = 0; i < cfg.peak_passes; ++i) chain = chain.then(peak);
    return chain;
}

}  // namespace

double find_beta_peak(std::span<const double> x, double fs, const BetaConfig& cfg, bool* fallback) {
    if (fallback) *fallback = false;
    auto use_default = [&] {
        log_warn("no beta peak found; using " + std::to_string(cfg.default_peak_hz) + " Hz");
        if (fallback) *fallback = true;
        return cfg.default_peak_hz;
    };
    if (x.size() < static_cast<std::size_t>(fs)) return use_default();
    const auto y = dsp::filtfilt(bandpass(fs, cfg), x);
    const dsp::Spectrum sp = dsp::welch_psd(y, fs);
    std::vector<double> band;
    std::size_t best = sp.freqs.size();
    for (std::size_t i = 0; i < sp.freqs.size(); ++i) {
        if (sp.freqs[i] < cfg.search_low_hz || sp.freqs[i] > cfg.search_high_hz) continue;
        band.push_back(sp.power[i]);
        if (best == sp.freqs.size() || sp.power[i] > sp.power[best]) best = i;
    }
    if (band.empty() || best == sp.freqs.size()) return use_default();
    // A peak must be interior to the search band and stand clear of the band median.
    const double med = dsp::median(band);
    const bool at_edge = sp.freqs[best] <= cfg.search_low_hz || sp.freqs[best] >= cfg.search_high_hz;
    if (!(sp.power[best] > 2.0 * med) || at_edge) return use_default();
    return sp.freqs[best];
}

BetaAmplitude beta_amplitude(std::span<const double> x, double fs, const BetaConfig& cfg, std::optional<double> peak_hz) {
    for (double v : x)
        if (!std::isfinite(v)) throw ValidationError("beta_amplitude: non-finite input");
    BetaAmplitude out;
    out.peak_hz = peak_hz ? *peak_hz : find_beta_peak(x, fs, cfg);
    std::vector<double> y = dsp::filtfilt(bandpass(fs, cfg), x);
    const auto peak = dsp::design_filter(dsp::FilterKind::peak, 2, out.peak_hz, 0.0, cfg.peak_q, fs);
    for (int i = 0; i < cfg.peak_passes; ++i) y = dsp::filtfilt(peak, y);
    for (auto& v : y) v = std::abs(v);
    out.amplitude = dsp::moving_average(y, cfg.ma_ms, fs);
    return out;
}

CausalBetaAmplitude::CausalBetaAmplitude(double fs, double peak_hz, const BetaConfig& cfg)
    : chain_(full_chain(fs, peak_hz, cfg)),
      ring_(static_cast<std::size_t>(dsp::moving_average_width(cfg.ma_ms, fs)), 0.0) {}

double CausalBetaAmplitude::step(double x) {
    const double v = std::abs(chain_.step(x));
    sum_ += v - ring_[pos_];
    ring_[pos_] = v;
    pos_ = (pos_ + 1) % ring_.size();
    filled_ = std::min(filled_ + 1, ring_.size());
    return static_cast<double>(sum_ / static_cast<long double>(filled_));
}

std::vector<double> causal_beta_amplitude(std::span<const double> x, double fs, double peak_hz, const BetaConfig& cfg) {
    CausalBetaAmplitude est(fs, peak_hz, cfg);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = est.step(x[i]);
    return out;
}

EventDetector::EventDetector(double threshold, SampleIndex min_on) : threshold_(threshold), min_on_(min_on) {
    if (!(threshold > 0.0)) throw ValidationError("event threshold must be positive");
}

bool EventDetector::step(SampleIndex n, double amplitude) {
    if (!on_) {
        if (amplitude > threshold_) {
            on_ = true;
            onset_ = n;
        }
    } else if (n - onset_ >= min_on_ && amplitude < threshold_) {
        on_ = false;
        events_.push_back({onset_, n});
    }
    return on_;
}

void EventDetector::finish(SampleIndex end) {
    if (!on_) return;
    on_ = false;
    events_.push_back({onset_, std::max(end, onset_ + min_on_)});
}

EventList detect_beta_events(std::span<const double> amplitude, double threshold, double fs, double min_on_ms) {
    EventDetector det(threshold, ms_to_samples(min_on_ms, fs));
    for (std::size_t i = 0; i < amplitude.size(); ++i) det.step(static_cast<SampleIndex>(i), amplitude[i]);
    det.finish(static_cast<SampleIndex>(amplitude.size()));
    return {to_time(det.events(), fs)};
}

double threshold_from(std::span<const double> amplitude, double percentile) {
    return dsp::percentile(amplitude, percentile);
}

double SimResult::on_fraction() const {
    if (rec.size() == 0) return 0.0;
    double on = 0.0;
    for (const auto& e : schedule.events) on += std::min(e.offset, rec.duration()) - e.onset;
    return on / rec.duration();
}

SimResult simulate_adbs(const Recording& base, const synth::ArtifactModel& model, const BetaConfig& cfg,
                        const SimParams& params) {
    base.validate();
    if (!(params.baseline_fraction > 0.0 && params.baseline_fraction <= 1.0))
        throw ValidationError("baseline_fraction must be in (0, 1]");
    const auto n = base.size();
    const auto n_base = std::max<std::size_t>(1, static_cast<std::size_t>(params.baseline_fraction * static_cast<double>(n)));
    const std::span<const double> baseline(base.samples.data(), n_base);

    SimResult out;
    out.peak_hz = params.peak_hz ? *params.peak_hz : find_beta_peak(baseline, base.fs, cfg);
    if (params.threshold) {
        out.threshold = *params.threshold;
    } else {
        const auto amp = causal_beta_amplitude(baseline, base.fs, out.peak_hz, cfg);
        out.threshold = threshold_from(amp, cfg.threshold_percentile);
    }

    CausalBetaAmplitude est(base.fs, out.peak_hz, cfg);
    EventDetector det(out.threshold, ms_to_samples(cfg.min_on_ms, base.fs));
    synth::ArtifactGenerator gen(model, base.fs);
    std::vector<double> sensed(n);
    out.artifact.resize(n);
    out.amplitude.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = static_cast<SampleIndex>(i);
        out.artifact[i] = gen.next(s);
        sensed[i] = base.samples[i] + out.artifact[i];
        out.amplitude[i] = est.step(sensed[i]);
        const bool was_on = det.on();
        const bool now_on = det.step(s, out.amplitude[i]);
        if (now_on && !was_on) gen.switch_on(s);
        if (!now_on && was_on) gen.switch_off(s);
    }
    det.finish(static_cast<SampleIndex>(n));
    out.schedule.events = to_time(det.events(), base.fs);
    out.rec = base.with_samples(std::move(sensed));
    out.rec.stim_schedule = out.schedule.events;
    return out;
}

}  // namespace stimclean::adbs
