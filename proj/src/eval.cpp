#include "stimclean/eval.hpp"

#include <algorithm>
#include <cmath>

#include "stimclean/dsp.hpp"
#include "stimclean/log.hpp"
#include "stimclean/preprocess.hpp"
#include "stimclean/smarta.hpp"

namespace stimclean::eval {

double signal_ar(const Recording& estimate, std::span<const SampleIndex> peaks, const ArOptions& opts) {
    const SegmentMatrix seg = preprocess::segment(estimate, peaks);
    const Eigen::Index n = seg.n();
    if (n < 1) throw ValidationError("signal_ar: no complete segment");
    const int p = static_cast<int>(seg.p());
    const int head = std::clamp(ms_to_samples(opts.t1_ms, estimate.fs), 1, p);
    const int tail = std::clamp(ms_to_samples(opts.t2_ms, estimate.fs), 1, p);
    double total = 0.0;
    std::vector<double> z;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - opts.neighbors);
        const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + opts.neighbors);
        z.clear();
        for (Eigen::Index j = lo; j <= hi; ++j) {
            const double* col = seg.data.col(j).data();
            z.insert(z.end(), col + (p - tail), col + p);
        }
        const std::span<const double> zhat(seg.data.col(i).data(), static_cast<std::size_t>(head));
        total += smarta::ar_index(zhat, z);
    }
    return total / static_cast<double>(n);
}

namespace {

ScResult sc_from_spectrum(const dsp::Spectrum& sp, double fs, double f_c) {
    ScResult r;
    double half = 20.0;
    const double nyq = fs / 2.0;
    if (f_c - half < 0.0 || f_c + half > nyq) {
        half = std::max(1.0, std::min(f_c, nyq - f_c));
        r.narrowed = true;
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < sp.freqs.size(); ++i) {
        const double d = std::abs(sp.freqs[i] - f_c);
        if (d <= half + 1e-9) den += sp.power[i];
        if (d <= 1.0 + 1e-9) num += sp.power[i];
    }
    if (!(den > 0.0)) {
        r.degenerate = true;
        return r;
    }
    r.sc = num / den;
    return r;
}

}  // namespace

ScResult spectral_concentration(std::span<const double> x, double fs, double f_c) {
    if (!(f_c > 0.0 && f_c < fs / 2.0)) throw ValidationError("spectral_concentration: f_c outside (0, fs/2)");
    const ScResult r = sc_from_spectrum(dsp::welch_psd(x, fs), fs, f_c);
    if (r.narrowed) log_warn("SC neighborhood narrowed near 0 Hz or Nyquist");
    if (r.degenerate) log_warn("SC of a zero-power neighborhood reported as 0");
    return r;
}

std::vector<double> ScGrid::frequencies() const {
    std::vector<double> f;
    for (int n = 1; n <= harmonics; ++n) f.push_back(pulse_hz * n);
    for (int m = 0; m < alias_steps; ++m) {
        f.push_back(alias1_hz + pulse_hz * m);
        f.push_back(alias2_hz + pulse_hz * m);
    }
    std::sort(f.begin(), f.end());
    return f;
}

double mean_spectral_concentration(std::span<const double> x, double fs, const ScGrid& grid) {
    const dsp::Spectrum sp = dsp::welch_psd(x, fs);
    const auto freqs = grid.frequencies();
    double total = 0.0;
    for (double f : freqs) total += sc_from_spectrum(sp, fs, f).sc;
    return total / static_cast<double>(freqs.size());
}

std::vector<Band> standard_bands() {
    return {{"alpha", 4, 8},      {"beta", 13, 35},      {"gamma", 60, 90},
            {"hfo", 200, 400},    {"vhfo1", 400, 1000},  {"vhfo2", 1000, 3000}};
}

double nmse(std::span<const double> estimate, std::span<const double> truth) {
    if (estimate.size() != truth.size()) throw ValidationError("nmse: length mismatch");
    long double err = 0.0L, ref = 0.0L;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const long double d = static_cast<long double>(estimate[i]) - truth[i];
        err += d * d;
        ref += static_cast<long double>(truth[i]) * truth[i];
    }
    if (!(ref > 0.0L)) throw ValidationError("nmse: truth is identically zero");
    if (!(err > 0.0L)) return kNmseFloorDb;
    return std::max(kNmseFloorDb, 10.0 * std::log10(static_cast<double>(err / ref)));
}

std::vector<double> band_filter(std::span<const double> x, const Band& band, double fs) {
    const auto bp = dsp::design_filter(dsp::FilterKind::butterworth_bp, 4, band.low_hz, band.high_hz, 0.0, fs);
    return dsp::filtfilt(bp, x);
}

double nmse(std::span<const double> estimate, std::span<const double> truth, const Band& band, double fs) {
    return nmse(band_filter(estimate, band, fs), band_filter(truth, band, fs));
}

double MatchResult::mean_deviation() const {
    if (details.empty()) return 0.0;
    double s = 0.0;
    for (const auto& d : details) s += d.deviation;
    return s / static_cast<double>(details.size());
}

namespace {

double overlap(const TimeInterval& a, const TimeInterval& b) {
    return std::max(0.0, std::min(a.offset, b.offset) - std::max(a.onset, b.onset));
}

}  // namespace

MatchResult match_events(const EventList& detected, const EventList& truth, const MatchOptions& opts) {
    MatchResult r;
    const auto& det = detected.events;
    const auto& tru = truth.events;
    std::vector<char> truth_used(tru.size(), 0);
    std::size_t lo = 0;
    for (const auto& d : det) {
        while (lo < tru.size() && tru[lo].offset <= d.onset) ++lo;
        std::size_t best = tru.size();
        double best_ov = 0.0;
        for (std::size_t j = lo; j < tru.size() && tru[j].onset < d.offset; ++j) {
            if (opts.one_to_one && truth_used[j]) continue;
            const double ov = overlap(d, tru[j]);
            if (ov > best_ov) {
                best_ov = ov;
                best = j;
            }
        }
        if (best == tru.size()) {
            ++r.fp;
            continue;
        }
        ++r.tp;
        truth_used[best] = 1;
        const double d1 = std::abs(d.onset - tru[best].onset);
        const double d2 = std::abs(d.offset - tru[best].offset);
        r.details.push_back({d1 + d2, best_ov / (d1 + best_ov), best_ov / (d2 + best_ov)});
    }
    // Recall counts truth events overlapped by any detection (matched in one-to-one mode).
    for (std::size_t j = 0; j < tru.size(); ++j) {
        bool hit = truth_used[j] != 0;
        if (!opts.one_to_one && !hit) {
            for (const auto& d : det) {
                if (overlap(d, tru[j]) > 0.0) {
                    hit = true;
                    break;
                }
            }
        }
        if (hit) ++r.truth_hit;
    }
    r.fn = static_cast<int>(tru.size()) - r.truth_hit;
    r.recall_undefined = tru.empty();
    r.precision_undefined = det.empty();
    r.recall = tru.empty() ? 0.0 : static_cast<double>(r.truth_hit) / static_cast<double>(tru.size());
    r.precision = det.empty() ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(det.size());
    r.f1 = (r.recall + r.precision) > 0.0 ? 2.0 * r.recall * r.precision / (r.recall + r.precision) : 0.0;
    return r;
}

EventList clip_to_windows(const EventList& ev, std::span<const double> onsets, double window_s) {
    std::vector<TimeInterval> win;
    std::vector<double> sorted(onsets.begin(), onsets.end());
    std::sort(sorted.begin(), sorted.end());
    for (double o : sorted) {
        if (!win.empty() && o <= win.back().offset) {
            win.back().offset = std::max(win.back().offset, o + window_s);
        } else {
            win.push_back({o, o + window_s});
        }
    }
    EventList out;
    for (const auto& e : ev.events) {
        for (const auto& w : win) {
            const double s = std::max(e.onset, w.onset), t = std::min(e.offset, w.offset);
            if (t > s) out.events.push_back({s, t});
        }
    }
    return out;
}

MatchResult match_events_onset(const EventList& detected, const EventList& truth, std::span<const double> onsets,
                               double window_s, const MatchOptions& opts) {
    return match_events(clip_to_windows(detected, onsets, window_s), clip_to_windows(truth, onsets, window_s), opts);
}

}  // namespace stimclean::eval
