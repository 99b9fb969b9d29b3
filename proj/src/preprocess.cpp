#include "stimclean/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stimclean/dsp.hpp"

namespace stimclean::preprocess {

namespace {

// Greedy minimum-distance suppression: tallest first, ties to the earlier sample.
std::vector<SampleIndex> suppress_close(const std::vector<SampleIndex>& cand, std::span<const double> height,
                                        double min_distance) {
    std::vector<std::size_t> order(cand.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return height[static_cast<std::size_t>(cand[a])] > height[static_cast<std::size_t>(cand[b])];
    });
    std::vector<char> removed(cand.size(), 0);
    std::vector<char> kept(cand.size(), 0);
    for (std::size_t idx : order) {
        if (removed[idx]) continue;
        kept[idx] = 1;
        for (std::size_t j = idx; j-- > 0;) {
            if (static_cast<double>(cand[idx] - cand[j]) > min_distance) break;
            removed[j] = 1;
        }
        for (std::size_t j = idx + 1; j < cand.size(); ++j) {
            if (static_cast<double>(cand[j] - cand[idx]) > min_distance) break;
            removed[j] = 1;
        }
    }
    std::vector<SampleIndex> out;
    for (std::size_t i = 0; i < cand.size(); ++i)
        if (kept[i]) out.push_back(cand[i]);
    return out;
}

}  // namespace

std::vector<SampleIndex> detect_peaks(const Recording& rec, const PeakDetectionParams& params) {
    const std::size_t n = rec.size();
    if (n < 3) throw NoStimulationError("recording too short for peak detection");

    const auto hp = dsp::design_filter(dsp::FilterKind::butterworth_hp, params.highpass_order, params.highpass_hz, 0.0,
                                       0.0, rec.fs);
    std::vector<double> y = dsp::filtfilt(hp, rec.samples);
    const std::vector<double> trend = dsp::moving_average(y, params.trend_ms, rec.fs);
    for (std::size_t i = 0; i < n; ++i) y[i] = std::abs(y[i] - trend[i]);
    const std::vector<double> env = dsp::moving_average(y, params.smooth_ms, rec.fs);
    const int half = dsp::moving_average_width(params.smooth_ms, rec.fs) / 2;

    const double thr = std::max(dsp::percentile(env, params.threshold_percentile),
                                params.noise_floor_ratio * dsp::median(env));
    std::vector<SampleIndex> cand;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (env[i] > thr && env[i] > env[i - 1] && env[i] >= env[i + 1]) cand.push_back(static_cast<SampleIndex>(i));
    }
    const double min_distance = (1.0 / rec.f_sti - params.tau_ms / 1000.0) * rec.fs;
    std::vector<SampleIndex> peaks = suppress_close(cand, env, min_distance);
    // The smoothed envelope is flat across a pulse; place each peak on the largest
    // rectified sample under its smoothing window.
    for (auto& pk : peaks) {
        const auto lo = static_cast<std::size_t>(std::max<SampleIndex>(0, pk - half));
        const auto hi = static_cast<std::size_t>(std::min<SampleIndex>(static_cast<SampleIndex>(n) - 1, pk + half));
        pk = static_cast<SampleIndex>(std::max_element(y.begin() + static_cast<std::ptrdiff_t>(lo),
                                                       y.begin() + static_cast<std::ptrdiff_t>(hi) + 1) -
                                      y.begin());
    }
    peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());

    // Drop runs that are too short to be a stimulation train.
    const double gap = period_gap_max(rec.fs, rec.f_sti);
    std::vector<SampleIndex> out;
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= peaks.size(); ++i) {
        if (i == peaks.size() || static_cast<double>(peaks[i] - peaks[i - 1]) > gap) {
            if (i - run_start >= static_cast<std::size_t>(std::max(1, params.min_train_pulses)))
                out.insert(out.end(), peaks.begin() + static_cast<std::ptrdiff_t>(run_start),
                           peaks.begin() + static_cast<std::ptrdiff_t>(i));
            run_start = i;
        }
    }
    if (out.empty()) throw NoStimulationError("no stimulation artifacts detected in recording '" + rec.id + "'");
    return out;
}

double period_gap_max(double fs, double f_sti, double gap_periods) { return gap_periods * fs / f_sti; }

StimPeriods identify_stim_periods(std::span<const SampleIndex> peaks, double fs, double f_sti, std::size_t n_samples,
                                  double gap_periods) {
    StimPeriods out;
    if (peaks.empty()) return out;
    const SegmentGeometry g = SegmentGeometry::from(fs, f_sti);
    const double gap = period_gap_max(fs, f_sti, gap_periods);
    const auto n = static_cast<SampleIndex>(n_samples);
    auto close = [&](SampleIndex first, SampleIndex last) {
        const SampleIndex s = std::clamp<SampleIndex>(first - g.pre, 0, n);
        const SampleIndex e = std::clamp<SampleIndex>(last + g.post, 0, n);
        if (!out.periods.empty() && s < out.periods.back().end) {
            out.periods.back().end = std::max(out.periods.back().end, e);
        } else if (e > s) {
            out.periods.push_back({s, e});
        }
    };
    SampleIndex first = peaks[0];
    for (std::size_t i = 1; i < peaks.size(); ++i) {
        if (static_cast<double>(peaks[i] - peaks[i - 1]) > gap) {
            close(first, peaks[i - 1]);
            first = peaks[i];
        }
    }
    close(first, peaks.back());
    return out;
}

namespace {

void fit_piece(std::span<const double> x, double fs, int degree, double smooth_ms, std::span<double> trend) {
    const std::size_t len = x.size();
    if (len == 0) return;
    if (len < 2) {
        trend[0] = x[0];
        return;
    }
    const std::vector<double> smooth = dsp::moving_average(x, smooth_ms, fs);
    if (len <= static_cast<std::size_t>(degree)) degree = 1;
    const std::vector<double> c = dsp::polyfit(smooth, degree);
    const std::vector<double> fit = dsp::polyeval(c, len);
    std::copy(fit.begin(), fit.end(), trend.begin());
}

}  // namespace

std::vector<double> estimate_trend(std::span<const double> x, double fs, const StimPeriods& periods,
                                   const DetrendParams& params) {
    const auto n = static_cast<SampleIndex>(x.size());
    std::vector<double> trend(x.size(), 0.0);
    auto piece = [&](SampleIndex s, SampleIndex e, int degree) {
        s = std::clamp<SampleIndex>(s, 0, n);
        e = std::clamp<SampleIndex>(e, 0, n);
        if (e <= s) return;
        const auto off = static_cast<std::size_t>(s);
        const auto len = static_cast<std::size_t>(e - s);
        fit_piece(x.subspan(off, len), fs, degree, params.smooth_ms, std::span<double>(trend).subspan(off, len));
    };
    SampleIndex cursor = 0;
    for (const SampleInterval& p : periods.periods) {
        piece(cursor, p.start, params.rest_degree);
        piece(p.start, p.end, params.stim_degree);
        cursor = std::max(cursor, p.end);
    }
    piece(cursor, n, params.rest_degree);
    return trend;
}

Detrended remove_dc_transient(const Recording& rec, const StimPeriods& periods, const DetrendParams& params) {
    std::vector<double> trend = estimate_trend(rec.samples, rec.fs, periods, params);
    std::vector<double> out(rec.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rec.samples[i] - trend[i];
    return {rec.with_samples(std::move(out)), std::move(trend)};
}

SegmentMatrix segment(const Recording& rec, std::span<const SampleIndex> peaks) {
    SegmentMatrix m;
    m.geometry = SegmentGeometry::from(rec.fs, rec.f_sti);
    const auto n = static_cast<SampleIndex>(rec.size());
    const int p = m.geometry.p;
    for (SampleIndex pk : peaks) {
        const SampleIndex s = pk - m.geometry.pre;
        if (s < 0 || s + p > n) {
            ++m.dropped;
            continue;
        }
        m.peaks.push_back(pk);
    }
    m.data.resize(p, static_cast<Eigen::Index>(m.peaks.size()));
    for (std::size_t j = 0; j < m.peaks.size(); ++j) {
        const auto s = static_cast<std::size_t>(m.peaks[j] - m.geometry.pre);
        for (int r = 0; r < p; ++r) m.data(r, static_cast<Eigen::Index>(j)) = rec.samples[s + static_cast<std::size_t>(r)];
    }
    return m;
}

Recording notch_line_noise(const Recording& rec, const NotchParams& params) {
    const auto comb = dsp::notch_comb(params.base_hz, params.max_hz, params.q, rec.fs);
    return rec.with_samples(dsp::filtfilt(comb, rec.samples));
}

Prepared prepare(const Recording& rec, const PrepareParams& params) {
    Prepared out;
    out.notched = params.apply_notch ? notch_line_noise(rec, params.notch) : rec;
    out.peaks = detect_peaks(out.notched, params.peaks);
    out.periods = identify_stim_periods(out.peaks, rec.fs, rec.f_sti, rec.size());
    if (params.remove_dc) {
        out.dc = remove_dc_transient(out.notched, out.periods, params.detrend);
    } else {
        out.dc = {out.notched, std::vector<double>(rec.size(), 0.0)};
    }
    out.segments = segment(out.dc.detrended, out.peaks);
    return out;
}

}  // namespace stimclean::preprocess
