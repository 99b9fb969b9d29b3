#include "stimclean/baselines.hpp"

#include <algorithm>

#include "stimclean/preprocess.hpp"
#include "stimclean/smarta.hpp"

namespace stimclean::baselines {

Recording template_subtraction(const Recording& rec, std::span<const SampleIndex> peaks, int k_hist) {
    if (k_hist < 1) throw ValidationError("template_subtraction: k_hist must be >= 1");
    const SegmentMatrix seg = preprocess::segment(rec, peaks);
    const Eigen::Index n = seg.n();
    Eigen::MatrixXd templates = Eigen::MatrixXd::Zero(seg.p(), n);
    Eigen::VectorXd running = Eigen::VectorXd::Zero(seg.p());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index used = std::min<Eigen::Index>(i, k_hist);
        if (used > 0) templates.col(i) = running / static_cast<double>(used);
        running += seg.data.col(i);
        if (i >= k_hist) running -= seg.data.col(i - k_hist);
    }
    std::vector<SampleIndex> starts(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) starts[static_cast<std::size_t>(i)] = seg.start(i);
    const auto track = smarta::overlap_add(templates, starts, rec.size());
    std::vector<double> y(rec.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rec.samples[i] - track[i];
    return rec.with_samples(std::move(y));
}

Recording pulse_blanking(const Recording& rec, std::span<const SampleIndex> peaks, double blank_ms, double pre_ms) {
    std::vector<double> y = rec.samples;
    const auto n = static_cast<SampleIndex>(y.size());
    const int pre = ms_to_samples(pre_ms, rec.fs);
    const int width = ms_to_samples(blank_ms, rec.fs);
    for (SampleIndex pk : peaks) {
        const SampleIndex s = std::clamp<SampleIndex>(pk - pre, 0, n);
        const SampleIndex e = std::clamp<SampleIndex>(pk - pre + width, 0, n);
        if (e <= s) continue;
        const bool has_left = s > 0, has_right = e < n;
        double left = 0.0, right = 0.0;
        if (has_left) left = y[static_cast<std::size_t>(s - 1)];
        if (has_right) right = y[static_cast<std::size_t>(e)];
        if (!has_left) left = right;
        if (!has_right) right = left;
        // Line through (s-1, left) and (e, right).
        const double span = static_cast<double>(e - s + 1);
        for (SampleIndex i = s; i < e; ++i) {
            const double f = static_cast<double>(i - s + 1) / span;
            y[static_cast<std::size_t>(i)] = left + f * (right - left);
        }
    }
    return rec.with_samples(std::move(y));
}

SampleIndex Blanked::masked_samples() const {
    SampleIndex total = 0;
    for (const auto& m : mask) total += m.length();
    return total;
}

Blanked transient_blanking(const Recording& rec, const StimPeriods& periods, double blank_ms) {
    Blanked out;
    std::vector<double> y = rec.samples;
    const auto n = static_cast<SampleIndex>(y.size());
    const SampleIndex width = ms_to_samples(blank_ms, rec.fs);
    for (const auto& p : periods.periods) {
        const SampleIndex s = std::clamp<SampleIndex>(p.start, 0, n);
        const SampleIndex e = std::clamp<SampleIndex>(std::min(p.end, p.start + width), 0, n);
        if (e <= s) continue;
        std::fill(y.begin() + s, y.begin() + e, 0.0);
        out.mask.push_back({s, e});
    }
    out.lfp = rec.with_samples(std::move(y));
    return out;
}

}  // namespace stimclean::baselines
