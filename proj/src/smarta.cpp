#include "stimclean/smarta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "stimclean/dsp.hpp"
#include "stimclean/log.hpp"
#include "stimclean/parallel.hpp"
#include "stimclean/preprocess.hpp"
#include "stimclean/shrink.hpp"

namespace stimclean::smarta {

namespace {

// Median and 95th percentile of |z - median(z)|.
std::pair<double, double> spread(std::span<const double> z) {
    const double med = dsp::median(z);
    std::vector<double> dev(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) dev[i] = std::abs(z[i] - med);
    return {dsp::median(dev), dsp::percentile(dev, 95.0)};
}

}  // namespace

double ar_index(std::span<const double> zhat, std::span<const double> z, bool* clamped) {
    if (zhat.empty() || z.empty()) throw ValidationError("ar_index: empty window");
    auto [a, c] = spread(zhat);
    auto [b, d] = spread(z);
    bool clamp = false;
    for (double* v : {&a, &b, &c, &d}) {
        if (*v < kArEpsilon) {
            *v = kArEpsilon;
            clamp = true;
        }
    }
    if (clamped) *clamped = clamp;
    return std::abs(std::log(0.5 * (a / b + b / a)) * 0.5 * (c / d + d / c));
}

ArWindows ArWindows::from(double fs, double t1_ms, double t2_ms) {
    return {ms_to_samples(t1_ms, fs), ms_to_samples(t2_ms, fs)};
}

std::vector<int> default_k_grid() { return {10, 20, 30, 40, 50, 60, 70, 80, 90, 100}; }

namespace {

// Same arithmetic as dsp::median on an already sorted range.
double sorted_median(const double* v, int n) {
    const int lo = (n - 1) / 2;
    if (n % 2 == 1) return v[lo];
    return v[lo] + 0.5 * (v[lo + 1] - v[lo]);
}

}  // namespace

TemplateResult derive_template(const Eigen::VectorXd& x, std::span<const std::uint32_t> ranked,
                               const Eigen::MatrixXd& D, std::span<const int> K_grid, const ArWindows& win) {
    const Eigen::Index p = x.size();
    TemplateResult res;
    if (ranked.empty() || K_grid.empty()) {
        res.tmpl = Eigen::VectorXd::Zero(p);
        res.failed = true;
        return res;
    }
    if (D.rows() != p) throw ValidationError("derive_template: segment length mismatch");
    const int head = std::clamp(win.head, 1, static_cast<int>(p));
    const int tail = std::clamp(win.tail, 1, static_cast<int>(p));

    const int k_max = static_cast<int>(std::min<std::size_t>(ranked.size(),
                                                             static_cast<std::size_t>(*std::max_element(K_grid.begin(), K_grid.end()))));
    // Neighbor values row-major so each row's median works on contiguous memory.
    std::vector<double> nb(static_cast<std::size_t>(p * k_max));
    for (int k = 0; k < k_max; ++k)
        for (Eigen::Index r = 0; r < p; ++r) nb[static_cast<std::size_t>(r * k_max + k)] = D(r, ranked[static_cast<std::size_t>(k)]);

    // Insertion into a sorted prefix yields the median for every K in one pass per row.
    const auto n_k = K_grid.size();
    std::vector<int> kk(n_k);
    for (std::size_t g = 0; g < n_k; ++g) kk[g] = std::clamp(K_grid[g], 1, k_max);
    Eigen::MatrixXd tmpls(p, static_cast<Eigen::Index>(n_k));
    std::vector<double> sorted(static_cast<std::size_t>(k_max));
    for (Eigen::Index r = 0; r < p; ++r) {
        const double* row = nb.data() + r * k_max;
        for (int k = 0; k < k_max; ++k) {
            auto pos = std::upper_bound(sorted.begin(), sorted.begin() + k, row[k]);
            std::move_backward(pos, sorted.begin() + k, sorted.begin() + k + 1);
            *pos = row[k];
            for (std::size_t g = 0; g < n_k; ++g)
                if (kk[g] == k + 1) tmpls(r, static_cast<Eigen::Index>(g)) = sorted_median(sorted.data(), k + 1);
        }
    }

    Eigen::VectorXd resid(p);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < n_k; ++g) {
        resid = x - tmpls.col(static_cast<Eigen::Index>(g));
        const std::span<const double> rs(resid.data(), static_cast<std::size_t>(p));
        const double ar = ar_index(rs.first(static_cast<std::size_t>(head)), rs.last(static_cast<std::size_t>(tail)));
        res.ar_curve.push_back(ar);
        if (ar < best) {
            best = ar;
            res.K_opt = K_grid[g];
            res.tmpl = tmpls.col(static_cast<Eigen::Index>(g));
        }
    }
    if (!std::isfinite(best)) {
        res.tmpl = Eigen::VectorXd::Zero(p);
        res.K_opt = K_grid.front();
        res.failed = true;
    }
    return res;
}

std::vector<double> window(int p, int g1, int g2) {
    if (g1 < 0 || g2 < 0 || g1 + g2 >= p) throw ValidationError("window: need g1, g2 >= 0 and g1 + g2 < p");
    const double pi = std::acos(-1.0);
    std::vector<double> w(static_cast<std::size_t>(p), 1.0);
    for (int t = 1; t <= g1; ++t) {
        const double s = std::sin(pi * (t - 1) / (2.0 * g1));
        w[static_cast<std::size_t>(t - 1)] = s * s;
    }
    for (int tp = 1; tp <= g2; ++tp) {
        const double s = std::sin(pi * (tp - 1) / (2.0 * g2));
        w[static_cast<std::size_t>(p - g2 + tp - 1)] = 1.0 - s * s;
    }
    return w;
}

std::vector<std::pair<int, int>> overlaps(std::span<const SampleIndex> starts, int p) {
    std::vector<std::pair<int, int>> g(starts.size(), {0, 0});
    for (std::size_t i = 1; i < starts.size(); ++i) {
        const SampleIndex ov = starts[i - 1] + p - starts[i];
        if (ov > 0) {
            const int v = static_cast<int>(std::min<SampleIndex>(ov, p));
            g[i - 1].second = v;
            g[i].first = v;
        }
    }
    return g;
}

std::vector<double> overlap_add(const Eigen::MatrixXd& templates, std::span<const SampleIndex> starts, std::size_t n) {
    const int p = static_cast<int>(templates.rows());
    if (static_cast<std::size_t>(templates.cols()) != starts.size())
        throw ValidationError("overlap_add: template count does not match start count");
    std::vector<double> track(n, 0.0);
    const auto g = overlaps(starts, p);
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const auto w = window(p, g[i].first, g[i].second);
        for (int t = 0; t < p; ++t) {
            const SampleIndex s = starts[i] + t;
            if (s < 0 || s >= static_cast<SampleIndex>(n)) continue;
            track[static_cast<std::size_t>(s)] += w[static_cast<std::size_t>(t)] * templates(t, static_cast<Eigen::Index>(i));
        }
    }
    return track;
}

double CleanReport::mean_micros() const {
    if (segments.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : segments) s += r.micros_elapsed;
    return s / static_cast<double>(segments.size());
}

std::string CleanReport::to_json(bool include_timing) const {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["recording_id"] = recording_id;
    j["stimulation_found"] = stimulation_found;
    j["selected_recordings"] = selected_recordings;
    j["pool_size"] = pool_size;
    j["dropped_peaks"] = dropped_peaks;
    j["n_segments"] = segments.size();
    if (include_timing) j["mean_micros_per_segment"] = mean_micros();
    auto& arr = j["segments"] = nlohmann::ordered_json::array();
    for (const auto& s : segments) {
        nlohmann::ordered_json e;
        e["peak_sample"] = s.peak_sample;
        e["K_opt"] = s.K_opt;
        e["ar"] = s.ar;
        if (include_timing) e["micros_elapsed"] = s.micros_elapsed;
        if (s.failed) e["failed"] = true;
        arr.push_back(std::move(e));
    }
    return j.dump(1);
}

namespace {

using Clock = std::chrono::steady_clock;

CleanResult no_stimulation(const Recording& rec, const std::string& method) {
    CleanResult out;
    out.trend = preprocess::estimate_trend(rec.samples, rec.fs, StimPeriods{});
    std::vector<double> y(rec.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rec.samples[i] - out.trend[i];
    out.lfp = rec.with_samples(std::move(y));
    out.artifact.assign(rec.size(), 0.0);
    out.report.method = method;
    out.report.recording_id = rec.id;
    out.report.stimulation_found = false;
    return out;
}

// Per-segment template search shared by both modes. `query(i, scratch)` returns the
// ranked neighbors of segment i.
template <class Query>
Eigen::MatrixXd derive_all(const Eigen::MatrixXd& X, const Eigen::MatrixXd& poolD, const CleanParams& params,
                           const ArWindows& win, std::vector<SegmentReport>& reports, Query&& query) {
    const Eigen::Index n = X.cols();
    Eigen::MatrixXd templates(X.rows(), n);
    // Contiguous chunks, one query scratch each.
    const auto chunks = static_cast<std::size_t>(std::max(1, default_threads()));
    const auto per = (static_cast<std::size_t>(n) + chunks - 1) / chunks;
    parallel_for(chunks, [&](std::size_t c) {
        ann::QueryScratch scratch;
        const std::size_t end = std::min(static_cast<std::size_t>(n), (c + 1) * per);
        for (std::size_t i = c * per; i < end; ++i) {
            const auto t0 = Clock::now();
            const auto ranked = query(static_cast<Eigen::Index>(i), scratch);
            const TemplateResult tr =
                derive_template(X.col(static_cast<Eigen::Index>(i)), ranked, poolD, params.K_grid, win);
            const auto t1 = Clock::now();
            templates.col(static_cast<Eigen::Index>(i)) = tr.tmpl;
            SegmentReport& r = reports[i];
            r.K_opt = tr.K_opt;
            r.ar = tr.ar_curve.empty() ? 0.0 : *std::min_element(tr.ar_curve.begin(), tr.ar_curve.end());
            r.failed = tr.failed;
            if (params.timing) r.micros_elapsed = std::chrono::duration<double, std::micro>(t1 - t0).count();
        }
    });
    return templates;
}

}  // namespace

CleanResult clean_recording(const Recording& rec, const library::ArtifactLibrary& lib, const CleanParams& params) {
    rec.validate();
    preprocess::Prepared prep;
    try {
        prep = preprocess::prepare(rec, params.build.prepare);
    } catch (const preprocess::NoStimulationError& e) {
        log_warn(e.what());
        return no_stimulation(rec, "smarta+");
    }
    library::BuildParams target_params = params.build;
    target_params.min_segments = 1;
    const library::RecordingEntry target = library::make_entry(rec, prep, target_params);

    library::ArtifactLibrary usable;
    for (const auto& e : lib.entries) {
        if (std::find(params.exclude_ids.begin(), params.exclude_ids.end(), e.id) != params.exclude_ids.end()) continue;
        if (e.id == target.id) continue;
        if (e.fs != rec.fs || e.f_sti != rec.f_sti || e.p() != target.p()) {
            log_warn("skipping library entry '" + e.id + "': incompatible fs, f_sti or segment length");
            continue;
        }
        usable.entries.push_back(e);
    }
    std::vector<const library::RecordingEntry*> all{&target};
    for (const auto& e : usable.entries) all.push_back(&e);
    library::FeatureSelection features;
    if (all.size() >= 2) {
        features = library::select_features(all);
    } else {
        features.selected_idx.resize(static_cast<std::size_t>(target.q()));
        std::iota(features.selected_idx.begin(), features.selected_idx.end(), 0);
    }

    CleanResult out;
    out.report.method = "smarta+";
    out.report.recording_id = rec.id;
    out.report.dropped_peaks = prep.segments.dropped;
    std::vector<std::size_t> chosen;
    if (!usable.entries.empty()) {
        chosen = library::select_recordings(usable, target, features, params.Q);
        if (chosen.empty()) log_warn("no library recording within the amplitude tolerance of '" + rec.id + "'");
    }

    std::vector<const library::RecordingEntry*> members{&target};
    for (std::size_t m : chosen) {
        members.push_back(&usable.entries[m]);
        out.report.selected_recordings.push_back(usable.entries[m].id);
    }
    Eigen::Index total = 0;
    for (const auto* e : members) total += e->n();
    const auto q_sel = static_cast<Eigen::Index>(features.selected_idx.size());
    Eigen::MatrixXd poolW(q_sel, total), poolD(target.p(), total);
    Eigen::Index col = 0;
    for (const auto* e : members) {
        poolW.middleCols(col, e->n()) = library::select_rows(e->W, features.selected_idx);
        poolD.middleCols(col, e->n()) = e->D;
        col += e->n();
    }
    out.report.pool_size = static_cast<std::size_t>(total);

    const ArWindows win = ArWindows::from(rec.fs, params.t1_ms, params.t2_ms);
    const std::size_t k_max = static_cast<std::size_t>(*std::max_element(params.K_grid.begin(), params.K_grid.end()));
    const Eigen::MatrixXd queries = poolW.leftCols(target.n());
    std::optional<ann::ProjectionForest> forest;
    if (total >= 2) forest = ann::ProjectionForest::build(poolW, params.forest);

    out.report.segments.resize(static_cast<std::size_t>(target.n()));
    const Eigen::MatrixXd templates =
        derive_all(target.X, poolD, params, win, out.report.segments, [&](Eigen::Index i, ann::QueryScratch& s) {
            const std::span<const double> w(queries.col(i).data(), static_cast<std::size_t>(q_sel));
            if (!forest) return std::vector<std::uint32_t>{0};
            auto cand = forest->query_candidates(w, s);
            if (cand.empty()) return ann::knn_exhaustive(poolW.leftCols(target.n()), w, k_max);
            return ann::knn(poolW, cand, w, k_max);
        });

    std::vector<SampleIndex> starts(target.peaks.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        starts[i] = target.peaks[i] - prep.segments.geometry.pre;
        out.report.segments[i].peak_sample = target.peaks[i];
    }
    out.artifact = overlap_add(templates, starts, rec.size());

    std::vector<double> y(rec.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = prep.dc.detrended.samples[i] - out.artifact[i];
    const std::vector<double> trend2 = preprocess::estimate_trend(y, rec.fs, prep.periods, params.build.prepare.detrend);
    out.trend = prep.dc.trend;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] -= trend2[i];
        out.trend[i] += trend2[i];
    }
    out.lfp = rec.with_samples(std::move(y));
    out.periods = prep.periods;
    out.peaks = prep.peaks;
    return out;
}

CleanResult clean_recording_exact(const Recording& rec, const CleanParams& params) {
    rec.validate();
    preprocess::PrepareParams pp = params.build.prepare;
    pp.remove_dc = false;
    preprocess::Prepared prep;
    try {
        prep = preprocess::prepare(rec, pp);
    } catch (const preprocess::NoStimulationError& e) {
        log_warn(e.what());
        return no_stimulation(rec, "smarta");
    }
    const SegmentMatrix& seg = prep.segments;
    Eigen::MatrixXd D;
    if (seg.n() < shrink::min_short_side(std::max(seg.p(), seg.n()), params.build.shrink.k)) {
        log_warn("recording '" + rec.id + "': too few segments for shrinkage, using them undenoised");
        D = seg.data;
    } else {
        D = shrink::shrink_grouped(seg.data, params.build.group, params.build.shrink);
    }

    CleanResult out;
    out.report.method = "smarta";
    out.report.recording_id = rec.id;
    out.report.dropped_peaks = seg.dropped;
    out.report.pool_size = static_cast<std::size_t>(D.cols());
    const ArWindows win = ArWindows::from(rec.fs, params.t1_ms, params.t2_ms);
    const std::size_t k_max = static_cast<std::size_t>(*std::max_element(params.K_grid.begin(), params.K_grid.end()));
    out.report.segments.resize(static_cast<std::size_t>(seg.n()));
    const Eigen::MatrixXd templates =
        derive_all(seg.data, D, params, win, out.report.segments, [&](Eigen::Index i, ann::QueryScratch&) {
            return ann::knn_exhaustive(D, std::span<const double>(D.col(i).data(), static_cast<std::size_t>(D.rows())), k_max);
        });

    std::vector<SampleIndex> starts(seg.peaks.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        starts[i] = seg.start(static_cast<Eigen::Index>(i));
        out.report.segments[i].peak_sample = seg.peaks[i];
    }
    out.artifact = overlap_add(templates, starts, rec.size());
    std::vector<double> y(rec.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = prep.notched.samples[i] - out.artifact[i];
    out.lfp = rec.with_samples(std::move(y));
    out.trend.assign(rec.size(), 0.0);
    out.periods = prep.periods;
    out.peaks = prep.peaks;
    return out;
}

}  // namespace stimclean::smarta
