#include "stimclean/suite.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "stimclean/baselines.hpp"
#include "stimclean/log.hpp"
#include "stimclean/parallel.hpp"
#include "stimclean/preprocess.hpp"

namespace stimclean::suite {

using Clock = std::chrono::steady_clock;
using ojson = nlohmann::ordered_json;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t idx) {
    return ann::CounterRng::mix(ann::CounterRng::mix(seed ^ (tag << 56)) + idx);
}

double unit_from(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void apply_clean_keys(const KeyValues& kv, smarta::CleanParams& c) {
    c.Q = static_cast<std::size_t>(kv.get_int("Q", static_cast<long long>(c.Q)));
    c.forest.trees = static_cast<int>(kv.get_int("trees", c.forest.trees));
    c.forest.leaf_capacity = static_cast<int>(kv.get_int("leaf_capacity", c.forest.leaf_capacity));
    c.build.group = kv.get_int("group", c.build.group);
    c.build.shrink.k = static_cast<int>(kv.get_int("shrink_k", c.build.shrink.k));
}

}  // namespace

SuiteConfig SuiteConfig::from(const KeyValues& kv) {
    SuiteConfig c;
    c.recordings = static_cast<int>(kv.get_int("recordings", c.recordings));
    c.duration_s = kv.get_double("duration_s", c.duration_s);
    c.fs = kv.get_double("fs", c.fs);
    c.f_sti = kv.get_double("f_sti", c.f_sti);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    c.gain_spread = kv.get_double("gain_spread", c.gain_spread);
    c.semireal_K = static_cast<std::size_t>(kv.get_int("semireal_K", static_cast<long long>(c.semireal_K)));
    c.k_hist = static_cast<int>(kv.get_int("k_hist", c.k_hist));
    c.onset_window_s = kv.get_double("onset_window_s", c.onset_window_s);
    c.baseline_fraction = kv.get_double("baseline_fraction", c.baseline_fraction);
    apply_clean_keys(kv, c.clean);
    c.lfp = synth::lfp_spec_from(kv, c.lfp);
    c.artifact = synth::artifact_model_from(kv, c.artifact);
    return c;
}

std::vector<std::pair<std::string, double>> metric_fields(const MethodMetrics& m) {
    std::vector<std::pair<std::string, double>> f{{"ar", m.ar}, {"sc", m.sc}, {"nmse", m.nmse}};
    const auto bands = eval::standard_bands();
    for (std::size_t b = 0; b < m.band_nmse.size() && b < bands.size(); ++b)
        f.emplace_back("nmse_" + bands[b].name, m.band_nmse[b]);
    f.insert(f.end(), {{"recall", m.recall},
                       {"precision", m.precision},
                       {"f1", m.f1},
                       {"deviation_ms", m.deviation_ms},
                       {"or1", m.or1},
                       {"or2", m.or2},
                       {"tp", m.tp},
                       {"fn", m.fn},
                       {"fp", m.fp},
                       {"recall_onset", m.recall_onset},
                       {"precision_onset", m.precision_onset},
                       {"f1_onset", m.f1_onset},
                       {"micros_per_segment", m.micros_per_segment}});
    return f;
}

Truth make_truth(const Recording& base, const adbs::BetaConfig& beta, std::span<const double> stim_onsets) {
    Truth t;
    t.base = &base;
    for (const auto& band : eval::standard_bands()) t.base_bands.push_back(eval::band_filter(base.samples, band, base.fs));
    const auto amp = adbs::beta_amplitude(base.samples, base.fs, beta);
    t.peak_hz = amp.peak_hz;
    t.threshold = adbs::threshold_from(amp.amplitude, beta.threshold_percentile);
    t.events = adbs::detect_beta_events(amp.amplitude, t.threshold, base.fs, beta.min_on_ms);
    t.stim_onsets.assign(stim_onsets.begin(), stim_onsets.end());
    return t;
}

MethodMetrics evaluate(const Recording& estimate, const Truth& truth, std::span<const SampleIndex> peaks,
                       const adbs::BetaConfig& beta, const eval::ScGrid& grid, const std::vector<SampleInterval>* mask,
                       double onset_window_s) {
    MethodMetrics m;
    m.ar = eval::signal_ar(estimate, peaks);
    m.sc = eval::mean_spectral_concentration(estimate.samples, estimate.fs, grid);
    m.nmse = eval::nmse(estimate.samples, truth.base->samples);
    const auto bands = eval::standard_bands();
    for (std::size_t b = 0; b < bands.size(); ++b)
        m.band_nmse.push_back(eval::nmse(eval::band_filter(estimate.samples, bands[b], estimate.fs), truth.base_bands[b]));

    auto amp = adbs::beta_amplitude(estimate.samples, estimate.fs, beta, truth.peak_hz).amplitude;
    if (mask) {
        for (const auto& iv : *mask)
            std::fill(amp.begin() + iv.start, amp.begin() + std::min<SampleIndex>(iv.end, static_cast<SampleIndex>(amp.size())), 0.0);
    }
    const EventList detected = adbs::detect_beta_events(amp, truth.threshold, estimate.fs, beta.min_on_ms);
    const eval::MatchResult all = eval::match_events(detected, truth.events);
    m.recall = all.recall;
    m.precision = all.precision;
    m.f1 = all.f1;
    m.tp = all.tp;
    m.fn = all.fn;
    m.fp = all.fp;
    m.deviation_ms = 1000.0 * all.mean_deviation();
    for (const auto& d : all.details) {
        m.or1 += d.or1 / static_cast<double>(all.details.size());
        m.or2 += d.or2 / static_cast<double>(all.details.size());
    }
    const eval::MatchResult on = eval::match_events_onset(detected, truth.events, truth.stim_onsets, onset_window_s);
    m.recall_onset = on.recall;
    m.precision_onset = on.precision;
    m.f1_onset = on.f1;
    return m;
}

SuiteReport run_suite(const SuiteConfig& cfg) {
    if (cfg.recordings < 1) throw ValidationError("suite needs at least one recording");
    if (!(cfg.duration_s > 0.0)) throw ValidationError("suite duration must be positive");
    const auto M = static_cast<std::size_t>(cfg.recordings);
    SuiteReport report;

    // Closed-loop source recordings.
    std::vector<adbs::SimResult> sims(M);
    for (std::size_t m = 0; m < M; ++m) {
        Recording base = synth::gen_lfp(cfg.duration_s, cfg.fs, cfg.lfp, derive_seed(cfg.seed, 1, m)).rec;
        base.f_sti = cfg.f_sti;
        base.id = "adbs-" + std::to_string(m);
        synth::ArtifactModel model = cfg.artifact;
        model.gain = cfg.artifact.gain * (1.0 + cfg.gain_spread * (2.0 * unit_from(derive_seed(cfg.seed, 2, m)) - 1.0));
        model.mod_phase = 2.0 * std::numbers::pi * unit_from(derive_seed(cfg.seed, 3, m));
        model.seed = derive_seed(cfg.seed, 4, m);
        adbs::SimParams sp;
        sp.baseline_fraction = cfg.baseline_fraction;
        sims[m] = adbs::simulate_adbs(base, model, cfg.beta, sp);
        sims[m].rec.amplitude = model.gain;
        log_info("source " + base.id + ": on-fraction " + std::to_string(sims[m].on_fraction()) + ", " +
                 std::to_string(sims[m].schedule.events.size()) + " periods");
    }

    std::vector<Recording> sources;
    for (const auto& s : sims) sources.push_back(s.rec);
    library::BuildReport br;
    const library::ArtifactLibrary lib = library::build_library(sources, cfg.clean.build, &br);
    report.rejected = br.rejected;
    log_info("library: " + std::to_string(lib.entries.size()) + " entries, " +
             std::to_string(lib.features.selected_idx.size()) + " features");

    for (std::size_t m = 0; m < M; ++m) {
        if (!lib.find(sims[m].rec.id)) continue;
        Recording base = synth::gen_lfp(cfg.duration_s, cfg.fs, cfg.lfp, derive_seed(cfg.seed, 5, m)).rec;
        base.f_sti = cfg.f_sti;
        base.id = "base-" + std::to_string(m);
        synth::SemiRealParams srp;
        srp.K = cfg.semireal_K;
        srp.forest = cfg.clean.forest;
        srp.prepare = cfg.clean.build.prepare;
        const synth::SemiReal sr = synth::make_semireal(sims[m].rec, lib, base, srp);

        std::vector<double> onsets;
        for (const auto& e : sims[m].schedule.events) onsets.push_back(e.onset);
        const Truth truth = make_truth(sr.base, cfg.beta, onsets);

        const Recording& raw = sr.rec;
        const auto peaks = preprocess::detect_peaks(raw, cfg.clean.build.prepare.peaks);
        const auto periods = preprocess::identify_stim_periods(peaks, raw.fs, raw.f_sti, raw.size());

        RecordingResult rr;
        rr.id = raw.id;
        rr.on_fraction = sims[m].on_fraction();
        rr.n_periods = periods.periods.size();
        rr.n_segments = peaks.size();
        rr.truth_events = truth.events.events.size();

        auto eval_one = [&](const std::string& name, const Recording& est, double micros,
                            const std::vector<SampleInterval>* mask = nullptr) {
            MethodMetrics mm = evaluate(est, truth, peaks, cfg.beta, cfg.sc_grid, mask, cfg.onset_window_s);
            mm.micros_per_segment = micros;
            rr.methods[name] = std::move(mm);
        };
        const double per_seg = 1e6 / static_cast<double>(std::max<std::size_t>(1, peaks.size()));

        eval_one("raw", raw, 0.0);
        {
            smarta::CleanParams cp = cfg.clean;
            cp.exclude_ids.push_back(sims[m].rec.id);
            const auto res = smarta::clean_recording(raw, lib, cp);
            eval_one("smarta+", res.lfp, res.report.mean_micros());
        }
        {
            const auto res = smarta::clean_recording_exact(raw, cfg.clean);
            eval_one("smarta", res.lfp, res.report.mean_micros());
        }
        {
            const auto t0 = Clock::now();
            const Recording out = baselines::template_subtraction(raw, peaks, cfg.k_hist);
            eval_one("ts", out, seconds_since(t0) * per_seg);
        }
        {
            const auto t0 = Clock::now();
            const Recording out = baselines::pulse_blanking(raw, peaks);
            eval_one("pulse-blank", out, seconds_since(t0) * per_seg);
        }
        {
            const auto t0 = Clock::now();
            const baselines::Blanked out = baselines::transient_blanking(raw, periods);
            eval_one("transient-blank", out.lfp, seconds_since(t0) * per_seg, &out.mask);
        }
        log_info("evaluated " + rr.id + ": nmse raw " + std::to_string(rr.methods["raw"].nmse) + " dB, smarta+ " +
                 std::to_string(rr.methods["smarta+"].nmse) + " dB");
        report.recordings.push_back(std::move(rr));
    }
    if (report.recordings.empty()) throw ValidationError("no recording survived library construction");

    for (const auto& name : method_names()) {
        std::map<std::string, std::vector<double>> values;
        std::vector<std::string> order;
        for (const auto& rr : report.recordings) {
            for (const auto& [k, v] : metric_fields(rr.methods.at(name))) values[k].push_back(v);
        }
        for (const auto& [k, vs] : values) {
            double mean = 0.0;
            for (double v : vs) mean += v;
            mean /= static_cast<double>(vs.size());
            double var = 0.0;
            for (double v : vs) var += (v - mean) * (v - mean);
            report.mean[name][k] = mean;
            report.stdev[name][k] = vs.size() > 1 ? std::sqrt(var / static_cast<double>(vs.size() - 1)) : 0.0;
        }
    }
    return report;
}

std::string SuiteReport::to_json(bool include_timing) const {
    auto metrics_json = [&](const std::vector<std::pair<std::string, double>>& fields) {
        ojson j;
        for (const auto& [k, v] : fields) {
            if (!include_timing && k == "micros_per_segment") continue;
            j[k] = v;
        }
        return j;
    };
    ojson root;
    root["methods"] = method_names();
    auto& recs = root["recordings"] = ojson::array();
    for (const auto& rr : recordings) {
        ojson r;
        r["id"] = rr.id;
        r["on_fraction"] = rr.on_fraction;
        r["n_periods"] = rr.n_periods;
        r["n_segments"] = rr.n_segments;
        r["truth_events"] = rr.truth_events;
        for (const auto& name : method_names()) r["methods"][name] = metrics_json(metric_fields(rr.methods.at(name)));
        recs.push_back(std::move(r));
    }
    for (const auto& name : method_names()) {
        std::vector<std::pair<std::string, double>> mf(mean.at(name).begin(), mean.at(name).end());
        std::vector<std::pair<std::string, double>> sf(stdev.at(name).begin(), stdev.at(name).end());
        root["summary"][name]["mean"] = metrics_json(mf);
        root["summary"][name]["std"] = metrics_json(sf);
    }
    root["rejected"] = rejected;
    return root.dump(1);
}

std::uint64_t SuiteReport::hash() const {
    const std::string text = to_json(false);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

BenchConfig BenchConfig::from(const KeyValues& kv) {
    BenchConfig c;
    c.pool_target = static_cast<std::size_t>(kv.get_int("pool_target", static_cast<long long>(c.pool_target)));
    c.recording_s = kv.get_double("recording_s", c.recording_s);
    c.target_s = kv.get_double("target_s", c.target_s);
    c.exact_segments = static_cast<std::size_t>(kv.get_int("exact_segments", static_cast<long long>(c.exact_segments)));
    c.fs = kv.get_double("fs", c.fs);
    c.f_sti = kv.get_double("f_sti", c.f_sti);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    apply_clean_keys(kv, c.clean);
    c.lfp = synth::lfp_spec_from(kv, c.lfp);
    c.artifact = synth::artifact_model_from(kv, c.artifact);
    return c;
}

namespace {

Timing summarize(const std::vector<double>& ms) {
    Timing t;
    t.count = ms.size();
    if (ms.empty()) return t;
    for (double v : ms) t.mean_ms += v;
    t.mean_ms /= static_cast<double>(ms.size());
    for (double v : ms) t.std_ms += (v - t.mean_ms) * (v - t.mean_ms);
    t.std_ms = ms.size() > 1 ? std::sqrt(t.std_ms / static_cast<double>(ms.size() - 1)) : 0.0;
    return t;
}

Recording continuous_recording(const BenchConfig& cfg, double duration, std::uint64_t seed, double gain,
                               const std::string& id) {
    Recording rec = synth::gen_lfp(duration, cfg.fs, cfg.lfp, seed).rec;
    synth::ArtifactModel model = cfg.artifact;
    model.gain = gain;
    model.seed = seed ^ 0x5bd1e995ULL;
    EventList schedule{{{0.5, duration - 0.5}}};
    const auto art = synth::gen_artifact_track(schedule, model, cfg.fs, rec.size());
    for (std::size_t i = 0; i < rec.size(); ++i) rec.samples[i] += art[i];
    rec.f_sti = cfg.f_sti;
    rec.amplitude = gain;
    rec.id = id;
    rec.stim_schedule = schedule.events;
    return rec;
}

}  // namespace

BenchReport run_benchmark(const BenchConfig& cfg) {
    const auto start = Clock::now();
    BenchReport rep;
    if (!(cfg.recording_s > 2.0) || !(cfg.target_s > 2.0)) throw ValidationError("bench recordings must exceed 2 s");
    const double per_rec = (cfg.recording_s - 1.5) * cfg.artifact.pulse_hz;
    const auto n_rec = static_cast<std::size_t>(std::ceil(static_cast<double>(cfg.pool_target) / per_rec));

    std::vector<Recording> recs(n_rec);
    parallel_for(n_rec, [&](std::size_t i) {
        const double gain = 1.0 + 0.03 * (2.0 * unit_from(derive_seed(cfg.seed, 6, i)) - 1.0);
        recs[i] = continuous_recording(cfg, cfg.recording_s, derive_seed(cfg.seed, 7, i), gain, "bench-" + std::to_string(i));
    });
    const library::ArtifactLibrary lib = library::build_library(recs, cfg.clean.build);
    recs.clear();
    const Recording target = continuous_recording(cfg, cfg.target_s, derive_seed(cfg.seed, 8, 0), 1.0, "bench-target");

    smarta::CleanParams cp = cfg.clean;
    cp.Q = lib.entries.size();
    cp.timing = true;
    auto t0 = Clock::now();
    const auto res = smarta::clean_recording(target, lib, cp);
    rep.recording_seconds = seconds_since(t0);
    rep.pool_size = res.report.pool_size;
    std::vector<double> ann_ms;
    for (const auto& s : res.report.segments) ann_ms.push_back(s.micros_elapsed / 1000.0);
    rep.ann = summarize(ann_ms);

    // Exhaustive time-domain search over the same pool.
    const library::RecordingEntry tgt = library::build_entry(target, cfg.clean.build);
    Eigen::Index total = tgt.n();
    for (const auto& e : lib.entries) total += e.n();
    Eigen::MatrixXd poolD(tgt.p(), total);
    Eigen::Index col = 0;
    poolD.middleCols(col, tgt.n()) = tgt.D;
    col += tgt.n();
    for (const auto& e : lib.entries) {
        poolD.middleCols(col, e.n()) = e.D;
        col += e.n();
    }
    const auto win = smarta::ArWindows::from(target.fs, cp.t1_ms, cp.t2_ms);
    const std::size_t k_max = static_cast<std::size_t>(*std::max_element(cp.K_grid.begin(), cp.K_grid.end()));
    const std::size_t n_exact = std::min<std::size_t>(cfg.exact_segments, static_cast<std::size_t>(tgt.n()));
    std::vector<double> exact_ms;
    for (std::size_t i = 0; i < n_exact; ++i) {
        const auto i_col = static_cast<Eigen::Index>(i);
        t0 = Clock::now();
        const auto nn = ann::knn_exhaustive(poolD, std::span<const double>(tgt.D.col(i_col).data(), static_cast<std::size_t>(tgt.p())), k_max);
        const auto tr = smarta::derive_template(tgt.X.col(i_col), nn, poolD, cp.K_grid, win);
        exact_ms.push_back(seconds_since(t0) * 1000.0);
        if (tr.failed) log_warn("exact template failed for bench segment " + std::to_string(i));
    }
    rep.exact = summarize(exact_ms);
    rep.speedup = rep.ann.mean_ms > 0.0 ? rep.exact.mean_ms / rep.ann.mean_ms : 0.0;

    const auto peaks = preprocess::detect_peaks(target);
    t0 = Clock::now();
    const Recording ts = baselines::template_subtraction(target, peaks);
    rep.template_subtraction.mean_ms = seconds_since(t0) * 1000.0 / static_cast<double>(std::max<std::size_t>(1, peaks.size()));
    rep.template_subtraction.count = peaks.size();

    rep.realtime_budget_ms = 1000.0 / cfg.f_sti;
    rep.machine = std::to_string(std::thread::hardware_concurrency()) + " hardware threads, " +
                  std::to_string(default_threads()) + " worker(s), compiler " + __VERSION__;
    rep.total_seconds = seconds_since(start);
    return rep;
}

std::string BenchReport::to_json() const {
    auto timing = [](const Timing& t) {
        ojson j;
        j["mean_ms"] = t.mean_ms;
        j["std_ms"] = t.std_ms;
        j["count"] = t.count;
        return j;
    };
    ojson j;
    j["pool_size"] = pool_size;
    j["smarta+"] = timing(ann);
    j["smarta_exact"] = timing(exact);
    j["ts"] = timing(template_subtraction);
    j["exact_over_ann"] = speedup;
    j["smarta+_recording_seconds"] = recording_seconds;
    j["realtime_budget_ms"] = realtime_budget_ms;
    j["total_seconds"] = total_seconds;
    j["machine"] = machine;
    return j.dump(1);
}

}  // namespace stimclean::suite
