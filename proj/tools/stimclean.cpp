// stimclean command-line front end.
#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stimclean/adbs.hpp"
#include "stimclean/baselines.hpp"
#include "stimclean/eval.hpp"
#include "stimclean/library.hpp"
#include "stimclean/log.hpp"
#include "stimclean/parallel.hpp"
#include "stimclean/preprocess.hpp"
#include "stimclean/smarta.hpp"
#include "stimclean/suite.hpp"
#include "stimclean/synth.hpp"

namespace fs = std::filesystem;
using namespace stimclean;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

KeyValues load_optional(const std::string& path) { return path.empty() ? KeyValues{} : KeyValues::load(path); }

Recording series(const Recording& like, std::vector<double> samples, const std::string& id) {
    Recording r = like.with_samples(std::move(samples));
    r.id = id;
    r.stim_schedule.reset();
    return r;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
    std::string profile, out;
};

void run_synth(const SynthArgs& a, std::uint64_t seed) {
    const KeyValues kv = load_optional(a.profile);
    const double duration = kv.get_double("duration_s", 120.0);
    const double fs = kv.get_double("fs", 22000.0);
    const double f_sti = kv.get_double("f_sti", 130.0);
    const std::string mode = kv.get_string("mode", "adbs");
    const std::string id = kv.get_string("id", "synth");
    const auto spec = synth::lfp_spec_from(kv);
    auto model = synth::artifact_model_from(kv);
    if (!kv.has("artifact.seed")) model.seed = seed + 1;

    synth::LfpResult lfp = synth::gen_lfp(duration, fs, spec, seed);
    lfp.rec.f_sti = f_sti;
    lfp.rec.id = id;
    Recording rec;
    std::vector<double> artifact;
    EventList schedule;
    if (mode == "adbs") {
        const auto sim = adbs::simulate_adbs(lfp.rec, model);
        rec = sim.rec;
        artifact = sim.artifact;
        schedule = sim.schedule;
    } else if (mode == "continuous" || mode == "none") {
        if (mode == "continuous") schedule.events.push_back({0.5, duration - 0.5});
        artifact = synth::gen_artifact_track(schedule, model, fs, lfp.rec.size());
        std::vector<double> x = lfp.rec.samples;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += artifact[i];
        rec = lfp.rec.with_samples(std::move(x));
        rec.stim_schedule = schedule.events;
    } else {
        throw ValidationError("profile mode must be adbs, continuous or none");
    }
    rec.amplitude = model.gain;
    const fs::path dir(a.out);
    save_recording(rec, dir / "recording.f32");
    save_recording(series(rec, lfp.rec.samples, id + "-base"), dir / "base_lfp.f32");
    save_recording(series(rec, artifact, id + "-artifact"), dir / "artifact.f32");
    save_events(lfp.bursts, dir / "bursts.csv");
    save_events(schedule, dir / "schedule.csv");
}

// --- detect ------------------------------------------------------------------

void run_detect(const std::string& in, const std::string& out, bool notch) {
    Recording rec = load_recording(in);
    if (notch) rec = preprocess::notch_line_noise(rec);
    const auto peaks = preprocess::detect_peaks(rec);
    const auto periods = preprocess::identify_stim_periods(peaks, rec.fs, rec.f_sti, rec.size());
    std::string text = "peak_sample,peak_s\n";
    for (auto p : peaks) text += std::to_string(p) + "," + format_double(sample_to_seconds(p, rec.fs)) + "\n";
    write_text(out, text);
    EventList ev{to_time(periods.periods, rec.fs)};
    save_events(ev, fs::path(out).replace_extension(".periods.csv"));
    std::cout << peaks.size() << " peaks in " << periods.periods.size() << " stimulation periods\n";
}

// --- library -----------------------------------------------------------------

void run_library_build(const std::vector<std::string>& inputs, const std::string& out) {
    std::vector<Recording> recs;
    for (const auto& p : inputs) recs.push_back(load_recording(p));
    library::BuildReport rep;
    const auto lib = library::build_library(recs, {}, &rep);
    library::save_library(lib, out);
    std::cout << lib.entries.size() << " entries, " << lib.features.selected_idx.size() << " selected features";
    if (!rep.rejected.empty()) std::cout << ", " << rep.rejected.size() << " rejected";
    std::cout << '\n';
}

// --- clean -------------------------------------------------------------------

struct CleanArgs {
    std::string in, library, method = "smarta+", out, report;
    int k_hist = 10;
};

void run_clean(const CleanArgs& a, std::uint64_t seed) {
    const Recording rec = load_recording(a.in);
    smarta::CleanParams params;
    params.forest.seed = seed;
    Recording result;
    std::string report_text;
    if (a.method == "smarta+") {
        if (a.library.empty()) throw ValidationError("--library is required for smarta+");
        const auto lib = library::load_library(a.library);
        const auto res = smarta::clean_recording(rec, lib, params);
        result = res.lfp;
        report_text = res.report.to_json();
    } else if (a.method == "smarta") {
        const auto res = smarta::clean_recording_exact(rec, params);
        result = res.lfp;
        report_text = res.report.to_json();
    } else {
        const auto peaks = preprocess::detect_peaks(rec);
        nlohmann::ordered_json j;
        j["method"] = a.method;
        j["recording_id"] = rec.id;
        j["n_segments"] = peaks.size();
        const auto t0 = std::chrono::steady_clock::now();
        if (a.method == "ts") {
            result = baselines::template_subtraction(rec, peaks, a.k_hist);
        } else if (a.method == "pulse-blank") {
            result = baselines::pulse_blanking(rec, peaks);
        } else if (a.method == "transient-blank") {
            const auto periods = preprocess::identify_stim_periods(peaks, rec.fs, rec.f_sti, rec.size());
            const auto b = baselines::transient_blanking(rec, periods);
            result = b.lfp;
            auto& mask = j["mask"] = nlohmann::ordered_json::array();
            for (const auto& m : b.mask) mask.push_back({m.start, m.end});
        } else {
            throw ValidationError("unknown method '" + a.method + "'");
        }
        const double us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
        j["mean_micros_per_segment"] = peaks.empty() ? 0.0 : us / static_cast<double>(peaks.size());
        report_text = j.dump(1);
    }
    save_recording(result, a.out);
    if (!a.report.empty()) write_text(a.report, report_text);
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string estimate, truth_dir, metrics = "ar,sc,nmse,events", out, mask;
    bool one_to_one = false;
};

void run_eval(const EvalArgs& a) {
    const Recording est = load_recording(a.estimate);
    const fs::path dir(a.truth_dir);
    const Recording base = load_recording(dir / "base_lfp.f32");
    if (base.size() != est.size()) throw ValidationError("estimate and truth lengths differ");
    std::vector<double> onsets;
    if (fs::exists(dir / "schedule.csv"))
        for (const auto& e : load_events(dir / "schedule.csv").events) onsets.push_back(e.onset);

    std::set<std::string> wanted;
    std::stringstream ss(a.metrics);
    for (std::string item; std::getline(ss, item, ',');) wanted.insert(item);

    nlohmann::ordered_json j;
    j["estimate"] = a.estimate;
    if (wanted.count("ar")) {
        const Recording ref = fs::exists(dir / "recording.f32") ? load_recording(dir / "recording.f32") : est;
        j["ar"] = eval::signal_ar(est, preprocess::detect_peaks(ref));
    }
    if (wanted.count("sc")) {
        const eval::ScGrid grid;
        j["sc"] = eval::mean_spectral_concentration(est.samples, est.fs, grid);
        for (double f : grid.frequencies()) j["sc_by_frequency"][format_double(f)] = eval::spectral_concentration(est.samples, est.fs, f).sc;
    }
    if (wanted.count("nmse")) {
        j["nmse"] = eval::nmse(est.samples, base.samples);
        for (const auto& b : eval::standard_bands()) j["nmse_bands"][b.name] = eval::nmse(est.samples, base.samples, b, est.fs);
    }
    if (wanted.count("events")) {
        const adbs::BetaConfig cfg;
        std::vector<double> none;
        const suite::Truth truth = suite::make_truth(base, cfg, onsets);
        auto amp = adbs::beta_amplitude(est.samples, est.fs, cfg, truth.peak_hz).amplitude;
        if (!a.mask.empty()) {
            std::ifstream in(a.mask);
            const auto mj = nlohmann::json::parse(in).at("mask");
            for (const auto& m : mj) {
                const auto s = m.at(0).get<SampleIndex>(), e = std::min<SampleIndex>(m.at(1).get<SampleIndex>(), static_cast<SampleIndex>(amp.size()));
                std::fill(amp.begin() + s, amp.begin() + e, 0.0);
            }
        }
        const auto det = adbs::detect_beta_events(amp, truth.threshold, est.fs, cfg.min_on_ms);
        eval::MatchOptions mo;
        mo.one_to_one = a.one_to_one;
        const auto m = eval::match_events(det, truth.events, mo);
        const auto mon = eval::match_events_onset(det, truth.events, onsets, 0.05, mo);
        auto& ev = j["events"];
        ev["matching"] = a.one_to_one ? "one-to-one" : "many-to-one";
        ev["threshold"] = truth.threshold;
        ev["tp"] = m.tp;
        ev["fn"] = m.fn;
        ev["fp"] = m.fp;
        ev["recall"] = m.recall;
        ev["precision"] = m.precision;
        ev["precision_undefined"] = m.precision_undefined;
        ev["f1"] = m.f1;
        ev["deviation_ms"] = 1000.0 * m.mean_deviation();
        ev["onset"]["recall"] = mon.recall;
        ev["onset"]["precision"] = mon.precision;
        ev["onset"]["f1"] = mon.f1;
    }
    if (a.out.empty()) {
        std::cout << j.dump(1) << '\n';
    } else {
        write_text(a.out, j.dump(1));
    }
}

// --- beta-events / adbs-sim ---------------------------------------------------

void run_beta_events(const std::string& in, const std::string& threshold_from, const std::string& out) {
    const Recording rec = load_recording(in);
    const adbs::BetaConfig cfg;
    const Recording ref = threshold_from.empty() ? rec : load_recording(threshold_from);
    const auto ref_amp = adbs::beta_amplitude(ref.samples, ref.fs, cfg);
    const double thr = adbs::threshold_from(ref_amp.amplitude, cfg.threshold_percentile);
    const auto amp = adbs::beta_amplitude(rec.samples, rec.fs, cfg, ref_amp.peak_hz);
    const EventList ev = adbs::detect_beta_events(amp.amplitude, thr, rec.fs, cfg.min_on_ms);
    save_events(ev, out);
    std::cout << ev.events.size() << " events (threshold " << thr << ", peak " << ref_amp.peak_hz << " Hz)\n";
}

void run_adbs_sim(const std::string& lfp, const std::string& profile, const std::string& out, std::uint64_t seed) {
    const Recording base = load_recording(lfp);
    const KeyValues kv = load_optional(profile);
    auto model = synth::artifact_model_from(kv);
    if (!kv.has("artifact.seed")) model.seed = seed;
    const auto sim = adbs::simulate_adbs(base, model);
    const fs::path dir(out);
    Recording rec = sim.rec;
    rec.amplitude = model.gain;
    save_recording(rec, dir / "recording.f32");
    save_recording(series(rec, base.samples, rec.id + "-base"), dir / "base_lfp.f32");
    save_recording(series(rec, sim.artifact, rec.id + "-artifact"), dir / "artifact.f32");
    save_events(sim.schedule, dir / "schedule.csv");
    std::cout << sim.schedule.events.size() << " stimulation periods, on-fraction " << sim.on_fraction()
              << ", threshold " << sim.threshold << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stimulus artifact removal for LFP recordings"};
    app.require_subcommand(1);
    std::uint64_t seed = 1;
    int threads = 1;
    bool quiet = false, verbose = false;
    app.add_option("--seed", seed, "Master seed")->capture_default_str();
    app.add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
    app.add_flag("-q,--quiet", quiet, "Suppress warnings");
    app.add_flag("-v,--verbose", verbose, "Progress messages");

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic recording with ground truth");
    synth_cmd->add_option("--profile", sa.profile, "Profile (key = value, [lfp] and [artifact] sections)");
    synth_cmd->add_option("--out", sa.out, "Output directory")->required();

    std::string detect_in, detect_out;
    bool detect_notch = false;
    auto* detect_cmd = app.add_subcommand("detect", "Detect stimulation artifact peaks");
    detect_cmd->add_option("input", detect_in, "Recording")->required();
    detect_cmd->add_option("--out", detect_out, "Peak CSV")->required();
    detect_cmd->add_flag("--notch", detect_notch, "Apply the line-noise comb first");

    std::vector<std::string> lib_inputs;
    std::string lib_out;
    auto* lib_cmd = app.add_subcommand("library", "Artifact library operations");
    lib_cmd->require_subcommand(1);
    auto* lib_build = lib_cmd->add_subcommand("build", "Build a library from recordings");
    lib_build->add_option("recordings", lib_inputs, "Recordings")->required();
    lib_build->add_option("--out", lib_out, "Library directory")->required();

    CleanArgs ca;
    auto* clean_cmd = app.add_subcommand("clean", "Remove stimulation artifacts");
    clean_cmd->add_option("input", ca.in, "Recording")->required();
    clean_cmd->add_option("--library", ca.library, "Library directory (smarta+)");
    clean_cmd->add_option("--method", ca.method, "smarta+|smarta|ts|pulse-blank|transient-blank")
        ->check(CLI::IsMember({"smarta+", "smarta", "ts", "pulse-blank", "transient-blank"}))
        ->capture_default_str();
    clean_cmd->add_option("--out", ca.out, "Output recording")->required();
    clean_cmd->add_option("--report", ca.report, "Report JSON");
    clean_cmd->add_option("--k-hist", ca.k_hist, "Template-subtraction history")->capture_default_str();

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Score an estimate against ground truth");
    eval_cmd->add_option("--estimate", ea.estimate, "Cleaned recording")->required();
    eval_cmd->add_option("--truth-dir", ea.truth_dir, "Directory with base_lfp.f32 (and schedule.csv)")->required();
    eval_cmd->add_option("--metrics", ea.metrics, "Comma list of ar,sc,nmse,events")->capture_default_str();
    eval_cmd->add_option("--mask", ea.mask, "Transient-blanking report whose mask gates detection");
    eval_cmd->add_flag("--one-to-one", ea.one_to_one, "One-to-one event matching");
    eval_cmd->add_option("--out", ea.out, "Output JSON (stdout if absent)");

    std::string be_in, be_thr, be_out;
    auto* be_cmd = app.add_subcommand("beta-events", "Detect beta events");
    be_cmd->add_option("input", be_in, "Recording")->required();
    be_cmd->add_option("--threshold-from", be_thr, "Recording whose amplitude percentile sets the threshold");
    be_cmd->add_option("--out", be_out, "Event CSV")->required();

    std::string sim_lfp, sim_profile, sim_out;
    auto* sim_cmd = app.add_subcommand("adbs-sim", "Closed-loop aDBS simulation");
    sim_cmd->add_option("--lfp", sim_lfp, "Stimulation-free LFP")->required();
    sim_cmd->add_option("--artifact-profile", sim_profile, "Artifact profile");
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();

    std::string bench_cfg, bench_out;
    auto* bench_cmd = app.add_subcommand("bench", "Per-segment latency benchmark");
    bench_cmd->add_option("--config", bench_cfg, "Benchmark config");
    bench_cmd->add_option("--out", bench_out, "Report JSON (stdout if absent)");

    std::string suite_cfg, suite_out;
    auto* suite_cmd = app.add_subcommand("suite", "Full semi-real evaluation suite");
    suite_cmd->add_option("--config", suite_cfg, "Suite config");
    suite_cmd->add_option("--out", suite_out, "Report JSON (stdout if absent)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    set_log_level(quiet ? LogLevel::quiet : verbose ? LogLevel::info : LogLevel::warn);
    set_default_threads(threads);
    try {
        if (*synth_cmd) {
            run_synth(sa, seed);
        } else if (*detect_cmd) {
            run_detect(detect_in, detect_out, detect_notch);
        } else if (*lib_build) {
            run_library_build(lib_inputs, lib_out);
        } else if (*clean_cmd) {
            run_clean(ca, seed);
        } else if (*eval_cmd) {
            run_eval(ea);
        } else if (*be_cmd) {
            run_beta_events(be_in, be_thr, be_out);
        } else if (*sim_cmd) {
            run_adbs_sim(sim_lfp, sim_profile, sim_out, seed);
        } else if (*bench_cmd) {
            auto cfg = suite::BenchConfig::from(load_optional(bench_cfg));
            if (!load_optional(bench_cfg).has("seed")) cfg.seed = seed;
            cfg.clean.forest.seed = seed;
            const auto rep = suite::run_benchmark(cfg);
            if (bench_out.empty()) std::cout << rep.to_json() << '\n';
            else write_text(bench_out, rep.to_json());
        } else if (*suite_cmd) {
            const KeyValues kv = load_optional(suite_cfg);
            auto cfg = suite::SuiteConfig::from(kv);
            if (!kv.has("seed")) cfg.seed = seed;
            cfg.clean.forest.seed = seed;
            const auto rep = suite::run_suite(cfg);
            const std::string text = rep.to_json();
            if (suite_out.empty()) std::cout << text << '\n';
            else write_text(suite_out, text);
            std::cerr << "report hash " << std::hex << rep.hash() << std::dec << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
