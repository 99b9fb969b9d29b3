#include "stimclean/library.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "stimclean/dsp.hpp"
#include "stimclean/log.hpp"
#include "stimclean/parallel.hpp"

namespace stimclean::library {

using nlohmann::json;

const RecordingEntry* ArtifactLibrary::find(const std::string& id) const {
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

Eigen::MatrixXd haar_columns(const Eigen::MatrixXd& D) {
    const auto q = static_cast<Eigen::Index>(dsp::next_pow2(static_cast<std::size_t>(D.rows())));
    Eigen::MatrixXd W(q, D.cols());
    for (Eigen::Index j = 0; j < D.cols(); ++j) {
        const auto c = dsp::haar_forward(std::span<const double>(D.col(j).data(), static_cast<std::size_t>(D.rows())));
        W.col(j) = Eigen::Map<const Eigen::VectorXd>(c.data(), q);
    }
    return W;
}

RecordingEntry make_entry(const Recording& rec, const preprocess::Prepared& prep, const BuildParams& params) {
    const SegmentMatrix& seg = prep.segments;
    if (seg.n() < params.min_segments)
        throw ValidationError("recording '" + rec.id + "' has " + std::to_string(seg.n()) + " segments; at least " +
                              std::to_string(params.min_segments) + " are needed");
    RecordingEntry e;
    e.id = rec.id;
    e.fs = rec.fs;
    e.f_sti = rec.f_sti;
    e.amplitude = rec.amplitude;
    e.X = seg.data;
    e.peaks = seg.peaks;
    if (seg.n() < shrink::min_short_side(std::max(seg.p(), seg.n()), params.shrink.k)) {
        log_warn("recording '" + rec.id + "': too few segments for shrinkage, using them undenoised");
        e.D = seg.data;
    } else {
        e.D = shrink::shrink_grouped(seg.data, params.group, params.shrink);
    }
    e.W = haar_columns(e.D);
    e.a_m = seg.data.colwise().maxCoeff().mean();

    e.s_m.resize(e.W.rows());
    std::vector<double> row(static_cast<std::size_t>(e.W.cols()));
    for (Eigen::Index r = 0; r < e.W.rows(); ++r) {
        for (Eigen::Index j = 0; j < e.W.cols(); ++j) row[static_cast<std::size_t>(j)] = e.W(r, j);
        e.s_m(r) = dsp::median(row);
    }

    e.onset_offsets_ms.reserve(e.peaks.size());
    std::size_t period = 0;
    const auto& periods = prep.periods.periods;
    for (SampleIndex pk : e.peaks) {
        while (period + 1 < periods.size() && pk >= periods[period].end) ++period;
        const SampleIndex start = periods.empty() ? 0 : periods[period].start;
        e.onset_offsets_ms.push_back(1000.0 * static_cast<double>(pk - start) / rec.fs);
    }
    return e;
}

RecordingEntry build_entry(const Recording& rec, const BuildParams& params) {
    rec.validate();
    return make_entry(rec, preprocess::prepare(rec, params.prepare), params);
}

FeatureSelection select_features(const std::vector<const RecordingEntry*>& entries) {
    if (entries.size() < 2) throw ValidationError("feature selection needs at least two entries");
    const Eigen::Index q = entries.front()->s_m.size();
    Eigen::MatrixXd S(q, static_cast<Eigen::Index>(entries.size()));
    for (std::size_t j = 0; j < entries.size(); ++j) {
        if (entries[j]->s_m.size() != q) throw ValidationError("library entries disagree on feature length");
        S.col(static_cast<Eigen::Index>(j)) = entries[j]->s_m;
    }
    FeatureSelection fs;
    const Eigen::VectorXd mean = S.rowwise().mean();
    fs.variance = (S.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(S.cols() - 1);

    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs.variance(a) > fs.variance(b); });
    const double total = fs.variance.sum();
    int k = 0;
    if (total > 0.0) {
        double cum = 0.0;
        for (int i = 0; i < q; ++i) {
            cum += fs.variance(order[static_cast<std::size_t>(i)]);
            if (cum < 0.99 * total) k = i + 1;
        }
    } else {
        log_warn("all library summaries are identical; using a single feature");
    }
    k = std::max(k, 1);
    fs.selected_idx.assign(order.begin(), order.begin() + k);
    return fs;
}

FeatureSelection select_features(const std::vector<RecordingEntry>& entries) {
    std::vector<const RecordingEntry*> ptr;
    for (const auto& e : entries) ptr.push_back(&e);
    return select_features(ptr);
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
    return out;
}

std::vector<std::size_t> select_recordings(const ArtifactLibrary& lib, const RecordingEntry& target,
                                           const FeatureSelection& features, std::size_t Q,
                                           double amplitude_tolerance) {
    if (!(target.a_m > 0.0)) throw ValidationError("target mean peak amplitude must be positive");
    const Eigen::VectorXd t = select_rows(target.s_m, features.selected_idx);
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t m = 0; m < lib.entries.size(); ++m) {
        const RecordingEntry& e = lib.entries[m];
        if (e.id == target.id) continue;
        if (std::abs(e.a_m - target.a_m) / target.a_m > amplitude_tolerance) continue;
        cand.emplace_back((select_rows(e.s_m, features.selected_idx) - t).norm(), m);
    }
    std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(Q, cand.size()); ++i) out.push_back(cand[i].second);
    return out;
}

ArtifactLibrary build_library(const std::vector<Recording>& recs, const BuildParams& params, BuildReport* report) {
    if (recs.empty()) throw ValidationError("library build needs at least one recording");
    for (const auto& r : recs) {
        if (r.fs != recs.front().fs || r.f_sti != recs.front().f_sti)
            throw ValidationError("library recordings must share fs and f_sti");
    }
    std::vector<std::optional<RecordingEntry>> built(recs.size());
    std::vector<std::string> errors(recs.size());
    parallel_for(recs.size(), [&](std::size_t i) {
        try {
            built[i] = build_entry(recs[i], params);
        } catch (const ValidationError& e) {
            errors[i] = e.what();
        } catch (const NumericError& e) {
            errors[i] = e.what();
        }
    });
    ArtifactLibrary lib;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (built[i]) {
            lib.entries.push_back(std::move(*built[i]));
        } else {
            log_warn("rejected recording '" + recs[i].id + "': " + errors[i]);
            if (report) report->rejected.push_back(recs[i].id + ": " + errors[i]);
        }
    }
    if (lib.entries.empty()) throw ValidationError("no recording produced a library entry");
    if (lib.entries.size() >= 2) {
        lib.features = select_features(lib.entries);
    } else {
        lib.features.variance = Eigen::VectorXd::Zero(lib.entries.front().q());
        lib.features.selected_idx.resize(static_cast<std::size_t>(lib.entries.front().q()));
        std::iota(lib.features.selected_idx.begin(), lib.features.selected_idx.end(), 0);
    }
    return lib;
}

namespace {

void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_f32(out, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
    if (!out) throw IoError("write failed for " + path.string());
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path, Eigen::Index rows, Eigen::Index cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto v = read_f32(in, static_cast<std::size_t>(rows * cols));
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

std::string entry_dir(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "entry_%04zu", i);
    return buf;
}

}  // namespace

void save_library(const ArtifactLibrary& lib, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "stimclean-library";
    manifest["version"] = 1;
    manifest["selected_idx"] = lib.features.selected_idx;
    manifest["variance"] = std::vector<double>(lib.features.variance.data(),
                                               lib.features.variance.data() + lib.features.variance.size());
    manifest["entries"] = json::array();
    for (std::size_t i = 0; i < lib.entries.size(); ++i) {
        const RecordingEntry& e = lib.entries[i];
        const auto sub = dir / entry_dir(i);
        std::filesystem::create_directories(sub);
        write_matrix(e.D, sub / "D.f32");
        write_matrix(e.W, sub / "W.f32");
        write_matrix(e.X, sub / "X.f32");
        {
            std::ofstream out(sub / "peaks.i64", std::ios::binary | std::ios::trunc);
            out.write(reinterpret_cast<const char*>(e.peaks.data()),
                      static_cast<std::streamsize>(e.peaks.size() * sizeof(SampleIndex)));
            if (!out) throw IoError("write failed for " + (sub / "peaks.i64").string());
        }
        json j;
        j["dir"] = entry_dir(i);
        j["id"] = e.id;
        j["fs"] = e.fs;
        j["f_sti"] = e.f_sti;
        j["amplitude"] = e.amplitude;
        j["a_m"] = e.a_m;
        j["n"] = e.n();
        j["p"] = e.p();
        j["q"] = e.q();
        j["s_m"] = std::vector<double>(e.s_m.data(), e.s_m.data() + e.s_m.size());
        j["onset_offsets_ms"] = e.onset_offsets_ms;
        manifest["entries"].push_back(std::move(j));
    }
    if (!lib.entries.empty()) {
        manifest["p"] = lib.entries.front().p();
        manifest["q"] = lib.entries.front().q();
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(1) << '\n';
}

ArtifactLibrary load_library(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open " + (dir / "manifest.json").string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("bad library manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "stimclean-library" || manifest.value("version", 0) != 1)
        throw ValidationError("unsupported library format in " + dir.string());
    ArtifactLibrary lib;
    try {
        lib.features.selected_idx = manifest.at("selected_idx").get<std::vector<int>>();
        const auto var = manifest.at("variance").get<std::vector<double>>();
        lib.features.variance = Eigen::Map<const Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()));
        for (const auto& j : manifest.at("entries")) {
            RecordingEntry e;
            const auto sub = dir / j.at("dir").get<std::string>();
            e.id = j.at("id").get<std::string>();
            e.fs = j.at("fs").get<double>();
            e.f_sti = j.at("f_sti").get<double>();
            e.amplitude = j.at("amplitude").get<double>();
            e.a_m = j.at("a_m").get<double>();
            const auto n = j.at("n").get<Eigen::Index>();
            const auto p = j.at("p").get<Eigen::Index>();
            const auto q = j.at("q").get<Eigen::Index>();
            const auto s = j.at("s_m").get<std::vector<double>>();
            e.s_m = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
            e.onset_offsets_ms = j.at("onset_offsets_ms").get<std::vector<double>>();
            e.D = read_matrix(sub / "D.f32", p, n);
            e.W = read_matrix(sub / "W.f32", q, n);
            e.X = read_matrix(sub / "X.f32", p, n);
            e.peaks.resize(static_cast<std::size_t>(n));
            std::ifstream pin(sub / "peaks.i64", std::ios::binary);
            pin.read(reinterpret_cast<char*>(e.peaks.data()), static_cast<std::streamsize>(n * sizeof(SampleIndex)));
            if (pin.gcount() != static_cast<std::streamsize>(n * sizeof(SampleIndex)))
                throw IoError("truncated peaks in " + sub.string());
            lib.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw ValidationError("bad library manifest: " + std::string(e.what()));
    }
    return lib;
}

}  // namespace stimclean::library
