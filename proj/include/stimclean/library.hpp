#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stimclean/core.hpp"
#include "stimclean/preprocess.hpp"
#include "stimclean/shrink.hpp"

namespace stimclean::library {

/// One recording's contribution to the library. Columns of W, D and X are aligned
/// with `peaks`.
struct RecordingEntry {
    std::string id;
    double fs = 0.0;
    double f_sti = 0.0;
    double amplitude = 0.0;         // nominal device amplitude from the recording
    double a_m = 0.0;               // mean per-segment maximum of the detrended segments
    Eigen::VectorXd s_m;            // q, entrywise median of W columns
    Eigen::MatrixXd W;              // q x n, Haar coefficients of D columns
    Eigen::MatrixXd D;              // p x n, denoised segments
    Eigen::MatrixXd X;              // p x n, detrended (not denoised) segments
    std::vector<SampleIndex> peaks;
    std::vector<double> onset_offsets_ms;  // time since the start of the segment's stimulation period

    Eigen::Index n() const { return D.cols(); }
    Eigen::Index p() const { return D.rows(); }
    Eigen::Index q() const { return W.rows(); }
};

struct FeatureSelection {
    std::vector<int> selected_idx;   // descending variance, ties by index
    Eigen::VectorXd variance;        // s_v, length q
};

struct ArtifactLibrary {
    std::vector<RecordingEntry> entries;
    FeatureSelection features;

    const RecordingEntry* find(const std::string& id) const;
};

struct BuildParams {
    preprocess::PrepareParams prepare;
    shrink::ShrinkOptions shrink;
    Eigen::Index group = 500;
    Eigen::Index min_segments = 50;
};

/// Haar coefficients for every column of D (q = next power of two >= p).
Eigen::MatrixXd haar_columns(const Eigen::MatrixXd& D);

/// Entry from an already prepared recording. Throws ValidationError when fewer
/// than params.min_segments segments are available.
RecordingEntry make_entry(const Recording& rec, const preprocess::Prepared& prep, const BuildParams& params = {});

/// Runs the full preprocessing chain on rec, then make_entry.
RecordingEntry build_entry(const Recording& rec, const BuildParams& params = {});

/// Feature selection over the stacked s_m of `entries` (at least two).
FeatureSelection select_features(const std::vector<const RecordingEntry*>& entries);
FeatureSelection select_features(const std::vector<RecordingEntry>& entries);

/// Rows of `m` listed in `idx`, in that order.
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx);
Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<int>& idx);

/// Entries (by position in lib.entries) within 10% of the target's a_m, other than
/// the target itself, ordered by selected-feature distance of s_m; at most Q.
std::vector<std::size_t> select_recordings(const ArtifactLibrary& lib, const RecordingEntry& target,
                                           const FeatureSelection& features, std::size_t Q = 5,
                                           double amplitude_tolerance = 0.1);

struct BuildReport {
    std::vector<std::string> rejected;  // "id: reason"
};

/// Builds entries in parallel (rejections are reported, not fatal) and derives
/// feature selection. Throws ValidationError if no entry survives or fs/f_sti differ.
ArtifactLibrary build_library(const std::vector<Recording>& recs, const BuildParams& params = {},
                              BuildReport* report = nullptr);

/// Directory layout: manifest.json plus entry_NNNN/{D,W,X}.f32 and peaks.i64.
void save_library(const ArtifactLibrary& lib, const std::filesystem::path& dir);
ArtifactLibrary load_library(const std::filesystem::path& dir);

}  // namespace stimclean::library
