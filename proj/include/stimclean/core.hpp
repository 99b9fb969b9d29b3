#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stimclean {

/// Sample index into a recording. All internal time bookkeeping uses these;
/// seconds appear only at I/O boundaries.
using SampleIndex = std::int64_t;

/// Base error. `exit_code` is the CLI process status for this error class.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(what, 2) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what, 3) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, 4) {}
};

/// Half-open interval in seconds.
struct TimeInterval {
    double onset = 0.0;
    double offset = 0.0;
    double duration() const { return offset - onset; }
    friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

/// Half-open interval in samples, [start, end).
struct SampleInterval {
    SampleIndex start = 0;
    SampleIndex end = 0;
    SampleIndex length() const { return end - start; }
    friend bool operator==(const SampleInterval&, const SampleInterval&) = default;
};

/// A single-channel LFP recording in microvolts plus acquisition metadata.
struct Recording {
    std::vector<double> samples;
    double fs = 22000.0;
    double f_sti = 130.0;
    double amplitude = 1.0;
    std::string id;
    /// Ground-truth stimulation-on intervals for synthetic data.
    std::optional<std::vector<TimeInterval>> stim_schedule;

    std::size_t size() const { return samples.size(); }
    double duration() const { return static_cast<double>(samples.size()) / fs; }

    /// Throws ValidationError when fs <= 2 f_sti or samples are non-finite.
    void validate() const;

    /// Same metadata, new samples.
    Recording with_samples(std::vector<double> s) const;
};

/// Stimulation-on periods as sorted, disjoint sample intervals.
struct StimPeriods {
    std::vector<SampleInterval> periods;
    bool empty() const { return periods.empty(); }
};

/// Detected or ground-truth events, sorted and disjoint.
struct EventList {
    std::vector<TimeInterval> events;

    /// Throws ValidationError unless sorted, disjoint and offset > onset.
    void validate() const;
};

/// Segment geometry derived from fs and f_sti: one segment starts `pre` samples
/// before a peak and spans `p` samples.
struct SegmentGeometry {
    int pre = 0;
    int post = 0;
    int p = 0;
    static SegmentGeometry from(double fs, double f_sti, double pre_ms = 1.0, double tail_margin_ms = 0.5);
};

/// Column-per-artifact matrix.
struct SegmentMatrix {
    Eigen::MatrixXd data;              // p x n
    std::vector<SampleIndex> peaks;    // n peak sample indices, increasing
    SegmentGeometry geometry;
    std::size_t dropped = 0;           // peaks too close to the recording edge

    Eigen::Index p() const { return data.rows(); }
    Eigen::Index n() const { return data.cols(); }
    SampleIndex start(Eigen::Index i) const { return peaks[static_cast<std::size_t>(i)] - geometry.pre; }
};

int ms_to_samples(double ms, double fs);
SampleIndex seconds_to_sample(double s, double fs);
double sample_to_seconds(SampleIndex n, double fs);

/// Conversions between sample-interval and second-interval lists.
std::vector<TimeInterval> to_time(const std::vector<SampleInterval>& iv, double fs);
std::vector<SampleInterval> to_samples(const std::vector<TimeInterval>& iv, double fs);

// Recording file: raw little-endian float32 samples at `path`, UTF-8 key/value
// sidecar at `path` + ".meta".
std::filesystem::path sidecar_path(const std::filesystem::path& path);
Recording load_recording(const std::filesystem::path& path);
void save_recording(const Recording& rec, const std::filesystem::path& path);

// EventList CSV with header `onset_s,offset_s`.
EventList load_events(const std::filesystem::path& path);
void save_events(const EventList& ev, const std::filesystem::path& path);

// Raw float32 little-endian vector I/O, shared by the library and forest formats.
void write_f32(std::ostream& out, std::span<const double> values);
std::vector<double> read_f32(std::istream& in, std::size_t count);

}  // namespace stimclean
