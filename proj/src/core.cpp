#include "stimclean/core.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stimclean/config.hpp"

namespace stimclean {

static_assert(std::endian::native == std::endian::little, "float32 payloads are written in native little-endian order");

void Recording::validate() const {
    if (!(fs > 0.0) || !(f_sti > 0.0)) throw ValidationError("fs and f_sti must be positive");
    if (!(fs > 2.0 * f_sti)) throw ValidationError("fs must exceed 2*f_sti");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!std::isfinite(samples[i]))
            throw ValidationError("non-finite sample at index " + std::to_string(i) + " in recording '" + id + "'");
    }
}

Recording Recording::with_samples(std::vector<double> s) const {
    Recording r;
    r.samples = std::move(s);
    r.fs = fs;
    r.f_sti = f_sti;
    r.amplitude = amplitude;
    r.id = id;
    r.stim_schedule = stim_schedule;
    return r;
}

void EventList::validate() const {
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (!(events[i].offset > events[i].onset)) throw ValidationError("event with offset <= onset");
        if (i > 0 && events[i].onset < events[i - 1].offset) throw ValidationError("events overlap or are unsorted");
    }
}

SegmentGeometry SegmentGeometry::from(double fs, double f_sti, double pre_ms, double tail_margin_ms) {
    SegmentGeometry g;
    const double post_ms = 1000.0 / f_sti - tail_margin_ms;
    g.pre = static_cast<int>(std::lround(fs * pre_ms / 1000.0));
    g.post = static_cast<int>(std::lround(fs * post_ms / 1000.0));
    g.p = static_cast<int>(std::lround(fs * (pre_ms + post_ms) / 1000.0));
    // Keep pre + post == p so the segment window is exactly [peak - pre, peak + post).
    g.post = g.p - g.pre;
    return g;
}

int ms_to_samples(double ms, double fs) { return static_cast<int>(std::lround(ms * fs / 1000.0)); }

SampleIndex seconds_to_sample(double s, double fs) { return static_cast<SampleIndex>(std::llround(s * fs)); }

double sample_to_seconds(SampleIndex n, double fs) { return static_cast<double>(n) / fs; }

std::vector<TimeInterval> to_time(const std::vector<SampleInterval>& iv, double fs) {
    std::vector<TimeInterval> out;
    out.reserve(iv.size());
    for (const auto& s : iv) out.push_back({sample_to_seconds(s.start, fs), sample_to_seconds(s.end, fs)});
    return out;
}

std::vector<SampleInterval> to_samples(const std::vector<TimeInterval>& iv, double fs) {
    std::vector<SampleInterval> out;
    out.reserve(iv.size());
    for (const auto& t : iv) out.push_back({seconds_to_sample(t.onset, fs), seconds_to_sample(t.offset, fs)});
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta");
}

namespace {

std::string encode_schedule(const std::vector<TimeInterval>& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ';';
        out += format_double(s[i].onset) + ":" + format_double(s[i].offset);
    }
    return out;
}

std::vector<TimeInterval> decode_schedule(const std::string& text) {
    std::vector<TimeInterval> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ValidationError("bad stim_schedule entry '" + item + "'");
        try {
            out.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
        } catch (const std::exception&) {
            throw ValidationError("bad stim_schedule entry '" + item + "'");
        }
    }
    return out;
}

}  // namespace

void write_f32(std::ostream& out, std::span<const double> values) {
    std::vector<float> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<double> read_f32(std::istream& in, std::size_t count) {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) throw IoError("truncated float32 payload");
    return {buf.begin(), buf.end()};
}

Recording load_recording(const std::filesystem::path& path) {
    const auto meta_path = sidecar_path(path);
    if (!std::filesystem::exists(meta_path)) throw IoError("missing sidecar " + meta_path.string());
    const KeyValues meta = KeyValues::load(meta_path);

    Recording rec;
    rec.fs = meta.require_double("fs");
    rec.f_sti = meta.require_double("f_sti");
    rec.amplitude = meta.get_double("amplitude", 1.0);
    rec.id = meta.get_string("id", path.stem().string());
    const long long declared = meta.require_int("n_samples");
    if (declared < 0) throw ValidationError("negative n_samples in " + meta_path.string());
    if (auto sched = meta.get("stim_schedule")) rec.stim_schedule = decode_schedule(*sched);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto bytes = std::filesystem::file_size(path);
    if (bytes % sizeof(float) != 0 || bytes / sizeof(float) != static_cast<std::uintmax_t>(declared)) {
        throw ValidationError("length mismatch in " + path.string() + ": sidecar declares " + std::to_string(declared) +
                              " samples, payload holds " + std::to_string(bytes / sizeof(float)));
    }
    rec.samples = read_f32(in, static_cast<std::size_t>(declared));
    rec.validate();
    return rec;
}

void save_recording(const Recording& rec, const std::filesystem::path& path) {
    rec.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        write_f32(out, rec.samples);
        if (!out) throw IoError("write failed for " + path.string());
    }
    KeyValues meta;
    meta.set("fs", format_double(rec.fs));
    meta.set("f_sti", format_double(rec.f_sti));
    meta.set("amplitude", format_double(rec.amplitude));
    meta.set("id", "\"" + rec.id + "\"");
    meta.set("n_samples", std::to_string(rec.samples.size()));
    if (rec.stim_schedule) meta.set("stim_schedule", "\"" + encode_schedule(*rec.stim_schedule) + "\"");
    std::ofstream out(sidecar_path(path), std::ios::trunc);
    if (!out) throw IoError("cannot write " + sidecar_path(path).string());
    out << meta.to_string();
}

EventList load_events(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty event file " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "onset_s,offset_s") throw ValidationError("event file must start with header onset_s,offset_s");
    EventList ev;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ValidationError("bad event row '" + line + "'");
        try {
            ev.events.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
        } catch (const std::exception&) {
            throw ValidationError("bad event row '" + line + "'");
        }
    }
    ev.validate();
    return ev;
}

void save_events(const EventList& ev, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "onset_s,offset_s\n";
    for (const auto& e : ev.events) out << format_double(e.onset) << ',' << format_double(e.offset) << '\n';
}

}  // namespace stimclean
