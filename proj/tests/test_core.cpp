#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "helpers.hpp"
#include "stimclean/config.hpp"
#include "stimclean/core.hpp"

using namespace stimclean;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(RecordingIo, DecodesSmallFile) {
    testutil::TempDir dir;
    const auto path = dir.path() / "r.f32";
    {
        std::ofstream out(path, std::ios::binary);
        write_f32(out, std::vector<double>{0.0, 1.0, -1.0, 0.0});
        std::ofstream meta(sidecar_path(path));
        meta << "fs = 22000\nf_sti = 130\nn_samples = 4\n";
    }
    const Recording r = load_recording(path);
    ASSERT_EQ(r.size(), 4u);
    EXPECT_EQ(r.samples[1], 1.0);
    EXPECT_EQ(r.samples[2], -1.0);
    EXPECT_EQ(r.fs, 22000.0);
}

TEST(RecordingIo, LengthMismatchIsAnError) {
    testutil::TempDir dir;
    const auto path = dir.path() / "r.f32";
    {
        std::ofstream out(path, std::ios::binary);
        write_f32(out, std::vector<double>(99, 0.5));
        std::ofstream meta(sidecar_path(path));
        meta << "fs = 22000\nf_sti = 130\nn_samples = 100\n";
    }
    EXPECT_THROW(load_recording(path), ValidationError);
    EXPECT_THROW(load_recording(dir.path() / "missing.f32"), IoError);
}

TEST(RecordingIo, RoundTripIsBitIdentical) {
    testutil::TempDir dir;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-1e4f, 1e4f);
    Recording r;
    r.samples.resize(1'000'000);
    for (auto& v : r.samples) v = u(rng);
    r.id = "rt";
    r.amplitude = 2.5;
    r.stim_schedule = std::vector<TimeInterval>{{0.5, 1.25}, {2.0, 3.0}};
    save_recording(r, dir.path() / "a.f32");
    const Recording back = load_recording(dir.path() / "a.f32");
    save_recording(back, dir.path() / "b.f32");
    EXPECT_EQ(slurp(dir.path() / "a.f32"), slurp(dir.path() / "b.f32"));
    EXPECT_EQ(slurp(dir.path() / "a.f32.meta"), slurp(dir.path() / "b.f32.meta"));
    EXPECT_EQ(back.samples, r.samples);
    EXPECT_EQ(back.fs, 22000.0);
    EXPECT_EQ(back.f_sti, 130.0);
    EXPECT_EQ(back.amplitude, 2.5);
    EXPECT_EQ(back.id, "rt");
    ASSERT_TRUE(back.stim_schedule.has_value());
    EXPECT_EQ(*back.stim_schedule, *r.stim_schedule);
}

TEST(RecordingIo, EmptyRecording) {
    testutil::TempDir dir;
    Recording r;
    save_recording(r, dir.path() / "e.f32");
    EXPECT_EQ(std::filesystem::file_size(dir.path() / "e.f32"), 0u);
    EXPECT_EQ(load_recording(dir.path() / "e.f32").size(), 0u);
}

TEST(Recording, Validation) {
    Recording r;
    r.samples = {1.0, 2.0};
    EXPECT_NO_THROW(r.validate());
    r.fs = 200.0;
    EXPECT_THROW(r.validate(), ValidationError);
    r.fs = 22000.0;
    r.samples[0] = std::nan("");
    EXPECT_THROW(r.validate(), ValidationError);
}

TEST(Events, RoundTripAndValidation) {
    testutil::TempDir dir;
    EventList ev{{{0.1, 0.5}, {1.0, 1.4}}};
    save_events(ev, dir.path() / "e.csv");
    EXPECT_EQ(load_events(dir.path() / "e.csv").events, ev.events);
    EXPECT_EQ(slurp(dir.path() / "e.csv").substr(0, 16), "onset_s,offset_s");
    EXPECT_THROW((EventList{{{1.0, 0.5}}}).validate(), ValidationError);
    EXPECT_THROW((EventList{{{0.0, 1.0}, {0.5, 2.0}}}).validate(), ValidationError);
}

TEST(Geometry, DefaultsAt22kHz) {
    const auto g = SegmentGeometry::from(22000.0, 130.0);
    EXPECT_EQ(g.pre, 22);
    EXPECT_EQ(g.p, 180);
    EXPECT_EQ(g.post, 158);
    EXPECT_EQ(ms_to_samples(3.0, 22000.0), 66);
    EXPECT_EQ(ms_to_samples(5.2, 22000.0), 114);
}

TEST(Geometry, IntervalConversionsRoundTrip) {
    const std::vector<SampleInterval> iv{{0, 22000}, {44000, 55000}};
    EXPECT_EQ(to_samples(to_time(iv, 22000.0), 22000.0), iv);
}

TEST(Config, ParsesSectionsAndTypes) {
    const auto kv = KeyValues::parse("# comment\nrecordings = 3\nname = \"x y\"\n[lfp]\nbeta_hz = 21.5 # tail\nflag = true\n");
    EXPECT_EQ(kv.get_int("recordings", 0), 3);
    EXPECT_EQ(kv.get_string("name", ""), "x y");
    EXPECT_EQ(kv.get_double("lfp.beta_hz", 0.0), 21.5);
    EXPECT_TRUE(kv.get_bool("lfp.flag", false));
    EXPECT_EQ(kv.get_double("missing", 7.0), 7.0);
    EXPECT_THROW(kv.require_double("missing"), ValidationError);
    EXPECT_THROW(KeyValues::parse("x = 1\n").require_int("y"), ValidationError);
    EXPECT_THROW(KeyValues::parse("x = abc\n").get_double("x", 0.0), ValidationError);
}

TEST(Config, FormatDoubleRoundTrips) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
}
