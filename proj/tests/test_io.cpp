#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lidarbg/error.hpp"
#include "lidarbg/point_cloud_io.hpp"

using namespace lidarbg;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "lidarbg_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::vector<Frame> random_frames(std::uint64_t seed, std::size_t total) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> az(0.001, 360.0), r(0.5, 150.0), inten(0.0, 255.0), c(-50.0, 50.0);
  std::uniform_int_distribution<int> beam(0, 31), kind(0, 9);
  std::vector<Frame> frames;
  std::uint64_t id = 3;
  while (total > 0) {
    Frame f;
    f.frame_id = id;
    f.timestamp = 0.1 * static_cast<double>(id);
    id += 1 + static_cast<std::uint64_t>(kind(rng) % 2);
    const std::size_t n = std::min<std::size_t>(total, 1 + static_cast<std::size_t>(kind(rng)) * 20);
    for (std::size_t i = 0; i < n; ++i) {
      const int k = kind(rng);
      if (k == 0) {
        f.points.push_back(PointRecord::no_return(f.frame_id, beam(rng), az(rng)));
      } else if (k < 5) {
        f.points.push_back(PointRecord::cartesian(f.frame_id, beam(rng), az(rng), {c(rng), c(rng), c(rng)}, inten(rng)));
      } else {
        f.points.push_back(PointRecord::spherical(f.frame_id, beam(rng), az(rng), r(rng), inten(rng)));
      }
    }
    total -= n;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace

TEST_CASE("csv reader groups rows into frames") {
  const auto p = temp_file("two_frames.csv");
  write_text(p,
             "frame_id,timestamp,beam_id,azimuth_deg,range_m,x,y,z,intensity,return_flag\n"
             "0,0.0,0,10.0,5.0,,,,12,return\n"
             "0,0.0,1,10.2,6.0,,,,13,return\n"
             "0,0.0,2,10.4,,,,,,no_return\n"
             "1,0.1,0,10.0,,1.0,2.0,3.0,14,return\n"
             "1,0.1,1,10.2,7.0,,,,15,return\n"
             "1,0.1,2,10.4,8.0,,,,16,return\n");
  const auto frames = read_frames(p, FrameFormat::Csv);
  REQUIRE(frames.size() == 2);
  CHECK(frames[0].points.size() == 3);
  CHECK(frames[1].points.size() == 3);
  CHECK_FALSE(frames[0].points[2].is_return());
  CHECK(frames[1].points[0].xyz.has_value());
  CHECK(frames[1].timestamp == doctest::Approx(0.1));
}

TEST_CASE("empty files give an empty stream") {
  const auto p = temp_file("empty.csv");
  write_text(p, "");
  CHECK(read_frames(p, FrameFormat::Csv).empty());
  const auto b = temp_file("empty.bin");
  write_text(b, "");
  CHECK(read_frames(b, FrameFormat::Binary).empty());
}

TEST_CASE("azimuth zero is rejected with the row number") {
  const auto p = temp_file("az_zero.csv");
  write_text(p,
             "frame_id,timestamp,beam_id,azimuth_deg,range_m,x,y,z,intensity,return_flag\n"
             "0,0.0,0,10.0,5.0,,,,12,return\n"
             "0,0.0,1,0.0,5.0,,,,12,return\n");
  try {
    read_frames(p, FrameFormat::Csv);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.row() == 3);  // 1-based file line, header included
  }
}

TEST_CASE("record invariants") {
  IoOptions io;
  auto r = PointRecord::spherical(0, 0, 10.0, 5.0, 300.0);
  CHECK_THROWS_AS(validate_record(r, 1, io), FormatError);
  r = PointRecord::spherical(0, 0, 10.0, -1.0, 10.0);
  CHECK_THROWS_AS(validate_record(r, 1, io), FormatError);
  r = PointRecord::spherical(0, 0, 10.0, 5.0, 10.0);
  r.xyz = std::array<double, 3>{1, 2, 3};
  CHECK_THROWS_AS(validate_record(r, 1, io), FormatError);
  r = PointRecord::no_return(0, 0, 10.0);
  r.intensity = 5.0;
  CHECK_THROWS_AS(validate_record(r, 1, io), FormatError);
  CHECK_NOTHROW(validate_record(PointRecord::no_return(0, 0, 360.0), 1, io));
}

TEST_CASE("frame ids must not decrease") {
  const auto p = temp_file("nonmono.csv");
  write_text(p,
             "frame_id,timestamp,beam_id,azimuth_deg,range_m,x,y,z,intensity,return_flag\n"
             "2,0.0,0,10.0,5.0,,,,12,return\n"
             "1,0.0,0,10.0,5.0,,,,12,return\n");
  CHECK_THROWS_AS(read_frames(p, FrameFormat::Csv), NonMonotonicFrameId);
}

TEST_CASE("round trip of 1000 random records in both formats") {
  const auto frames = random_frames(11, 1000);
  for (auto format : {FrameFormat::Csv, FrameFormat::Binary}) {
    const auto p = temp_file(format == FrameFormat::Csv ? "rt.csv" : "rt.bin");
    write_frames(frames, p, format);
    const auto back = read_frames(p, format);
    REQUIRE(back.size() == frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) CHECK(back[i] == frames[i]);
  }
}

TEST_CASE("no-return records survive a round trip") {
  Frame f;
  f.frame_id = 7;
  f.points = {PointRecord::no_return(7, 3, 45.0), PointRecord::no_return(7, 4, 360.0)};
  for (auto format : {FrameFormat::Csv, FrameFormat::Binary}) {
    const auto p = temp_file("nr");
    write_frames(std::span<const Frame>(&f, 1), p, format);
    const auto back = read_frames(p, format);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == f);
  }
}

TEST_CASE("unwritable path is an io error") {
  Frame f;
  CHECK_THROWS_AS(write_frames(std::span<const Frame>(&f, 1), "/nonexistent_dir/x/y.csv", FrameFormat::Csv), IoError);
  CHECK_THROWS_AS(read_frames("/nonexistent_dir/none.csv", FrameFormat::Csv), IoError);
}

TEST_CASE("streaming reader yields frames one at a time") {
  const auto frames = random_frames(5, 400);
  std::ostringstream buf;
  {
    auto out = std::make_unique<std::ostringstream>();
    auto* raw = out.get();
    FrameWriter w(std::move(out), FrameFormat::Binary);
    for (const auto& f : frames) w.write(f);
    raw->flush();
    buf << raw->str();
  }
  auto reader = make_frame_reader(std::make_unique<std::istringstream>(buf.str()), FrameFormat::Binary);
  std::size_t n = 0;
  while (auto f = reader->next()) {
    REQUIRE(n < frames.size());
    CHECK(*f == frames[n]);
    ++n;
  }
  CHECK(n == frames.size());
}

TEST_CASE("truncated binary input is a format error") {
  const auto frames = random_frames(9, 50);
  const auto p = temp_file("trunc.bin");
  write_frames(frames, p, FrameFormat::Binary);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 5);
  CHECK_THROWS_AS(read_frames(p, FrameFormat::Binary), FormatError);
}
