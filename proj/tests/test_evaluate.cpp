#include <doctest.h>

#include <sstream>

#include "criteria.hpp"
#include "lidarbg/error.hpp"
#include "lidarbg/evaluate.hpp"
#include "lidarbg/synth.hpp"

using namespace lidarbg;

TEST_CASE("point metrics") {
  const auto ref = checks::metric_formulas();
  CHECK_MESSAGE(ref.pass, ref.detail);

  const std::vector<std::uint8_t> truth{1, 1, 0, 0, 1};
  const auto perfect = point_metrics(truth, truth);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const std::vector<std::uint8_t> zeros(10, 0);
  const auto neg = point_metrics(zeros, zeros);
  CHECK(neg.accuracy == 1.0);
  CHECK(neg.precision == 0.0);
  CHECK(neg.recall == 0.0);
  CHECK(neg.f1 == 0.0);

  CHECK_THROWS_AS(point_metrics(truth, zeros), LengthMismatch);
  CHECK_THROWS_AS(metrics_from_counts({}), EmptyInput);
}

TEST_CASE("object matching") {
  const std::vector<BevBox> boxes{{0, 0}, {10, 0}, {0, 10}};
  const auto same = object_metrics(boxes, boxes);
  CHECK(same.metrics.precision == 1.0);
  CHECK(same.metrics.recall == 1.0);
  const auto empty = object_metrics({}, boxes);
  CHECK(empty.metrics.recall == 0.0);
  CHECK(empty.counts.fn == 3);

  // Greedy takes the closest pair first.
  const std::vector<BevBox> pred{{1.0, 0}};
  const std::vector<BevBox> gt{{0, 0}, {1.5, 0}};
  const auto g = object_metrics(pred, gt);
  REQUIRE(g.matches.size() == 1);
  CHECK(g.matches[0].second == 1);
}

TEST_CASE("path count accuracy") {
  CHECK(100.0 * path_count_accuracy(211, 223) == doctest::Approx(94.31).epsilon(1e-4));
  CHECK(100.0 * path_count_accuracy(92, 88) == doctest::Approx(95.65).epsilon(1e-4));
  CHECK(path_count_accuracy(50, 50) == 1.0);
  CHECK_THROWS_AS(path_count_accuracy(0, 3), ZeroReference);
}

namespace {

std::vector<TrajectorySample> track(std::uint64_t id, const std::vector<Vec2>& xy, double t0 = 0.0) {
  std::vector<TrajectorySample> s;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    TrajectorySample p;
    p.track_id = id;
    p.frame_id = i;
    p.timestamp = t0 + 0.1 * static_cast<double>(i);
    p.position = Vec3(xy[i].x(), xy[i].y(), 0.0);
    p.status = TrackStatus::Confirmed;
    s.push_back(p);
  }
  return s;
}

}  // namespace

TEST_CASE("screenline counting") {
  const Screenline line{{-5, 0}, {5, 0}};
  const auto one = count_movements(track(1, {{0, 2}, {0, 1}, {0, -1}, {0, -2}}), line);
  CHECK(one.inbound == 1);
  CHECK(one.outbound == 0);

  const auto wobble = count_movements(track(2, {{0, 1}, {0, -1}, {0, 1}, {0, -1}, {0, -2}}), line);
  CHECK(wobble.inbound + wobble.outbound == 1);

  auto candidate = track(3, {{0, 1}, {0, -1}});
  for (auto& s : candidate) s.status = TrackStatus::Candidate;
  const auto none = count_movements(candidate, line);
  CHECK(none.inbound + none.outbound == 0);

  const auto miss = count_movements(track(4, {{8, 1}, {8, -1}}), line);
  CHECK(miss.inbound + miss.outbound == 0);
}

TEST_CASE("simulated crossings are counted exactly") {
  SceneConfig scene;
  scene.sensor = preset_sensor();
  scene.screenline = {{-8, 25}, {8, 25}};
  int k = 0;
  auto add = [&](double from_y, double to_y, double lane_x) {
    MoverPath m;
    m.waypoints = {Vec2(lane_x, from_y), Vec2(lane_x, to_y)};
    m.speed = 10.0;
    m.start_time = 2.0 * k++;
    scene.movers.push_back(m);
  };
  for (int i = 0; i < 12; ++i) add(60, -10, -1.75);
  for (int i = 0; i < 9; ++i) add(-10, 60, 1.75);
  scene.duration_frames = static_cast<std::uint64_t>((2.0 * k + 8.0) * 10.0);
  const SceneGenerator gen(scene);
  const auto counts = gen.true_counts();
  CHECK(counts.inbound == 12);
  CHECK(counts.outbound == 9);
}

TEST_CASE("metrics output") {
  MetricsRow row{"point", "all", {8, 89, 2, 1}, {}};
  row.metrics = metrics_from_counts(row.counts);
  std::ostringstream csv, table;
  write_metrics_csv(csv, std::vector<MetricsRow>{row});
  write_metrics_table(table, std::vector<MetricsRow>{row});
  CHECK(csv.str().find("point,all,8,89,2,1") != std::string::npos);
  CHECK(table.str().find("0.8421") != std::string::npos);
}
