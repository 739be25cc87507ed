#include <doctest.h>

#include <random>

#include "lidarbg/error.hpp"
#include "lidarbg/tensorize.hpp"

using namespace lidarbg;

TEST_CASE("spherical to cartesian") {
  const Vec3 a = spherical_to_cartesian(10.0, 0.0, 90.0);
  CHECK(a.x() == doctest::Approx(10.0));
  CHECK(a.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.z() == doctest::Approx(0.0));
  for (double alpha : {1.0, 45.0, 200.0, 360.0}) {
    const Vec3 up = spherical_to_cartesian(10.0, 90.0, alpha);
    CHECK(std::abs(up.x()) < 1e-12);
    CHECK(std::abs(up.y()) < 1e-12);
    CHECK(up.z() == doctest::Approx(10.0));
  }
  const Vec3 c = spherical_to_cartesian(5.0, 30.0, 60.0);
  CHECK(c.norm() == doctest::Approx(5.0));
  CHECK(c.z() == doctest::Approx(2.5));
}

TEST_CASE("cartesian to spherical inverts") {
  const auto s = cartesian_to_spherical(Vec3(10, 0, 0));
  CHECK(s.range_m == doctest::Approx(10.0));
  CHECK(s.elevation_deg == doctest::Approx(0.0));
  CHECK(s.azimuth_deg == doctest::Approx(90.0));
  CHECK_THROWS_AS(cartesian_to_spherical(Vec3::Zero()), OriginPoint);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(0.1, 200.0), w(-89.0, 89.0), a(0.01, 360.0);
  for (int i = 0; i < 1000; ++i) {
    const double rr = r(rng), ww = w(rng), aa = a(rng);
    const auto back = cartesian_to_spherical(spherical_to_cartesian(rr, ww, aa));
    CHECK(std::abs(back.range_m - rr) < 1e-9);
    CHECK(std::abs(back.elevation_deg - ww) < 1e-9);
    CHECK(std::abs(back.azimuth_deg - aa) < 1e-9);
  }
}

TEST_CASE("azimuth hashing") {
  const auto cfg = SensorConfig::uniform(32, -25.0, 5.0, 0.2, 120.0);
  CHECK(azimuth_bin(0.35, cfg) == 2);
  CHECK(azimuth_bin(360.0, cfg) == 1);
  CHECK(azimuth_bin(0.1, cfg) == 1);
  CHECK(azimuth_bin(359.9, cfg) == 0);
  CHECK_THROWS_AS(azimuth_bin(0.0, cfg), DomainError);
  CHECK_THROWS_AS(azimuth_bin(360.5, cfg), DomainError);
}

TEST_CASE("sensor layout must tile the circle") {
  auto cfg = SensorConfig::uniform(4, -10.0, 10.0, 0.2, 100.0);
  CHECK_NOTHROW(cfg.validate());
  cfg.azimuth_bins = 1000;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SensorConfig::uniform(4, -10.0, 10.0, 0.2, 100.0);
  cfg.elevation_deg.pop_back();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("one point per cell lands bijectively") {
  const auto cfg = SensorConfig::uniform(4, -10.0, 10.0, 1.0, 100.0);
  Frame f;
  for (int b = 0; b < cfg.beams; ++b) {
    for (int k = 0; k < cfg.azimuth_bins; ++k) {
      f.points.push_back(PointRecord::spherical(0, b, (k + 0.5) * cfg.azimuth_resolution_deg, 10.0 + b, 7.0));
    }
  }
  const auto res = tensorize_frame(f, cfg);
  std::vector<int> hits(cfg.cell_count(), 0);
  for (auto c : res.point_cells) {
    REQUIRE(c >= 0);
    ++hits[static_cast<std::size_t>(c)];
  }
  for (int h : hits) CHECK(h == 1);
  CHECK(res.collisions_dropped == 0);
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    const auto& cell = res.tensor[static_cast<std::size_t>(res.point_cells[i])];
    CHECK(cell.returned);
    CHECK(cell.source_index == static_cast<std::int32_t>(i));
  }
}

TEST_CASE("collision keeps the nearer return by default") {
  const auto cfg = SensorConfig::uniform(2, -1.0, 1.0, 1.0, 100.0);
  Frame f;
  f.points.push_back(PointRecord::spherical(0, 1, 10.2, 30.0, 200.0));
  f.points.push_back(PointRecord::spherical(0, 1, 10.7, 12.0, 5.0));
  const auto near = tensorize_frame(f, cfg);
  const auto cell = static_cast<std::size_t>(near.point_cells[0]);
  CHECK(near.point_cells[0] == near.point_cells[1]);
  CHECK(near.tensor[cell].source_index == 1);
  CHECK(near.collisions_dropped == 1);

  const auto strong = tensorize_frame(f, cfg, CollisionPolicy::KeepStrongest);
  CHECK(strong.tensor[cell].source_index == 0);
  const auto first = tensorize_frame(f, cfg, CollisionPolicy::KeepFirst);
  CHECK(first.tensor[cell].source_index == 0);
}

TEST_CASE("empty frame is all no-return") {
  const auto cfg = SensorConfig::uniform(8, -10.0, 10.0, 0.5, 100.0);
  const auto res = tensorize_frame(Frame{}, cfg);
  CHECK(res.tensor.size() == cfg.cell_count());
  for (const auto& c : res.tensor.cells()) CHECK_FALSE(c.returned);
}

TEST_CASE("beam ids outside the layout are rejected") {
  const auto cfg = SensorConfig::uniform(2, -1.0, 1.0, 1.0, 100.0);
  Frame f;
  f.points.push_back(PointRecord::spherical(0, 2, 10.0, 5.0, 1.0));
  CHECK_THROWS_AS(tensorize_frame(f, cfg), BeamOutOfRange);
}

TEST_CASE("cartesian input recomputes the azimuth") {
  const auto cfg = SensorConfig::uniform(2, -1.0, 1.0, 1.0, 100.0);
  Frame f;
  const Vec3 p = spherical_to_cartesian(20.0, 0.0, 100.5);
  f.points.push_back(PointRecord::cartesian(0, 0, 3.0, {p.x(), p.y(), p.z()}, 9.0));
  const auto res = tensorize_frame(f, cfg);
  CHECK(res.point_cells[0] == static_cast<std::int64_t>(azimuth_bin(100.5, cfg)));
}
