#include "lidarbg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "lidarbg/csv.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double wrap_azimuth(double a) {
  a = std::fmod(a, 360.0);
  if (a <= 0.0) a += 360.0;
  return a;
}

double clipped_normal(std::mt19937_64& rng, double sd) {
  if (!(sd > 0.0)) return 0.0;
  std::normal_distribution<double> n(0.0, sd);
  const double v = n(rng);
  return std::clamp(v, -kJitterClipSigmas * sd, kJitterClipSigmas * sd);
}

double quantize_intensity(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

enum class HitKind : std::uint8_t { None, Static, Mover, Snow };

struct CellHit {
  HitKind kind = HitKind::None;
  double range = kInf;
  double reflectivity = 0.0;
  std::int64_t mover = -1;
};

struct ActiveMover {
  std::size_t index;
  OrientedBox box;
  double cos_yaw, sin_yaw;
};

std::optional<double> ray_cylinder(const Vec3& dir, const Pole& pole, double ground_z) {
  const double dx = dir.x(), dy = dir.y();
  const double a = dx * dx + dy * dy;
  if (a <= 0.0) return std::nullopt;
  const double b = -2.0 * (dx * pole.center.x() + dy * pole.center.y());
  const double c = pole.center.squaredNorm() - pole.radius * pole.radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
    if (t <= 0.0) continue;
    const double z = t * dir.z();
    if (z >= ground_z && z <= ground_z + pole.height) return t;
  }
  return std::nullopt;
}

std::optional<double> ray_obb(const Vec3& dir, const ActiveMover& m) {
  // Origin is the sensor at (0, 0, 0); move it into the box frame.
  const Vec3 o = -m.box.center;
  const Vec3 lo(-0.5 * m.box.length, -0.5 * m.box.width, -0.5 * m.box.height);
  const Vec3 local_o(m.cos_yaw * o.x() + m.sin_yaw * o.y(), -m.sin_yaw * o.x() + m.cos_yaw * o.y(), o.z());
  const Vec3 local_d(m.cos_yaw * dir.x() + m.sin_yaw * dir.y(), -m.sin_yaw * dir.x() + m.cos_yaw * dir.y(), dir.z());
  return ray_aabb(local_o, local_d, lo, -lo);
}

}  // namespace

std::string_view to_string(PointLabel l) {
  switch (l) {
    case PointLabel::Background:
      return "background";
    case PointLabel::Foreground:
      return "foreground";
    case PointLabel::Clutter:
      return "clutter";
  }
  return "background";
}

PointLabel parse_point_label(std::string_view name) {
  if (name == "background") return PointLabel::Background;
  if (name == "foreground") return PointLabel::Foreground;
  if (name == "clutter") return PointLabel::Clutter;
  throw FormatError(0, "unknown point label '" + std::string(name) + "'");
}

std::optional<double> ray_aabb(const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi) {
  double t0 = -kInf;
  double t1 = kInf;
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (origin[k] < lo[k] || origin[k] > hi[k]) return std::nullopt;
      continue;
    }
    double a = (lo[k] - origin[k]) / dir[k];
    double b = (hi[k] - origin[k]) / dir[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::nullopt;
  }
  if (t1 <= 0.0) return std::nullopt;
  if (t0 > 0.0) return t0;
  return std::nullopt;  // origin inside the box: no visible surface from here
}

void SceneConfig::validate() const {
  sensor.validate();
  if (!(sensor_height_m > 0.0)) throw ConfigError("sensor_height_m must be > 0");
  if (snow_rate < 0.0 || angular_jitter_sd_deg < 0.0 || azimuth_drift_deg < 0.0 || range_noise_sd_m < 0.0 ||
      static_intensity_sd < 0.0 || mover_intensity_sd < 0.0) {
    throw ConfigError("scene rates and noise levels must be >= 0");
  }
  if (!(no_return_probability >= 0.0 && no_return_probability <= 1.0)) {
    throw ConfigError("no_return_probability must lie in [0, 1]");
  }
  if (reference_reflectivity < 0.0) throw ConfigError("reference_reflectivity must be >= 0");
  if (!(snow_min_range_m > 0.0 && snow_max_range_m >= snow_min_range_m)) throw ConfigError("bad snow shell");
  for (const auto& m : movers) {
    if (m.waypoints.size() < 2) throw ConfigError("mover path needs at least 2 waypoints");
    if (!(m.speed > 0.0) || !(m.length > 0.0) || !(m.width > 0.0) || !(m.height > 0.0)) {
      throw ConfigError("mover speed and dimensions must be > 0");
    }
  }
  for (const auto& b : buildings) {
    if (!(b.max.array() > b.min.array()).all()) throw ConfigError("building box has non-positive extent");
  }
}

SceneGenerator::SceneGenerator(SceneConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const auto& m : config_.movers) {
    double len = 0.0;
    for (std::size_t i = 1; i < m.waypoints.size(); ++i) len += (m.waypoints[i] - m.waypoints[i - 1]).norm();
    path_lengths_.push_back(len);
  }
}

double SceneGenerator::timestamp(std::uint64_t frame_index) const {
  return static_cast<double>(frame_index) / config_.sensor.rotation_hz;
}

std::optional<OrientedBox> SceneGenerator::mover_box(std::size_t mover, double t) const {
  const auto& m = config_.movers[mover];
  double s = (t - m.start_time) * m.speed;
  if (s < 0.0 || s > path_lengths_[mover]) return std::nullopt;
  for (std::size_t i = 1; i < m.waypoints.size(); ++i) {
    const Vec2 seg = m.waypoints[i] - m.waypoints[i - 1];
    const double len = seg.norm();
    if (s <= len || i + 1 == m.waypoints.size()) {
      const Vec2 dir = len > 0.0 ? Vec2(seg / len) : Vec2(1.0, 0.0);
      const Vec2 p = m.waypoints[i - 1] + std::min(s, len) * dir;
      OrientedBox box;
      box.length = std::max(m.length, m.width);
      box.width = std::min(m.length, m.width);
      box.height = m.height;
      double yaw = std::atan2(dir.y(), dir.x());
      if (m.width > m.length) yaw += 0.5 * std::numbers::pi;
      yaw = std::fmod(yaw, std::numbers::pi);
      if (yaw < 0.0) yaw += std::numbers::pi;
      box.yaw = yaw;
      box.center = Vec3(p.x(), p.y(), -config_.sensor_height_m + m.clearance + 0.5 * m.height);
      return box;
    }
    s -= len;
  }
  return std::nullopt;
}

void SceneGenerator::generate(std::uint64_t frame_index, Frame& frame, FrameTruth& truth) const {
  const auto& sensor = config_.sensor;
  const double t = timestamp(frame_index);
  const double ground_z = -config_.sensor_height_m;
  std::mt19937_64 rng(splitmix64(config_.seed * 0x100000001b3ULL + frame_index));

  frame.frame_id = frame_index;
  frame.timestamp = t;
  frame.points.clear();
  truth = FrameTruth{};

  std::vector<ActiveMover> active;
  for (std::size_t m = 0; m < config_.movers.size(); ++m) {
    if (auto box = mover_box(m, t)) {
      active.push_back({m, *box, std::cos(box->yaw), std::sin(box->yaw)});
      truth.boxes.push_back({m + 1, *box, config_.movers[m].object_class, 0});
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double drift = config_.azimuth_drift_deg > 0.0
                           ? std::uniform_real_distribution<double>(-config_.azimuth_drift_deg,
                                                                     config_.azimuth_drift_deg)(rng)
                           : 0.0;

  const auto bins = static_cast<std::size_t>(sensor.azimuth_bins);
  std::vector<CellHit> hits(sensor.cell_count());
  std::vector<double> reported_azimuth(bins);
  for (std::size_t s = 0; s < bins; ++s) {
    reported_azimuth[s] = wrap_azimuth((static_cast<double>(s) + 0.5) * sensor.azimuth_resolution_deg + drift);
  }

  for (int b = 0; b < sensor.beams; ++b) {
    const double elevation = sensor.elevation_deg[static_cast<std::size_t>(b)];
    for (std::size_t s = 0; s < bins; ++s) {
      const double ja = clipped_normal(rng, config_.angular_jitter_sd_deg);
      const double je = clipped_normal(rng, config_.angular_jitter_sd_deg);
      const double dropout = unit(rng);
      const double range_noise = clipped_normal(rng, config_.range_noise_sd_m);
      const Vec3 dir = spherical_to_cartesian(1.0, elevation + je, reported_azimuth[s] + ja);

      CellHit hit;
      if (dir.z() < 0.0) {
        hit = {HitKind::Static, ground_z / dir.z(), config_.ground_reflectivity, -1};
      }
      for (const auto& bld : config_.buildings) {
        if (auto d = ray_aabb(Vec3::Zero(), dir, bld.min, bld.max); d && *d < hit.range) {
          hit = {HitKind::Static, *d, bld.reflectivity, -1};
        }
      }
      for (const auto& pole : config_.poles) {
        if (auto d = ray_cylinder(dir, pole, ground_z); d && *d < hit.range) {
          hit = {HitKind::Static, *d, pole.reflectivity, -1};
        }
      }
      for (const auto& m : active) {
        if (auto d = ray_obb(dir, m); d && *d < hit.range) {
          hit = {HitKind::Mover, *d, config_.movers[m.index].reflectivity, static_cast<std::int64_t>(m.index)};
        }
      }
      if (hit.kind != HitKind::None) {
        hit.range = std::max(0.0, hit.range + range_noise);
        double reach = sensor.max_range_m;
        if (config_.reference_reflectivity > 0.0) {
          reach *= std::sqrt(std::min(1.0, hit.reflectivity / config_.reference_reflectivity));
        }
        if (hit.range > reach || dropout < config_.no_return_probability) hit = CellHit{};
      }
      hits[static_cast<std::size_t>(b) * bins + s] = hit;
    }
  }

  if (config_.snow_rate > 0.0) {
    std::poisson_distribution<int> flakes(config_.snow_rate);
    std::uniform_int_distribution<int> beam(0, sensor.beams - 1);
    std::uniform_int_distribution<std::size_t> slot(0, bins - 1);
    std::uniform_real_distribution<double> range(config_.snow_min_range_m, config_.snow_max_range_m);
    const int n = flakes(rng);
    for (int i = 0; i < n; ++i) {
      const auto cell = static_cast<std::size_t>(beam(rng)) * bins + slot(rng);
      const double r = range(rng);
      if (r < hits[cell].range && r <= sensor.max_range_m) hits[cell] = {HitKind::Snow, r, 0.0, -1};
    }
  }

  std::normal_distribution<double> static_noise(0.0, std::max(config_.static_intensity_sd, 1e-12));
  std::normal_distribution<double> mover_noise(0.0, std::max(config_.mover_intensity_sd, 1e-12));
  std::uniform_int_distribution<int> snow_intensity(1, 12);
  for (int b = 0; b < sensor.beams; ++b) {
    for (std::size_t s = 0; s < bins; ++s) {
      const auto& hit = hits[static_cast<std::size_t>(b) * bins + s];
      if (hit.kind == HitKind::None) {
        if (config_.emit_no_return) {
          frame.points.push_back(PointRecord::no_return(frame_index, b, reported_azimuth[s]));
          truth.labels.push_back(PointLabel::Background);
          truth.object_ids.push_back(-1);
        }
        continue;
      }
      double intensity = 0.0;
      PointLabel label = PointLabel::Background;
      switch (hit.kind) {
        case HitKind::Static:
          intensity = quantize_intensity(hit.reflectivity + static_noise(rng));
          break;
        case HitKind::Mover:
          intensity = quantize_intensity(hit.reflectivity + mover_noise(rng));
          label = PointLabel::Foreground;
          break;
        case HitKind::Snow:
          intensity = snow_intensity(rng);
          label = PointLabel::Clutter;
          break;
        case HitKind::None:
          break;
      }
      frame.points.push_back(PointRecord::spherical(frame_index, b, reported_azimuth[s], hit.range, intensity));
      truth.labels.push_back(label);
      truth.object_ids.push_back(hit.kind == HitKind::Mover ? static_cast<std::int64_t>(hit.mover) + 1 : -1);
      if (hit.kind == HitKind::Mover) {
        for (auto& tb : truth.boxes) {
          if (tb.object_id == static_cast<std::uint64_t>(hit.mover) + 1) ++tb.visible_points;
        }
      }
    }
  }
}

std::vector<TrajectorySample> SceneGenerator::true_trajectories() const {
  std::vector<TrajectorySample> out;
  for (std::uint64_t f = 0; f < config_.duration_frames; ++f) {
    const double t = timestamp(f);
    for (std::size_t m = 0; m < config_.movers.size(); ++m) {
      if (auto box = mover_box(m, t)) {
        TrajectorySample s;
        s.track_id = m + 1;
        s.frame_id = f;
        s.timestamp = t;
        s.position = box->center;
        s.yaw = box->yaw;
        s.speed = config_.movers[m].speed;
        s.object_class = config_.movers[m].object_class;
        s.status = TrackStatus::Confirmed;
        out.push_back(s);
      }
    }
  }
  return out;
}

MovementCounts SceneGenerator::true_counts() const {
  const auto traj = true_trajectories();
  return count_movements(traj, config_.screenline);
}

std::pair<std::vector<Frame>, GroundTruth> generate_scene(const SceneConfig& config) {
  SceneGenerator gen(config);
  std::vector<Frame> frames(gen.frame_count());
  GroundTruth gt;
  gt.frames.resize(gen.frame_count());
  for (std::uint64_t f = 0; f < gen.frame_count(); ++f) gen.generate(f, frames[f], gt.frames[f]);
  gt.trajectories = gen.true_trajectories();
  gt.counts = count_movements(gt.trajectories, config.screenline);
  return {std::move(frames), std::move(gt)};
}

double background_fraction(std::span<const FrameTruth> truth) {
  std::uint64_t total = 0;
  std::uint64_t background = 0;
  for (const auto& f : truth) {
    total += f.labels.size();
    background += static_cast<std::uint64_t>(std::count(f.labels.begin(), f.labels.end(), PointLabel::Background));
  }
  if (total == 0) throw EmptyInput("no points to measure");
  return static_cast<double>(background) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

SensorConfig preset_sensor() { return SensorConfig::uniform(32, -25.0, 5.0, 0.2, 120.0, 10.0); }

namespace {

// The sensor pole stands on the south-east corner of the intersection; scene
// layouts are written relative to the intersection centre.
const Vec2 kIntersection(-11.0, 11.0);

void shift_scene(SceneConfig& c, const Vec2& d) {
  const Vec3 d3(d.x(), d.y(), 0.0);
  for (auto& b : c.buildings) {
    b.min += d3;
    b.max += d3;
  }
  for (auto& p : c.poles) p.center += d;
  for (auto& m : c.movers) {
    for (auto& w : m.waypoints) w += d;
  }
  c.screenline.a += d;
  c.screenline.b += d;
}

void add_static_scene(SceneConfig& c) {
  const double g = -c.sensor_height_m;
  c.buildings = {
      {{15.0, 15.0, g}, {45.0, 50.0, g + 17.0}, 70.0},
      {{-50.0, 14.0, g}, {-16.0, 40.0, g + 13.0}, 55.0},
      {{-40.0, -45.0, g}, {-14.0, -15.0, g + 20.0}, 80.0},
      {{16.0, -35.0, g}, {55.0, -14.0, g + 11.0}, 62.0},
      // Low walls and kiosks near the corners give multi-surface cells.
      {{10.5, 12.0, g}, {13.0, 12.6, g + 1.2}, 110.0},
      {{-13.0, -12.8, g}, {-10.5, -12.0, g + 1.0}, 105.0},
  };
  c.poles = {
      {{10.0, 10.0}, 0.15, 8.0, 95.0},
      {{-10.0, 10.0}, 0.15, 8.0, 95.0},
      {{-10.0, -10.0}, 0.15, 8.0, 95.0},
      {{11.5, -24.0}, 0.1, 3.0, 140.0},
      {{-11.5, 26.0}, 0.1, 3.0, 140.0},
  };
  c.screenline = {{-8.0, 25.0}, {8.0, 25.0}};
}

MoverPath lane_vehicle(bool north_south, double offset, bool positive, double start_time, double speed,
                       ObjectClass cls, double length, double width, double height, double reflectivity) {
  MoverPath m;
  const double from = positive ? -110.0 : 110.0;
  const double to = -from;
  m.waypoints = north_south ? std::vector<Vec2>{{offset, from}, {offset, to}}
                            : std::vector<Vec2>{{from, offset}, {to, offset}};
  m.speed = speed;
  m.start_time = start_time;
  m.length = length;
  m.width = width;
  m.height = height;
  m.object_class = cls;
  m.reflectivity = reflectivity;
  m.clearance = cls == ObjectClass::Pedestrian ? 0.0 : 0.25;
  return m;
}

void add_traffic(SceneConfig& c, double headway_min, double headway_max, double pedestrian_every, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x7ad1c0ffeeULL));
  std::uniform_real_distribution<double> headway(headway_min, headway_max);
  std::uniform_real_distribution<double> speed(7.0, 13.0);
  std::uniform_real_distribution<double> refl(60.0, 180.0);
  std::uniform_real_distribution<double> kind(0.0, 1.0);
  const double duration = static_cast<double>(c.duration_frames) / c.sensor.rotation_hz;

  struct Lane {
    bool ns;
    double offset;
    bool positive;
  };
  const Lane lanes[] = {{true, 1.75, true}, {true, 5.25, true},   {true, -1.75, false}, {true, -5.25, false},
                        {false, -1.75, true}, {false, -5.25, true}, {false, 1.75, false}, {false, 5.25, false}};
  for (const auto& lane : lanes) {
    double t = -20.0 + headway(rng) * kind(rng);
    while (t < duration) {
      const double k = kind(rng);
      const double v = speed(rng);
      if (k < 0.85) {
        c.movers.push_back(lane_vehicle(lane.ns, lane.offset, lane.positive, t, v, ObjectClass::Car, 4.6, 1.85, 1.5,
                                        refl(rng)));
      } else if (k < 0.97) {
        c.movers.push_back(lane_vehicle(lane.ns, lane.offset, lane.positive, t, v, ObjectClass::Truck, 8.0, 2.4, 3.0,
                                        refl(rng)));
      } else {
        c.movers.push_back(lane_vehicle(lane.ns, lane.offset, lane.positive, t, v, ObjectClass::LargeFreight, 14.0,
                                        2.5, 4.0, refl(rng)));
      }
      // Keep a safe gap behind long vehicles.
      t += headway(rng) + c.movers.back().length / v;
    }
  }
  if (pedestrian_every > 0.0) {
    std::uniform_real_distribution<double> walk(1.0, 1.6);
    int side = 0;
    for (double t = -10.0; t < duration; t += pedestrian_every) {
      MoverPath p;
      const double x = (side % 2 == 0) ? 9.0 : -9.0;
      const double sign = (side / 2) % 2 == 0 ? 1.0 : -1.0;
      p.waypoints = {{x, -30.0 * sign}, {x, 30.0 * sign}};
      p.speed = walk(rng);
      p.start_time = t;
      p.length = 0.6;
      p.width = 0.5;
      p.height = 1.75;
      p.clearance = 0.0;
      p.reflectivity = 40.0;
      p.object_class = ObjectClass::Pedestrian;
      c.movers.push_back(p);
      ++side;
    }
  }
}

}  // namespace

std::vector<std::string> preset_names() { return {"clean-static", "snow-low-volume", "urban-peak"}; }

MoverPath crossing_vehicle(double start_time, double lane_x, double speed) {
  auto m = lane_vehicle(true, lane_x, true, start_time, speed, ObjectClass::Car, 4.6, 1.85, 1.5, 150.0);
  for (auto& w : m.waypoints) w += kIntersection;
  return m;
}

SceneConfig make_preset(std::string_view name, std::uint64_t seed) {
  SceneConfig c;
  c.sensor = preset_sensor();
  c.seed = seed;
  c.azimuth_drift_deg = 1.5 * c.sensor.azimuth_resolution_deg;
  add_static_scene(c);
  if (name == "clean-static") {
    c.duration_frames = 150;
  } else if (name == "snow-low-volume") {
    c.duration_frames = 200;
    c.snow_rate = 60.0;
    c.range_noise_sd_m = 0.12;  // wet surfaces and forward scatter
    add_traffic(c, 25.0, 45.0, 0.0, seed);
  } else if (name == "urban-peak") {
    c.duration_frames = 200;
    add_traffic(c, 10.0, 18.0, 8.0, seed);
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  shift_scene(c, kIntersection);
  return c;
}

// ---------------------------------------------------------------------------
// Sidecars
// ---------------------------------------------------------------------------

void write_truth_labels_header(std::ostream& out) { out << "frame_id,point_index,label,object_id\n"; }

void write_truth_labels(std::ostream& out, std::uint64_t frame_id, const FrameTruth& truth) {
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    out << frame_id << ',' << i << ',' << to_string(truth.labels[i]) << ',' << truth.object_ids[i] << '\n';
  }
}

void write_truth_boxes_header(std::ostream& out) {
  out << "frame_id,timestamp,object_id,cx,cy,cz,length,width,height,yaw,class,visible_points\n";
}

void write_truth_boxes(std::ostream& out, std::uint64_t frame_id, double timestamp, const FrameTruth& truth) {
  for (const auto& b : truth.boxes) {
    out << frame_id << ',' << csv::format_double(timestamp) << ',' << b.object_id << ','
        << csv::format_double(b.box.center.x()) << ',' << csv::format_double(b.box.center.y()) << ','
        << csv::format_double(b.box.center.z()) << ',' << csv::format_double(b.box.length) << ','
        << csv::format_double(b.box.width) << ',' << csv::format_double(b.box.height) << ','
        << csv::format_double(b.box.yaw) << ',' << to_string(b.object_class) << ',' << b.visible_points << '\n';
  }
}

}  // namespace lidarbg
