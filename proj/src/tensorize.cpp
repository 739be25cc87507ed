#include "lidarbg/tensorize.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Total order used by KeepNearest so the kept point never depends on input order.
bool nearer(const Vec3& a, double ia, const Vec3& b, double ib) {
  const double ra = a.squaredNorm();
  const double rb = b.squaredNorm();
  if (ra != rb) return ra < rb;
  if (ia != ib) return ia > ib;
  for (int k = 0; k < 3; ++k) {
    if (a[k] != b[k]) return a[k] < b[k];
  }
  return false;
}

bool stronger(const Vec3& a, double ia, const Vec3& b, double ib) {
  if (ia != ib) return ia > ib;
  return nearer(a, ia, b, ib);
}

}  // namespace

void SensorConfig::validate() const {
  if (beams <= 0) throw ConfigError("sensor.beams must be positive");
  if (static_cast<int>(elevation_deg.size()) != beams) {
    throw ConfigError("sensor.elevation_deg must have one entry per beam");
  }
  if (!(azimuth_resolution_deg > 0.0)) throw ConfigError("sensor.azimuth_resolution_deg must be positive");
  if (azimuth_bins <= 0) throw ConfigError("sensor.azimuth_bins must be positive");
  if (std::abs(azimuth_bins * azimuth_resolution_deg - 360.0) > 1e-9) {
    throw ConfigError("sensor.azimuth_bins * azimuth_resolution_deg must equal 360");
  }
  if (!(max_range_m > 0.0)) throw ConfigError("sensor.max_range_m must be positive");
  if (!(rotation_hz > 0.0)) throw ConfigError("sensor.rotation_hz must be positive");
  for (double e : elevation_deg) {
    if (!std::isfinite(e) || e < -90.0 || e > 90.0) throw ConfigError("sensor elevation outside [-90, 90]");
  }
}

SensorConfig SensorConfig::uniform(int beams, double lowest_deg, double highest_deg, double azimuth_resolution_deg,
                                   double max_range_m, double rotation_hz) {
  SensorConfig c;
  c.beams = beams;
  c.rotation_hz = rotation_hz;
  c.azimuth_resolution_deg = azimuth_resolution_deg;
  c.azimuth_bins = static_cast<int>(std::lround(360.0 / azimuth_resolution_deg));
  c.max_range_m = max_range_m;
  c.elevation_deg.resize(static_cast<std::size_t>(beams));
  for (int b = 0; b < beams; ++b) {
    const double t = beams == 1 ? 0.0 : static_cast<double>(b) / (beams - 1);
    c.elevation_deg[static_cast<std::size_t>(b)] = lowest_deg + t * (highest_deg - lowest_deg);
  }
  return c;
}

Vec3 spherical_to_cartesian(double range_m, double elevation_deg, double azimuth_deg) {
  const double w = elevation_deg * kDegToRad;
  const double a = azimuth_deg * kDegToRad;
  return {range_m * std::cos(w) * std::sin(a), range_m * std::cos(w) * std::cos(a), range_m * std::sin(w)};
}

Spherical cartesian_to_spherical(const Vec3& p) {
  const double r = p.norm();
  if (r == 0.0) throw OriginPoint();
  const double horizontal = std::hypot(p.x(), p.y());
  const double elevation = std::atan2(p.z(), horizontal) * kRadToDeg;
  double azimuth = std::atan2(p.x(), p.y()) * kRadToDeg;
  if (azimuth <= 0.0) azimuth += 360.0;
  if (azimuth > 360.0) azimuth = 360.0;
  return {r, elevation, azimuth};
}

int azimuth_bin(double azimuth_deg, const SensorConfig& config) {
  if (!(azimuth_deg > 0.0 && azimuth_deg <= 360.0)) {
    throw DomainError("azimuth " + std::to_string(azimuth_deg) + " outside (0, 360]");
  }
  const auto slot = static_cast<long long>(std::floor(azimuth_deg / config.azimuth_resolution_deg)) + 1;
  return static_cast<int>(slot % config.azimuth_bins);
}

CollisionPolicy parse_collision_policy(std::string_view name) {
  if (name == "nearest") return CollisionPolicy::KeepNearest;
  if (name == "strongest") return CollisionPolicy::KeepStrongest;
  if (name == "first") return CollisionPolicy::KeepFirst;
  throw ConfigError("unknown collision policy '" + std::string(name) + "'");
}

std::string_view to_string(CollisionPolicy policy) {
  switch (policy) {
    case CollisionPolicy::KeepNearest:
      return "nearest";
    case CollisionPolicy::KeepStrongest:
      return "strongest";
    case CollisionPolicy::KeepFirst:
      return "first";
  }
  return "nearest";
}

FrameTensor::FrameTensor(std::uint64_t frame_id, int beams, int bins)
    : frame_id_(frame_id),
      beams_(beams),
      bins_(bins),
      cells_(static_cast<std::size_t>(beams) * static_cast<std::size_t>(bins)) {}

std::vector<double> FrameTensor::intensity_view() const {
  std::vector<double> out(cells_.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i].returned) out[i] = cells_[i].intensity;
  }
  return out;
}

TensorizeResult tensorize_frame(const Frame& frame, const SensorConfig& config, CollisionPolicy policy) {
  TensorizeResult result;
  result.tensor = FrameTensor(frame.frame_id, config.beams, config.azimuth_bins);
  result.point_cells.assign(frame.points.size(), -1);
  result.point_xyz.assign(frame.points.size(), Vec3::Zero());

  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const auto& p = frame.points[i];
    if (p.beam_id < 0 || p.beam_id >= config.beams) {
      throw BeamOutOfRange("beam_id " + std::to_string(p.beam_id) + " outside [0, " + std::to_string(config.beams) +
                           ")");
    }
    if (!p.is_return()) continue;

    Vec3 xyz;
    double azimuth = p.azimuth_deg;
    if (p.xyz) {
      xyz = Vec3((*p.xyz)[0], (*p.xyz)[1], (*p.xyz)[2]);
      azimuth = cartesian_to_spherical(xyz).azimuth_deg;
    } else {
      xyz = spherical_to_cartesian(*p.range_m, config.elevation_deg[static_cast<std::size_t>(p.beam_id)], azimuth);
    }
    result.point_xyz[i] = xyz;
    if (!xyz.allFinite() || xyz.norm() > config.max_range_m) {
      ++result.out_of_range;
      continue;
    }
    const int bin = azimuth_bin(azimuth, config);
    const auto cell = result.tensor.index(p.beam_id, bin);
    result.point_cells[i] = static_cast<std::int64_t>(cell);

    auto& slot = result.tensor[cell];
    const double intensity = p.intensity.value_or(0.0);
    if (!slot.returned) {
      slot = CellObservation{true, xyz, intensity, static_cast<std::int32_t>(i)};
      continue;
    }
    ++result.collisions_dropped;
    bool replace = false;
    switch (policy) {
      case CollisionPolicy::KeepNearest:
        replace = nearer(xyz, intensity, slot.xyz, slot.intensity);
        break;
      case CollisionPolicy::KeepStrongest:
        replace = stronger(xyz, intensity, slot.xyz, slot.intensity);
        break;
      case CollisionPolicy::KeepFirst:
        break;
    }
    if (replace) slot = CellObservation{true, xyz, intensity, static_cast<std::int32_t>(i)};
  }
  return result;
}

}  // namespace lidarbg
