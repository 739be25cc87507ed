#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lidarbg/point_cloud_io.hpp"

namespace lidarbg {

using Vec3 = Eigen::Vector3d;

struct SensorConfig {
  int beams = 32;
  std::vector<double> elevation_deg;  // one per beam
  double rotation_hz = 10.0;
  double azimuth_resolution_deg = 0.2;
  int azimuth_bins = 1800;
  double max_range_m = 200.0;

  /// Throws ConfigError unless bins * resolution == 360 and the elevation
  /// table has one entry per beam.
  void validate() const;

  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(beams) * static_cast<std::size_t>(azimuth_bins);
  }

  /// Beams evenly spaced over [lowest_deg, highest_deg].
  static SensorConfig uniform(int beams, double lowest_deg, double highest_deg,
                              double azimuth_resolution_deg, double max_range_m, double rotation_hz = 10.0);

  friend bool operator==(const SensorConfig&, const SensorConfig&) = default;
};

struct Spherical {
  double range_m;
  double elevation_deg;
  double azimuth_deg;  // in (0, 360]
};

/// x = r cos(w) sin(a), y = r cos(w) cos(a), z = r sin(w); angles in degrees.
Vec3 spherical_to_cartesian(double range_m, double elevation_deg, double azimuth_deg);

/// Inverse of spherical_to_cartesian with azimuth mapped into (0, 360].
/// Throws OriginPoint for (0, 0, 0).
Spherical cartesian_to_spherical(const Vec3& p);

/// mod(floor(alpha / resolution) + 1, bins). Throws DomainError outside (0, 360].
int azimuth_bin(double azimuth_deg, const SensorConfig& config);

struct CellObservation {
  bool returned = false;
  Vec3 xyz = Vec3::Zero();
  double intensity = 0.0;
  std::int32_t source_index = -1;  // index into Frame::points, -1 when nothing landed

  static CellObservation no_return() { return {}; }
  static CellObservation at(const Vec3& p, double intensity) { return {true, p, intensity, -1}; }
};

enum class CollisionPolicy { KeepNearest, KeepStrongest, KeepFirst };

CollisionPolicy parse_collision_policy(std::string_view name);
std::string_view to_string(CollisionPolicy policy);

/// Dense beams x azimuth_bins grid for one frame. Cell (beam, bin) lives at
/// beam * bins + bin.
class FrameTensor {
 public:
  FrameTensor() = default;
  FrameTensor(std::uint64_t frame_id, int beams, int bins);

  std::uint64_t frame_id() const noexcept { return frame_id_; }
  int beams() const noexcept { return beams_; }
  int bins() const noexcept { return bins_; }
  std::size_t size() const noexcept { return cells_.size(); }

  std::size_t index(int beam, int bin) const noexcept {
    return static_cast<std::size_t>(beam) * static_cast<std::size_t>(bins_) + static_cast<std::size_t>(bin);
  }
  const CellObservation& at(int beam, int bin) const { return cells_[index(beam, bin)]; }
  CellObservation& at(int beam, int bin) { return cells_[index(beam, bin)]; }
  const CellObservation& operator[](std::size_t i) const { return cells_[i]; }
  CellObservation& operator[](std::size_t i) { return cells_[i]; }

  std::span<const CellObservation> cells() const noexcept { return cells_; }

  /// Intensity view (NaN where NoReturn), beam-major.
  std::vector<double> intensity_view() const;

 private:
  std::uint64_t frame_id_ = 0;
  int beams_ = 0;
  int bins_ = 0;
  std::vector<CellObservation> cells_;
};

struct TensorizeResult {
  FrameTensor tensor;
  /// Cell index for every input point (Return points only), -1 for NoReturn
  /// records and returns beyond max range.
  std::vector<std::int64_t> point_cells;
  /// Cartesian position of each Return point (zero for NoReturn).
  std::vector<Vec3> point_xyz;
  std::size_t collisions_dropped = 0;
  std::size_t out_of_range = 0;
};

/// Hashes each Return point into (beam_id, azimuth_bin). Cartesian input has
/// its azimuth recomputed from x, y, z.
TensorizeResult tensorize_frame(const Frame& frame, const SensorConfig& config,
                                CollisionPolicy policy = CollisionPolicy::KeepNearest);

}  // namespace lidarbg
