#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace lidarbg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// Geofencing
// ---------------------------------------------------------------------------

enum class FenceMode { Include, Exclude };

struct GeofencePolygon {
  std::vector<Vec2> vertices;  // sensor XY plane, either winding
  FenceMode mode = FenceMode::Include;

  /// Throws InvalidPolygon on fewer than 3 vertices or self-intersection.
  void validate() const;
  /// Boundary counts as inside.
  bool contains(const Vec2& p) const;
};

/// Keeps points inside the union of Include polygons (everything, when there
/// are none) and outside every Exclude polygon. Returns kept indices.
std::vector<std::size_t> geofence_filter(std::span<const Vec3> points, std::span<const GeofencePolygon> polygons);

// ---------------------------------------------------------------------------
// Local outlier factor
// ---------------------------------------------------------------------------

struct LofOptions {
  std::size_t k = 10;
  double threshold = 1.5;
};

/// LOF score per point. Fewer than k + 1 points yields all-ones.
std::vector<double> lof_scores(std::span<const Vec3> points, std::size_t k);

/// Indices of points whose LOF does not exceed the threshold.
std::vector<std::size_t> lof_filter(std::span<const Vec3> points, const LofOptions& options);

// ---------------------------------------------------------------------------
// DBSCAN
// ---------------------------------------------------------------------------

struct DbscanOptions {
  double eps = 0.8;
  std::size_t min_pts = 5;     // neighborhood size including the point itself
  double range_scale_reference_m = 15.0;  // > 0 enables eps * max(1, range / reference); 0 disables
};

struct Clustering {
  std::vector<std::vector<std::size_t>> clusters;  // each sorted; ordered by smallest member
  std::vector<std::size_t> noise;
};

/// Border points join the cluster of their nearest core neighbor (ties to the
/// lower index), which makes the partition independent of input order.
Clustering dbscan(std::span<const Vec3> points, const DbscanOptions& options);

// ---------------------------------------------------------------------------
// Oriented boxes and classification
// ---------------------------------------------------------------------------

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  double length = 0.0;  // along yaw, >= width
  double width = 0.0;
  double height = 0.0;
  double yaw = 0.0;  // radians in [0, pi)

  bool contains(const Vec3& p, double inflate = 1e-6) const;
  double footprint_area() const noexcept { return length * width; }
};

/// PCA of the XY covariance for the heading, extents from the projected
/// points, height from the z range. Throws DegenerateCluster for fewer than
/// 3 points or an XY footprint collinear within 1e-9.
OrientedBox fit_obb(std::span<const Vec3> cluster);

enum class ObjectClass : std::uint8_t { Pedestrian, Car, Truck, LargeFreight, Unknown };

std::string_view to_string(ObjectClass c);
ObjectClass parse_object_class(std::string_view name);

/// Thresholds in meters and m/s.
struct ClassRules {
  double pedestrian_max_length = 1.2;
  double pedestrian_min_height = 1.0;
  double pedestrian_max_height = 2.2;
  double pedestrian_max_speed = 3.0;
  double car_min_length = 3.0;
  double car_max_length = 6.0;
  double car_max_height = 2.2;
  double truck_max_length = 10.0;
  double truck_max_height = 3.5;
};

/// LargeFreight: L > 10 or H > 3.5. Truck: L in (6, 10], or L in [3, 6] with
/// H in [2.2, 3.5]. Car: L in [3, 6] with H < 2.2. Pedestrian: L < 1.2,
/// H in [1, 2.2], v < 3. Anything else is Unknown.
ObjectClass classify_object(const OrientedBox& box, double speed, const ClassRules& rules = {});

struct Detection {
  Vec3 centroid = Vec3::Zero();
  OrientedBox box;
  std::size_t point_count = 0;
  ObjectClass object_class = ObjectClass::Unknown;
};

}  // namespace lidarbg
