#include <algorithm>
#include <cmath>

#include "lidarbg/detect.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const double len = (b - a).norm();
  const double tol = 1e-12 * std::max(1.0, len);
  if (std::abs(cross(a, b, p)) > tol * std::max(1.0, len)) return false;
  return p.x() >= std::min(a.x(), b.x()) - tol && p.x() <= std::max(a.x(), b.x()) + tol &&
         p.y() >= std::min(a.y(), b.y()) - tol && p.y() <= std::max(a.y(), b.y()) + tol;
}

int orientation(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = cross(a, b, c);
  return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(q1, p1, p2)) return true;
  if (o2 == 0 && on_segment(q2, p1, p2)) return true;
  if (o3 == 0 && on_segment(p1, q1, q2)) return true;
  if (o4 == 0 && on_segment(p2, q1, q2)) return true;
  return false;
}

}  // namespace

void GeofencePolygon::validate() const {
  const auto n = vertices.size();
  if (n < 3) throw InvalidPolygon("geofence polygon needs at least 3 vertices");
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw InvalidPolygon("geofence vertex is not finite");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = vertices[i];
    const auto& b = vertices[(i + 1) % n];
    if (a == b) throw InvalidPolygon("geofence polygon has a zero-length edge");
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(a, b, vertices[j], vertices[(j + 1) % n])) {
        throw InvalidPolygon("geofence polygon is self-intersecting");
      }
    }
  }
}

bool GeofencePolygon::contains(const Vec2& p) const {
  // Winding number; boundary points are inside.
  const auto n = vertices.size();
  int winding = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = vertices[i];
    const auto& b = vertices[(i + 1) % n];
    if (on_segment(p, a, b)) return true;
    if (a.y() <= p.y()) {
      if (b.y() > p.y() && cross(a, b, p) > 0) ++winding;
    } else if (b.y() <= p.y() && cross(a, b, p) < 0) {
      --winding;
    }
  }
  return winding != 0;
}

std::vector<std::size_t> geofence_filter(std::span<const Vec3> points, std::span<const GeofencePolygon> polygons) {
  bool any_include = false;
  for (const auto& poly : polygons) {
    poly.validate();
    any_include = any_include || poly.mode == FenceMode::Include;
  }
  std::vector<std::size_t> kept;
  kept.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec2 xy = points[i].head<2>();
    bool inside = !any_include;
    for (const auto& poly : polygons) {
      if (poly.mode == FenceMode::Include && !inside && poly.contains(xy)) inside = true;
    }
    if (inside) {
      for (const auto& poly : polygons) {
        if (poly.mode == FenceMode::Exclude && poly.contains(xy)) {
          inside = false;
          break;
        }
      }
    }
    if (inside) kept.push_back(i);
  }
  return kept;
}

}  // namespace lidarbg
