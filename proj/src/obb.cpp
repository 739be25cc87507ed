#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "lidarbg/detect.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

bool OrientedBox::contains(const Vec3& p, double inflate) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const Vec3 d = p - center;
  const double u = c * d.x() + s * d.y();
  const double v = -s * d.x() + c * d.y();
  return std::abs(u) <= 0.5 * length + inflate && std::abs(v) <= 0.5 * width + inflate &&
         std::abs(d.z()) <= 0.5 * height + inflate;
}

OrientedBox fit_obb(std::span<const Vec3> cluster) {
  if (cluster.size() < 3) throw DegenerateCluster("bounding box needs at least 3 points");

  Vec2 mean = Vec2::Zero();
  for (const auto& p : cluster) mean += p.head<2>();
  mean /= static_cast<double>(cluster.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : cluster) {
    const Vec2 d = p.head<2>() - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(cluster.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const Vec2 major = eig.eigenvectors().col(1);  // eigenvalues ascending
  if (!(std::sqrt(std::max(0.0, eig.eigenvalues()[0])) > 1e-9)) {
    throw DegenerateCluster("cluster footprint is collinear");
  }

  double yaw = std::atan2(major.y(), major.x());
  auto project = [&](double heading, double& lo_u, double& hi_u, double& lo_v, double& hi_v) {
    const double c = std::cos(heading);
    const double s = std::sin(heading);
    lo_u = lo_v = std::numeric_limits<double>::infinity();
    hi_u = hi_v = -std::numeric_limits<double>::infinity();
    for (const auto& p : cluster) {
      const double u = c * p.x() + s * p.y();
      const double v = -s * p.x() + c * p.y();
      lo_u = std::min(lo_u, u);
      hi_u = std::max(hi_u, u);
      lo_v = std::min(lo_v, v);
      hi_v = std::max(hi_v, v);
    }
  };

  double lo_u, hi_u, lo_v, hi_v;
  project(yaw, lo_u, hi_u, lo_v, hi_v);
  if (hi_v - lo_v > hi_u - lo_u) {
    yaw += 0.5 * std::numbers::pi;
    project(yaw, lo_u, hi_u, lo_v, hi_v);
  }
  yaw = std::fmod(yaw, std::numbers::pi);
  if (yaw < 0.0) yaw += std::numbers::pi;
  if (yaw >= std::numbers::pi) yaw -= std::numbers::pi;
  project(yaw, lo_u, hi_u, lo_v, hi_v);

  double zmin = cluster[0].z();
  double zmax = zmin;
  for (const auto& p : cluster) {
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }

  OrientedBox box;
  box.yaw = yaw;
  box.length = hi_u - lo_u;
  box.width = hi_v - lo_v;
  box.height = zmax - zmin;
  const double uc = 0.5 * (lo_u + hi_u);
  const double vc = 0.5 * (lo_v + hi_v);
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  box.center = Vec3(c * uc - s * vc, s * uc + c * vc, 0.5 * (zmin + zmax));
  return box;
}

}  // namespace lidarbg
