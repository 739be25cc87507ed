#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace lidarbg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Normal-Inverse-Wishart prior over a 3-D Gaussian's mean and covariance.
struct NIWPrior {
  Vec3 mu0 = Vec3::Zero();
  double kappa0 = 0.1;
  double nu0 = 5.0;
  Mat3 psi0 = 0.05 * Mat3::Identity();

  /// Throws DomainError on kappa0 <= 0, nu0 <= 2, or a non-symmetric or
  /// non-positive-definite psi0.
  void validate() const;
};

/// Weighted sufficient statistics: total weight, weighted mean, weighted
/// scatter about that mean. Absorbing a point with weight m is algebraically
/// identical to absorbing it m times with weight 1.
struct WeightedStats {
  double weight = 0.0;
  Vec3 mean = Vec3::Zero();
  Mat3 scatter = Mat3::Zero();

  void add(const Vec3& x, double w);
  /// Inverse of add. Leaves an empty accumulator when the weight runs out.
  void remove(const Vec3& x, double w);
};

struct NIWPosterior {
  double kappa = 0.0;
  double nu = 0.0;
  Vec3 mu = Vec3::Zero();
  Mat3 psi = Mat3::Zero();
};

NIWPosterior posterior(const NIWPrior& prior, const WeightedStats& stats);

/// Multivariate student-t with a pre-factored scale matrix.
class StudentT3 {
 public:
  StudentT3() = default;
  StudentT3(const Vec3& location, const Mat3& scale, double dof);

  double log_pdf(const Vec3& x) const;
  double pdf(const Vec3& x) const;

  const Vec3& location() const noexcept { return location_; }
  const Mat3& scale() const noexcept { return scale_; }
  double dof() const noexcept { return dof_; }

 private:
  Vec3 location_ = Vec3::Zero();
  Mat3 scale_ = Mat3::Identity();
  Eigen::LLT<Mat3> llt_;
  double dof_ = 1.0;
  double log_norm_ = 0.0;
};

/// Added to every scale matrix before factorization.
inline constexpr double kCovarianceJitter = 1e-6;

/// Posterior predictive of the NIW posterior: location mu, dof nu - d + 1,
/// scale psi (kappa + 1) / (kappa (nu - d + 1)).
StudentT3 predictive(const NIWPosterior& post);

/// log p(data) with the Gaussian parameters integrated out under the prior.
double log_marginal_likelihood(const NIWPrior& prior, const WeightedStats& stats);

}  // namespace lidarbg
