#include "lidarbg/niw.hpp"

#include <cmath>
#include <numbers>

#include "lidarbg/error.hpp"

namespace lidarbg {

namespace {
constexpr double kDim = 3.0;

double log_multigamma3(double a) {
  double s = 3.0 * std::log(std::numbers::pi) / 2.0;  // d(d-1)/4 * log(pi), d = 3
  for (int j = 0; j < 3; ++j) s += std::lgamma(a - 0.5 * j);
  return s;
}

double log_det_spd(const Mat3& m) {
  Eigen::LLT<Mat3> llt(m + kCovarianceJitter * Mat3::Identity());
  const Mat3 l = llt.matrixL();
  return 2.0 * (std::log(l(0, 0)) + std::log(l(1, 1)) + std::log(l(2, 2)));
}
}  // namespace

void NIWPrior::validate() const {
  if (!(kappa0 > 0.0)) throw DomainError("NIW kappa0 must be > 0");
  if (!(nu0 > kDim - 1.0)) throw DomainError("NIW nu0 must exceed dimension - 1");
  if (!mu0.allFinite() || !psi0.allFinite()) throw DomainError("NIW parameters must be finite");
  if ((psi0 - psi0.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("NIW psi0 must be symmetric");
  Eigen::LLT<Mat3> llt(psi0);
  if (llt.info() != Eigen::Success) throw DomainError("NIW psi0 must be positive definite");
}

void WeightedStats::add(const Vec3& x, double w) {
  if (!(w > 0.0)) return;
  const double total = weight + w;
  const Vec3 delta = x - mean;
  scatter.noalias() += (w * weight / total) * delta * delta.transpose();
  mean += (w / total) * delta;
  weight = total;
}

void WeightedStats::remove(const Vec3& x, double w) {
  if (!(w > 0.0)) return;
  const double total = weight - w;
  if (total <= 1e-12 * std::max(1.0, weight)) {
    *this = WeightedStats{};
    return;
  }
  const Vec3 old_mean = (weight * mean - w * x) / total;
  const Vec3 delta = x - old_mean;
  scatter.noalias() -= (w * total / weight) * delta * delta.transpose();
  scatter = 0.5 * (scatter + scatter.transpose());
  mean = old_mean;
  weight = total;
}

NIWPosterior posterior(const NIWPrior& prior, const WeightedStats& s) {
  NIWPosterior p;
  p.kappa = prior.kappa0 + s.weight;
  p.nu = prior.nu0 + s.weight;
  p.mu = (prior.kappa0 * prior.mu0 + s.weight * s.mean) / p.kappa;
  const Vec3 d = s.mean - prior.mu0;
  p.psi = prior.psi0 + s.scatter + (prior.kappa0 * s.weight / p.kappa) * d * d.transpose();
  return p;
}

StudentT3::StudentT3(const Vec3& location, const Mat3& scale, double dof)
    : location_(location), scale_(scale), dof_(dof) {
  llt_.compute(scale_ + kCovarianceJitter * Mat3::Identity());
  const Mat3 l = llt_.matrixL();
  const double log_det = 2.0 * (std::log(l(0, 0)) + std::log(l(1, 1)) + std::log(l(2, 2)));
  log_norm_ = std::lgamma(0.5 * (dof_ + kDim)) - std::lgamma(0.5 * dof_) -
              0.5 * kDim * std::log(dof_ * std::numbers::pi) - 0.5 * log_det;
}

double StudentT3::log_pdf(const Vec3& x) const {
  const Vec3 z = llt_.matrixL().solve(x - location_);
  return log_norm_ - 0.5 * (dof_ + kDim) * std::log1p(z.squaredNorm() / dof_);
}

double StudentT3::pdf(const Vec3& x) const { return std::exp(log_pdf(x)); }

StudentT3 predictive(const NIWPosterior& post) {
  const double dof = post.nu - kDim + 1.0;
  const Mat3 scale = post.psi * ((post.kappa + 1.0) / (post.kappa * dof));
  return StudentT3(post.mu, scale, dof);
}

double log_marginal_likelihood(const NIWPrior& prior, const WeightedStats& stats) {
  const NIWPosterior post = posterior(prior, stats);
  return -0.5 * stats.weight * kDim * std::log(std::numbers::pi) + log_multigamma3(0.5 * post.nu) -
         log_multigamma3(0.5 * prior.nu0) + 0.5 * prior.nu0 * log_det_spd(prior.psi0) -
         0.5 * post.nu * log_det_spd(post.psi) + 0.5 * kDim * std::log(prior.kappa0 / post.kappa);
}

}  // namespace lidarbg
