#include "gllim/gaussian.hpp"

#include <cmath>
#include <limits>

namespace gllim {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov, int component) {
  const auto dim = cov.rows();
  if (dim != cov.cols()) {
    throw DimensionMismatch("cholesky_lower: matrix is not square");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd lower = llt.matrixL();
    if ((lower.diagonal().array() > 0.0).all()) return lower;
  }
  // One bounded jitter retry, then give up.
  const double jitter = 1e-10 * cov.trace() / static_cast<double>(dim);
  Eigen::MatrixXd padded = cov;
  padded.diagonal().array() += jitter;
  llt.compute(padded);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd lower = llt.matrixL();
    if ((lower.diagonal().array() > 0.0).all()) return lower;
  }
  std::string msg = "covariance is not positive definite";
  if (component >= 0) msg += " (component " + std::to_string(component) + ")";
  throw DegenerateCovariance(msg, component);
}

double log_gaussian(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::MatrixXd& cov) {
  if (x.size() != mean.size() || x.size() != cov.rows()) {
    throw DimensionMismatch("log_gaussian: x/mean/cov sizes disagree");
  }
  const Eigen::MatrixXd lower = cholesky_lower(cov);
  const Eigen::VectorXd z =
      lower.triangularView<Eigen::Lower>().solve(x - mean);
  const double log_det_half = lower.diagonal().array().log().sum();
  return -0.5 * static_cast<double>(x.size()) * kLog2Pi - log_det_half -
         0.5 * z.squaredNorm();
}

double log_gaussian_iso(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        double sigma2) {
  if (x.size() != mean.size()) {
    throw DimensionMismatch("log_gaussian_iso: x/mean sizes disagree");
  }
  if (!(sigma2 > 0.0)) {
    throw DegenerateCovariance("isotropic variance must be positive");
  }
  const double d = static_cast<double>(x.size());
  return -0.5 * d * (kLog2Pi + std::log(sigma2)) -
         0.5 * (x - mean).squaredNorm() / sigma2;
}

GaussianEvaluator::GaussianEvaluator(Eigen::VectorXd mean,
                                     const Eigen::MatrixXd& cov, int component)
    : mean_(std::move(mean)), chol_lower_(cholesky_lower(cov, component)) {
  if (mean_.size() != chol_lower_.rows()) {
    throw DimensionMismatch("GaussianEvaluator: mean/cov sizes disagree");
  }
  log_norm_ = -0.5 * static_cast<double>(mean_.size()) * kLog2Pi -
              chol_lower_.diagonal().array().log().sum();
}

double GaussianEvaluator::operator()(const Eigen::VectorXd& x) const {
  return log_density_residual(x - mean_);
}

double GaussianEvaluator::log_density_residual(
    const Eigen::VectorXd& residual) const {
  const Eigen::VectorXd z =
      chol_lower_.triangularView<Eigen::Lower>().solve(residual);
  return log_norm_ - 0.5 * z.squaredNorm();
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double vmax = v.maxCoeff();
  if (!std::isfinite(vmax)) return vmax;  // all -inf (or a nan propagates)
  return vmax + std::log((v.array() - vmax).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& log_scores) {
  const double vmax = log_scores.maxCoeff();
  if (!std::isfinite(vmax)) {
    return Eigen::VectorXd::Constant(
        log_scores.size(), 1.0 / static_cast<double>(log_scores.size()));
  }
  Eigen::VectorXd p = (log_scores.array() - vmax).exp();
  p /= p.sum();
  return p;
}

}  // namespace gllim
