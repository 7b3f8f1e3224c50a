#pragma once

#include <Eigen/Dense>

#include "gllim/types.hpp"

namespace gllim {

/// Lower Cholesky factor of a symmetric PD matrix. If the factorization
/// fails, 1e-10 * trace/dim is added to the diagonal and it is retried once;
/// a second failure throws DegenerateCovariance carrying `component`.
Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& cov, int component = -1);

/// log N(x; mean, cov), dense SPD covariance.
double log_gaussian(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::MatrixXd& cov);

/// log N(x; mean, sigma2 * I).
double log_gaussian_iso(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        double sigma2);

/// Fixed Gaussian evaluated many times: the Cholesky factor is computed once,
/// each call costs one triangular solve.
class GaussianEvaluator {
 public:
  GaussianEvaluator() = default;
  GaussianEvaluator(Eigen::VectorXd mean, const Eigen::MatrixXd& cov,
                    int component = -1);

  double operator()(const Eigen::VectorXd& x) const;
  /// log-density of (mean + residual); saves forming x when the caller
  /// already has the centered vector.
  double log_density_residual(const Eigen::VectorXd& residual) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_lower_;
  double log_norm_ = 0.0;  // -(d/2) log(2 pi) - sum log diag(chol)
};

double log_sum_exp(const Eigen::VectorXd& v);

/// exp-normalize of a log-score vector; all -inf rows come back uniform.
Eigen::VectorXd softmax(const Eigen::VectorXd& log_scores);

}  // namespace gllim
