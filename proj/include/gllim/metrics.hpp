#pragma once

#include <Eigen/Dense>

#include "gllim/types.hpp"

namespace gllim {

/// Root mean-square error normalized by the truth's centered energy:
/// sqrt(sum (t_hat - t)^2 / sum (t - mean(t))^2). 0 perfect, 1 = predicting
/// the mean. Throws ConstantTruth when the denominator vanishes.
double nrmse(const Eigen::VectorXd& t_hat, const Eigen::VectorXd& t);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-sided
};

/// Classic paired t test on equal-length samples. Identical samples give
/// t = 0, p = 1; nonzero constant differences throw ZeroVariance.
TTestResult paired_ttest(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

namespace detail {
/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
/// CDF of Student's t with nu degrees of freedom.
double student_t_cdf(double t, double nu);
}  // namespace detail

}  // namespace gllim
