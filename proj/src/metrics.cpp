#include "gllim/metrics.hpp"

#include <cmath>

namespace gllim {

double nrmse(const Eigen::VectorXd& t_hat, const Eigen::VectorXd& t) {
  if (t_hat.size() != t.size()) {
    throw DimensionMismatch("nrmse: vector sizes disagree");
  }
  if (t.size() < 2) throw ConfigError("nrmse: need at least 2 entries");
  const double mean = t.mean();
  const double denom = (t.array() - mean).square().sum();
  if (!(denom > 0.0)) {
    throw ConstantTruth("nrmse: ground truth is constant");
  }
  return std::sqrt((t_hat - t).squaredNorm() / denom);
}

namespace detail {

namespace {

double log_gamma(double x) { return std::lgamma(x); }

// Lentz continued fraction for the incomplete beta.
double beta_cf(double a, double b, double x) {
  constexpr int max_iter = 300;
  constexpr double eps = 3e-15;
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = log_gamma(a + b) - log_gamma(a) - log_gamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double nu) {
  const double x = nu / (nu + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * nu, 0.5, x);
  return t >= 0.0 ? 1.0 - tail : tail;
}

}  // namespace detail

TTestResult paired_ttest(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("paired_ttest: sample sizes disagree");
  }
  const auto n = a.size();
  if (n < 2) throw ConfigError("paired_ttest: need at least 2 pairs");
  const Eigen::VectorXd d = a - b;
  const double mean = d.mean();
  const double var = (d.array() - mean).square().sum() / static_cast<double>(n - 1);
  if (!(var > 0.0)) {
    if (mean == 0.0) return TTestResult{0.0, 1.0};  // identical samples
    throw ZeroVariance("paired_ttest: differences have zero variance");
  }
  TTestResult result;
  result.t = mean / std::sqrt(var / static_cast<double>(n));
  const double nu = static_cast<double>(n - 1);
  result.p = 2.0 * (1.0 - detail::student_t_cdf(std::abs(result.t), nu));
  return result;
}

}  // namespace gllim
