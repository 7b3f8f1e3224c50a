#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "gllim/dataset.hpp"
#include "gllim/gaussian.hpp"
#include "gllim/model.hpp"
#include "gllim/potts.hpp"
#include "gllim/types.hpp"

namespace gllim {

/// Parameters of the high-to-low conditional p(x | y) for one component,
/// derived in closed form from the inverse parameters.
struct ForwardComponent {
  Eigen::VectorXd c_star;      // D
  Eigen::MatrixXd Gamma_star;  // D x D
  Eigen::MatrixXd A_star;      // L x D
  Eigen::VectorXd b_star;      // L
  Eigen::MatrixXd Sigma_star;  // L x L
};

/// The forward regression model: starred components plus the mixture
/// log-weights (identical to the inverse model's). Gating density
/// evaluators are cached at construction.
class ForwardModel {
 public:
  ForwardModel() = default;
  ForwardModel(Dims dims, std::vector<ForwardComponent> components,
               Eigen::VectorXd log_weights);

  const Dims& dims() const { return dims_; }
  int K() const { return static_cast<int>(components_.size()); }
  const ForwardComponent& component(int k) const {
    return components_[static_cast<std::size_t>(k)];
  }
  const Eigen::VectorXd& log_weights() const { return log_weights_; }

  /// log N(y; c_star_k, Gamma_star_k).
  double log_gate(const Eigen::VectorXd& y, int k) const {
    return gates_[static_cast<std::size_t>(k)](y);
  }
  /// All K gate log-densities for one observation.
  Eigen::VectorXd log_gates(const Eigen::VectorXd& y) const;

  /// Conditional mean A_star_k y + b_star_k.
  Eigen::VectorXd conditional_mean(const Eigen::VectorXd& y, int k) const;

 private:
  Dims dims_;
  std::vector<ForwardComponent> components_;
  Eigen::VectorXd log_weights_;
  std::vector<GaussianEvaluator> gates_;
};

/// Closed-form conversion of the learned inverse parameters, using the fully
/// assembled (observed + latent) response blocks:
///   c* = A c + b,  Gamma* = Sigma + A Gamma A^T,
///   Sigma* = (Gamma^-1 + A^T Sigma^-1 A)^-1,
///   A* = Sigma* A^T Sigma^-1,  b* = Sigma* (Gamma^-1 c - A^T Sigma^-1 b).
/// Gamma* gets a 1e-8 * trace/D diagonal guard before factorization (it is
/// an isotropic term plus a rank-L update and can be near-singular).
ForwardModel to_forward(const InverseModel& model);

/// The mixture form of p(x | y): normalized gate weights, per-component
/// conditional means and (shared per component) covariances.
struct ForwardMixture {
  Eigen::VectorXd weights;  // K, sums to 1
  Eigen::MatrixXd means;    // K x L
};

ForwardMixture forward_density(const ForwardModel& fm, const Eigen::VectorXd& y);

/// Posterior expectation of the response: sum_k w_k(y) (A*_k y + b*_k).
/// The first L_t entries estimate the observed parameters; the trailing L_w
/// entries are latent-coordinate estimates.
Eigen::VectorXd predict(const ForwardModel& fm, const Eigen::VectorXd& y);

/// Row-wise prediction of many observations.
Eigen::MatrixXd predict(const ForwardModel& fm, const Eigen::MatrixXd& Y,
                        int threads = 0);

enum class AlphaPredictMode { estimate, fixed_log_weights };

struct SpatialPredictOptions {
  bool estimate_beta = true;
  double beta_value = 0.0;  // used when estimate_beta == false
  AlphaPredictMode alpha_mode = AlphaPredictMode::estimate;
  double q_tol = 1e-5;
  int max_sweeps = 200;
  double beta_max = 100.0;
  /// Off: final weights are softmax(alpha + beta s + log gate), the
  /// prior-reweighted form. On: the converged q rows are used directly.
  bool posterior_weights = false;
  int threads = 0;
};

struct SpatialPredictResult {
  Eigen::MatrixXd x_hat;   // N x L
  PottsField field;        // final (alpha, beta)
  MeanFieldPosterior q;    // converged site posteriors
  int sweeps = 0;
  bool converged = false;
};

/// Spatially regularized prediction: asynchronous raster sweeps of
/// q_n(k) proportional to N(y_n; c*_k, Gamma*_k) exp(alpha_k + beta sum_m q_m(k)),
/// interleaved with psi re-estimation per the options, until the sup-norm
/// change in q drops below q_tol or max_sweeps is hit (then a NonConvergence
/// warning is logged and the last iterate is returned).
SpatialPredictResult predict_spatial(const ForwardModel& fm,
                                     const SpectralImage& image,
                                     const NeighborGraph& graph,
                                     const SpatialPredictOptions& opts = {});

/// Per-coordinate clamp of the observed block; latent coordinates are never
/// clamped. Bounds are (lo, hi) pairs for the first L_t coordinates.
Eigen::VectorXd clamp_proportions(
    Eigen::VectorXd x_hat,
    const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& bounds,
    int l_t);

}  // namespace gllim
