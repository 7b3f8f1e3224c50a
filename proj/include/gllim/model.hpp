#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gllim/dataset.hpp"
#include "gllim/gaussian.hpp"
#include "gllim/potts.hpp"
#include "gllim/types.hpp"

namespace gllim {

/// One locally-affine regression component. The response splits into an
/// observed block (suffix _t) and a latent block (suffix _w); the
/// cross-covariance between the two blocks is identically zero. Noise is
/// isotropic, Sigma = sigma2 * I_D.
struct Component {
  Eigen::VectorXd c_t;      // L_t
  Eigen::VectorXd c_w;      // L_w
  Eigen::MatrixXd Gamma_t;  // L_t x L_t, SPD
  Eigen::MatrixXd Gamma_w;  // L_w x L_w, SPD
  Eigen::MatrixXd A_t;      // D x L_t
  Eigen::MatrixXd A_w;      // D x L_w
  Eigen::VectorXd b;        // D
  double sigma2 = 1.0;

  /// Assembled response mean (c_t; c_w).
  Eigen::VectorXd c() const;
  /// Assembled blockdiag(Gamma_t, Gamma_w).
  Eigen::MatrixXd Gamma() const;
  /// Assembled [A_t A_w].
  Eigen::MatrixXd A() const;
  /// Covariance of y given (t, Z=k) with w marginalized:
  /// sigma2 * I + A_w Gamma_w A_w^T.
  Eigen::MatrixXd marginal_y_cov() const;
};

/// The learned low-to-high regression parameters. log_weights holds log pi_k
/// for models trained without spatial coupling; under the MRF the multinomial
/// prior is replaced by a PottsField and log_weights stores softmax(alpha) in
/// log form for use by non-spatial prediction.
struct InverseModel {
  Dims dims;
  std::vector<Component> components;
  Eigen::VectorXd log_weights;

  int K() const { return static_cast<int>(components.size()); }
  void validate() const;
};

/// log N(x; mean, cov) thin wrapper kept for symmetry with the rest of the
/// density API; cov must be SPD.
inline double log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov) {
  return log_gaussian(x, mean, cov);
}

/// log p(y, t | Z = k) with the latent block marginalized analytically:
/// t | k ~ N(c_t, Gamma_t) and y | t, k ~ N(A_t t + A_w c_w + b,
/// sigma2 I + A_w Gamma_w A_w^T).
double log_lik_y_t_given_z(const InverseModel& model, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& t, int k);

/// Precomputed per-component evaluators for scoring a whole dataset;
/// Cholesky factors are formed once per component.
class LikelihoodCache {
 public:
  explicit LikelihoodCache(const InverseModel& model);

  double log_lik(const Eigen::VectorXd& y, const Eigen::VectorXd& t, int k) const;

  /// N x K matrix of log p(y_n, t_n | Z = k). Rows are computed in parallel
  /// chunks; entries do not depend on the chunking.
  Eigen::MatrixXd log_lik_matrix(const Eigen::MatrixXd& Y,
                                 const Eigen::MatrixXd& T, int threads = 0) const;

 private:
  const InverseModel* model_;
  std::vector<GaussianEvaluator> y_given_t_;  // covariance part only
  std::vector<GaussianEvaluator> t_marginal_;
  std::vector<Eigen::VectorXd> y_offset_;     // A_w c_w + b
};

/// Exact observed-data mixture log-likelihood
/// sum_n logsumexp_k(log pi_k + log p(y_n, t_n | k)).
double observed_log_lik(const InverseModel& model, const Eigen::MatrixXd& Y,
                        const Eigen::MatrixXd& T, int threads = 0);

// ---------------------------------------------------------------------------
// Model archive
// ---------------------------------------------------------------------------

/// Everything a prediction run needs: the inverse model, the Potts field
/// learned with it (beta = 0 when trained without spatial coupling), and the
/// normalizer that was applied to the training data, if any.
struct ModelArchive {
  InverseModel model;
  PottsField field;
  std::optional<Normalizer> normalizer;
};

/// Text archive, 8-byte magic + version; all floats at 17 significant digits
/// so save/load round-trips bit-exactly (see docs/model-format.md).
void save_model(const std::string& path, const ModelArchive& archive);
ModelArchive load_model(const std::string& path);

}  // namespace gllim
