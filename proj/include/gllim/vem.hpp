#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gllim/model.hpp"
#include "gllim/potts.hpp"
#include "gllim/types.hpp"

namespace gllim {

/// Posterior statistics of the latent response block: mu[k] is the N x L_w
/// matrix of per-site means, S[k] the L_w x L_w covariance shared across
/// sites within component k.
struct LatentWStats {
  std::vector<Eigen::MatrixXd> mu;
  std::vector<Eigen::MatrixXd> S;

  bool empty() const { return mu.empty(); }
};

enum class BetaMode { fixed, estimated };
enum class CovarianceMode { isotropic, isotropic_equal };
enum class InitStrategy { kmeans, random };

struct TrainConfig {
  int K = 5;
  int L_w = 0;
  int max_iter = 100;
  double rel_tol = 1e-6;
  int n_restarts = 5;
  std::uint64_t rng_seed = 0;
  BetaMode beta_mode = BetaMode::fixed;
  double beta_value = 0.0;  // used when beta_mode == fixed
  CovarianceMode covariance_mode = CovarianceMode::isotropic;
  InitStrategy init_strategy = InitStrategy::kmeans;
  int threads = 0;
  /// sigma2 never drops below this fraction of the mean per-column variance
  /// of Y (EM degeneracy guard).
  double sigma2_floor_scale = 1e-8;
  double beta_max = 100.0;

  void validate() const;

  /// Key-value file, one `key = value` per line ('#' comments). Keys match
  /// the CLI flags: K, Lw, max_iter, tol, restarts, seed, beta (number or
  /// "estimated"), covariance (isotropic|equal), init (kmeans|random),
  /// threads. Unknown keys are rejected.
  static TrainConfig from_file(const std::string& path);
};

struct TrainReport {
  std::vector<double> objective_trace;
  InverseModel model;
  PottsField field;
  MeanFieldPosterior q;
  int iterations = 0;
  int restart_index = 0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

/// One variational update of the site posteriors:
/// q_n(k) proportional to p(y_n, t_n | k) exp(alpha_k + beta sum_m q(m, k)),
/// swept in raster order using already-updated neighbors (graph may be null,
/// in which case the neighbor term vanishes). Log-space throughout.
MeanFieldPosterior e_step_z(const InverseModel& model, const PottsField& field,
                            const NeighborGraph* graph, const Eigen::MatrixXd& Y,
                            const Eigen::MatrixXd& T,
                            const MeanFieldPosterior& q_prev, int threads = 0);

/// Same update on a precomputed N x K log-likelihood matrix.
MeanFieldPosterior e_step_z_from_loglik(const Eigen::MatrixXd& loglik,
                                        const PottsField& field,
                                        const NeighborGraph* graph,
                                        MeanFieldPosterior q);

/// Posterior of the latent block given the observations:
/// S_k = (Gamma_w^-1 + A_w^T A_w / sigma2)^-1,
/// mu_nk = S_k (A_w^T (y_n - A_t t_n - b) / sigma2 + Gamma_w^-1 c_w).
LatentWStats e_step_w(const InverseModel& model, const Eigen::MatrixXd& Y,
                      const Eigen::MatrixXd& T, int threads = 0);

/// Weighted closed-form parameter updates given responsibilities and latent
/// statistics. Components whose responsibility mass falls below K * 1e-8 are
/// reseeded from the worst-fit data point.
InverseModel m_step_theta(const MeanFieldPosterior& q, const LatentWStats& wstats,
                          const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                          const TrainConfig& cfg);

/// Full training loop. With graph == nullptr (or beta fixed at 0) this is the
/// exact EM for the non-spatial model and the objective trace is the observed
/// log-likelihood; with the MRF it is the mean-field free energy, which is
/// approximate and logged but not guaranteed monotone. Best restart wins.
TrainReport train(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                  const NeighborGraph* graph, const TrainConfig& cfg);

/// Single EM run from a caller-supplied initial posterior (no restarts, no
/// k-means); exposed so alternative initializations and reference
/// implementations can be driven through the same engine.
TrainReport train_from_q(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                         const NeighborGraph* graph, const TrainConfig& cfg,
                         MeanFieldPosterior q0);

/// Mean-field free energy
/// sum_nk q_nk [log p(y_n, t_n | k) + log prior_nk - log q_nk]
/// where the prior is softmax(alpha + beta * neighbor sums) under the MRF and
/// the mixture weights otherwise.
double free_energy(const PottsField& field, const NeighborGraph* graph,
                   const MeanFieldPosterior& q, const Eigen::MatrixXd& loglik);

}  // namespace gllim
