#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gllim/types.hpp"

namespace gllim {

/// Symmetric neighborhood structure over sites. Site indices are 0-based;
/// for lattices they follow raster order (row * width + col).
class NeighborGraph {
 public:
  NeighborGraph() = default;
  explicit NeighborGraph(std::int64_t n_sites)
      : adjacency_(static_cast<std::size_t>(n_sites)) {}

  /// Regular height x width lattice, connectivity 4 or 8.
  static NeighborGraph lattice(int height, int width, int connectivity);

  /// Plain-text edge list, one "u v" pair per line, 0-based, '#' comments.
  static NeighborGraph from_edge_list(const std::string& path);

  /// Adds the undirected edge {u, v}. Self-loops and duplicates are rejected.
  void add_edge(std::int64_t u, std::int64_t v);

  std::int64_t n_sites() const { return static_cast<std::int64_t>(adjacency_.size()); }
  std::int64_t n_edges() const;
  const std::vector<std::int32_t>& neighbors(std::int64_t n) const {
    return adjacency_[static_cast<std::size_t>(n)];
  }

  /// Checks symmetry and absence of self-loops; throws ConfigError.
  void validate() const;

 private:
  std::vector<std::vector<std::int32_t>> adjacency_;
};

/// Potts external field and interaction strength. alpha[0] is pinned at 0
/// for identifiability; beta >= 0.
struct PottsField {
  Eigen::VectorXd alpha;
  double beta = 0.0;

  static PottsField zeros(int K) {
    return PottsField{Eigen::VectorXd::Zero(K), 0.0};
  }
  int K() const { return static_cast<int>(alpha.size()); }
  void validate() const;
};

/// Row-stochastic N x K matrix; row n is the site posterior q_{Z_n}.
using MeanFieldPosterior = Eigen::MatrixXd;

/// N x K matrix of neighbor sums: out(n, k) = sum_{m in Omega(n)} q(m, k).
Eigen::MatrixXd neighbor_sums(const MeanFieldPosterior& q,
                              const NeighborGraph& graph);

/// Potts energy sum_n ( alpha[z_n] + (beta/2) sum_{m in Omega(n)} [z_n == z_m] ).
/// Labels are 0-based; out-of-range labels throw InvalidLabel.
double potts_energy(const std::vector<int>& labels, const PottsField& field,
                    const NeighborGraph& graph);

/// Factorized prior approximation: row n proportional to
/// exp(alpha_k + beta * sum_{m in Omega(n)} q(m, k)), normalized.
MeanFieldPosterior mean_field_prior(const MeanFieldPosterior& q,
                                    const PottsField& field,
                                    const NeighborGraph& graph);

/// Mean-field surrogate of E_q[log p(Z; psi)]:
///   sum_n sum_k q(n,k) (alpha_k + beta s(n,k)) - sum_n log sum_l exp(alpha_l + beta s(n,l))
/// with s the neighbor sums of the fixed q. Concave in (alpha, beta).
double psi_objective(const MeanFieldPosterior& q, const PottsField& field,
                     const NeighborGraph& graph);

/// Exact gradient of psi_objective, laid out as [d/dbeta, d/dalpha_2, ...,
/// d/dalpha_K] (alpha_1 pinned). Every component vanishes when
/// mean_field_prior(q, field, graph) == q.
Eigen::VectorXd psi_gradient(const MeanFieldPosterior& q,
                             const PottsField& field,
                             const NeighborGraph& graph);

struct PsiEstimateOptions {
  double beta_max = 100.0;
  double grad_tol = 1e-6;
  int max_iter = 500;
  bool estimate_alpha = true;
  bool estimate_beta = true;
};

/// Maximizes psi_objective by projected gradient ascent with backtracking.
/// alpha[0] stays 0; beta is clamped to [0, beta_max] (a clamp at beta_max is
/// logged as a degenerate field). Throws NonFinite if the objective leaves
/// the reals.
PottsField estimate_psi(const MeanFieldPosterior& q, const NeighborGraph& graph,
                        PottsField init, const PsiEstimateOptions& opts = {});

}  // namespace gllim
