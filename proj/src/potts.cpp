#include "gllim/potts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gllim/gaussian.hpp"

namespace gllim {

NeighborGraph NeighborGraph::lattice(int height, int width, int connectivity) {
  if (height < 1 || width < 1) {
    throw ConfigError("lattice: height and width must be >= 1");
  }
  if (connectivity != 4 && connectivity != 8) {
    throw ConfigError("lattice: connectivity must be 4 or 8");
  }
  NeighborGraph g(static_cast<std::int64_t>(height) * width);
  auto site = [width](int r, int c) {
    return static_cast<std::int64_t>(r) * width + c;
  };
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      // Forward half of the stencil only; add_edge inserts both directions.
      if (c + 1 < width) g.add_edge(site(r, c), site(r, c + 1));
      if (r + 1 < height) g.add_edge(site(r, c), site(r + 1, c));
      if (connectivity == 8) {
        if (r + 1 < height && c + 1 < width) g.add_edge(site(r, c), site(r + 1, c + 1));
        if (r + 1 < height && c - 1 >= 0) g.add_edge(site(r, c), site(r + 1, c - 1));
      }
    }
  }
  return g;
}

NeighborGraph NeighborGraph::from_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list: " + path);
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  std::int64_t max_site = -1;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::int64_t u, v;
    if (!(ls >> u)) continue;  // blank line
    if (!(ls >> v)) {
      throw ParseError("edge list: expected two site indices", line_no, 2);
    }
    if (u < 0 || v < 0) {
      throw ParseError("edge list: negative site index", line_no, 1);
    }
    edges.emplace_back(u, v);
    max_site = std::max({max_site, u, v});
  }
  NeighborGraph g(max_site + 1);
  for (const auto& [u, v] : edges) g.add_edge(u, v);
  return g;
}

void NeighborGraph::add_edge(std::int64_t u, std::int64_t v) {
  const auto n = n_sites();
  if (u < 0 || v < 0 || u >= n || v >= n) {
    throw ConfigError("add_edge: site index out of range");
  }
  if (u == v) throw ConfigError("add_edge: self-loops are not allowed");
  auto& au = adjacency_[static_cast<std::size_t>(u)];
  if (std::find(au.begin(), au.end(), static_cast<std::int32_t>(v)) != au.end()) {
    return;  // already present
  }
  au.push_back(static_cast<std::int32_t>(v));
  adjacency_[static_cast<std::size_t>(v)].push_back(static_cast<std::int32_t>(u));
}

std::int64_t NeighborGraph::n_edges() const {
  std::int64_t degree_sum = 0;
  for (const auto& adj : adjacency_) degree_sum += static_cast<std::int64_t>(adj.size());
  return degree_sum / 2;
}

void NeighborGraph::validate() const {
  for (std::int64_t u = 0; u < n_sites(); ++u) {
    for (const auto v : adjacency_[static_cast<std::size_t>(u)]) {
      if (v == u) throw ConfigError("graph has a self-loop at site " + std::to_string(u));
      const auto& av = adjacency_[static_cast<std::size_t>(v)];
      if (std::find(av.begin(), av.end(), static_cast<std::int32_t>(u)) == av.end()) {
        throw ConfigError("graph is not symmetric at edge (" + std::to_string(u) +
                          ", " + std::to_string(v) + ")");
      }
    }
  }
}

void PottsField::validate() const {
  if (alpha.size() < 1) throw ConfigError("PottsField: alpha is empty");
  if (alpha[0] != 0.0) throw ConfigError("PottsField: alpha[0] must be 0");
  if (!(beta >= 0.0)) throw ConfigError("PottsField: beta must be >= 0");
  if (!alpha.allFinite()) throw NonFinite("PottsField: alpha is not finite");
}

Eigen::MatrixXd neighbor_sums(const MeanFieldPosterior& q,
                              const NeighborGraph& graph) {
  if (q.rows() != graph.n_sites()) {
    throw DimensionMismatch("neighbor_sums: q rows != graph sites");
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  for (std::int64_t n = 0; n < graph.n_sites(); ++n) {
    for (const auto m : graph.neighbors(n)) s.row(n) += q.row(m);
  }
  return s;
}

double potts_energy(const std::vector<int>& labels, const PottsField& field,
                    const NeighborGraph& graph) {
  field.validate();
  if (static_cast<std::int64_t>(labels.size()) != graph.n_sites()) {
    throw DimensionMismatch("potts_energy: labels size != graph sites");
  }
  const int K = field.K();
  double energy = 0.0;
  for (std::int64_t n = 0; n < graph.n_sites(); ++n) {
    const int z = labels[static_cast<std::size_t>(n)];
    if (z < 0 || z >= K) {
      throw InvalidLabel("potts_energy: label " + std::to_string(z) +
                         " out of range at site " + std::to_string(n));
    }
    energy += field.alpha[z];
    for (const auto m : graph.neighbors(n)) {
      if (labels[static_cast<std::size_t>(m)] == z) energy += 0.5 * field.beta;
    }
  }
  return energy;
}

MeanFieldPosterior mean_field_prior(const MeanFieldPosterior& q,
                                    const PottsField& field,
                                    const NeighborGraph& graph) {
  if (q.cols() != field.K()) {
    throw DimensionMismatch("mean_field_prior: q cols != field K");
  }
  const Eigen::MatrixXd s = neighbor_sums(q, graph);
  MeanFieldPosterior prior(q.rows(), q.cols());
  for (std::int64_t n = 0; n < q.rows(); ++n) {
    const Eigen::VectorXd scores =
        field.alpha + field.beta * s.row(n).transpose();
    prior.row(n) = softmax(scores).transpose();
  }
  return prior;
}

namespace {

/// Surrogate objective from precomputed neighbor sums (they depend only on
/// the fixed q, so the ascent hoists them out of its inner loop).
double objective_from_sums(const MeanFieldPosterior& q, const Eigen::MatrixXd& s,
                           const PottsField& field) {
  double value = 0.0;
  for (std::int64_t n = 0; n < q.rows(); ++n) {
    const Eigen::VectorXd scores =
        field.alpha + field.beta * s.row(n).transpose();
    value += q.row(n).dot(scores.transpose()) - log_sum_exp(scores);
  }
  return value;
}

Eigen::VectorXd gradient_from_sums(const MeanFieldPosterior& q,
                                   const Eigen::MatrixXd& s,
                                   const PottsField& field) {
  const int K = field.K();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(K);
  for (std::int64_t n = 0; n < q.rows(); ++n) {
    const Eigen::VectorXd scores =
        field.alpha + field.beta * s.row(n).transpose();
    const Eigen::VectorXd prior = softmax(scores);
    const Eigen::VectorXd diff = q.row(n).transpose() - prior;
    grad[0] += diff.dot(s.row(n).transpose());
    grad.tail(K - 1) += diff.tail(K - 1);
  }
  return grad;
}

/// Negative Hessian of psi_objective in the [beta, alpha_2..alpha_K] layout:
/// sum over sites of B^T (diag(p) - p p^T) B with B the Jacobian of the
/// per-site scores. Positive semidefinite because the objective is concave.
Eigen::MatrixXd neg_hessian_from_sums(const MeanFieldPosterior& q,
                                      const Eigen::MatrixXd& s,
                                      const PottsField& field) {
  const int K = field.K();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(K, K);
  for (std::int64_t n = 0; n < q.rows(); ++n) {
    const Eigen::VectorXd sn = s.row(n).transpose();
    const Eigen::VectorXd p = softmax(field.alpha + field.beta * sn);
    const Eigen::VectorXd ws = p.cwiseProduct(sn) - p * p.dot(sn);
    H(0, 0) += sn.dot(ws);
    H.block(1, 0, K - 1, 1) += ws.tail(K - 1);
    H.block(1, 1, K - 1, K - 1) +=
        Eigen::MatrixXd(p.tail(K - 1).asDiagonal()) -
        p.tail(K - 1) * p.tail(K - 1).transpose();
  }
  H.block(0, 1, 1, K - 1) = H.block(1, 0, K - 1, 1).transpose();
  return H;
}

}  // namespace

double psi_objective(const MeanFieldPosterior& q, const PottsField& field,
                     const NeighborGraph& graph) {
  if (q.cols() != field.K()) {
    throw DimensionMismatch("psi_objective: q cols != field K");
  }
  return objective_from_sums(q, neighbor_sums(q, graph), field);
}

Eigen::VectorXd psi_gradient(const MeanFieldPosterior& q,
                             const PottsField& field,
                             const NeighborGraph& graph) {
  if (q.cols() != field.K()) {
    throw DimensionMismatch("psi_gradient: q cols != field K");
  }
  return gradient_from_sums(q, neighbor_sums(q, graph), field);
}


PottsField estimate_psi(const MeanFieldPosterior& q, const NeighborGraph& graph,
                        PottsField init, const PsiEstimateOptions& opts) {
  init.validate();
  const int K = init.K();
  if (q.cols() != K) {
    throw DimensionMismatch("estimate_psi: q cols != field K");
  }

  auto project = [&](PottsField& f) {
    f.alpha[0] = 0.0;
    f.beta = std::clamp(f.beta, 0.0, opts.beta_max);
  };

  const Eigen::MatrixXd sums = neighbor_sums(q, graph);
  PottsField psi = std::move(init);
  project(psi);
  double value = objective_from_sums(q, sums, psi);
  if (!std::isfinite(value)) {
    throw NonFinite("estimate_psi: objective is not finite at the start");
  }

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    Eigen::VectorXd grad = gradient_from_sums(q, sums, psi);
    // Active set: beta leaves the solve while frozen or pinned at a bound
    // with the gradient pointing outward.
    const bool beta_active =
        opts.estimate_beta &&
        !((psi.beta <= 0.0 && grad[0] < 0.0) ||
          (psi.beta >= opts.beta_max && grad[0] > 0.0));
    if (!beta_active) grad[0] = 0.0;
    if (!opts.estimate_alpha) grad.tail(K - 1).setZero();
    if (grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) break;

    // Damped Newton ascent: the curvature is available in closed form and
    // cures the scale gap between the interaction and field coordinates.
    Eigen::MatrixXd H = neg_hessian_from_sums(q, sums, psi);
    // Mask inactive coordinates so they decouple from the solve.
    if (!beta_active) {
      H.row(0).setZero();
      H.col(0).setZero();
      H(0, 0) = 1.0;
    }
    if (!opts.estimate_alpha) {
      H.bottomRows(K - 1).setZero();
      H.rightCols(K - 1).setZero();
      H.block(1, 1, K - 1, K - 1).setIdentity();
    }
    H.diagonal().array() += 1e-10 * std::max(1.0, H.trace());
    Eigen::VectorXd direction = H.ldlt().solve(grad);
    if (!direction.allFinite() || direction.dot(grad) <= 0.0) {
      direction = grad;  // fall back to steepest ascent
    }
    // Degenerate curvature (one-hot posteriors) can blow the Newton step up;
    // the field lives on an O(10) scale, so cap the move.
    const double direction_norm = direction.lpNorm<Eigen::Infinity>();
    if (direction_norm > 50.0) direction *= 50.0 / direction_norm;

    double trial = 1.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      PottsField cand = psi;
      cand.beta += trial * direction[0];
      cand.alpha.tail(K - 1) += trial * direction.tail(K - 1);
      project(cand);
      const double cand_value = objective_from_sums(q, sums, cand);
      if (!std::isfinite(cand_value)) {
        throw NonFinite("estimate_psi: objective became non-finite");
      }
      const Eigen::VectorXd moved =
          (Eigen::VectorXd(K) << cand.beta - psi.beta,
           cand.alpha.tail(K - 1) - psi.alpha.tail(K - 1))
              .finished();
      if (cand_value >= value + 1e-4 * grad.dot(moved) && cand_value >= value) {
        const double gain = cand_value - value;
        psi = cand;
        value = cand_value;
        accepted = gain > 1e-13 * std::max(1.0, std::abs(value));
        break;
      }
      trial *= 0.5;
    }
    if (!accepted) break;  // no useful progress left
  }

  if (psi.beta >= opts.beta_max) {
    logging::warn("estimate_psi: beta clamped at beta_max=" +
                  std::to_string(opts.beta_max) + " (degenerate field)");
  }
  return psi;
}

}  // namespace gllim
