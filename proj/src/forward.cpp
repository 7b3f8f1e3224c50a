#include "gllim/forward.hpp"

#include <cmath>

#include "gllim/parallel.hpp"

namespace gllim {

ForwardModel::ForwardModel(Dims dims, std::vector<ForwardComponent> components,
                           Eigen::VectorXd log_weights)
    : dims_(dims),
      components_(std::move(components)),
      log_weights_(std::move(log_weights)) {
  gates_.reserve(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    gates_.emplace_back(components_[k].c_star, components_[k].Gamma_star,
                        static_cast<int>(k));
  }
}

Eigen::VectorXd ForwardModel::log_gates(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out(K());
  for (int k = 0; k < K(); ++k) out[k] = log_gate(y, k);
  return out;
}

Eigen::VectorXd ForwardModel::conditional_mean(const Eigen::VectorXd& y,
                                               int k) const {
  const auto& comp = components_[static_cast<std::size_t>(k)];
  return comp.A_star * y + comp.b_star;
}

ForwardModel to_forward(const InverseModel& model) {
  model.validate();
  const int D = model.dims.D;
  const int L = model.dims.L();
  std::vector<ForwardComponent> starred;
  starred.reserve(static_cast<std::size_t>(model.K()));
  for (int k = 0; k < model.K(); ++k) {
    const auto& comp = model.components[static_cast<std::size_t>(k)];
    const Eigen::VectorXd c = comp.c();
    const Eigen::MatrixXd Gamma = comp.Gamma();
    const Eigen::MatrixXd A = comp.A();

    ForwardComponent out;
    out.c_star = A * c + comp.b;
    out.Gamma_star = A * Gamma * A.transpose();
    out.Gamma_star.diagonal().array() += comp.sigma2;
    // Isotropic noise plus a rank-L update: guard the factorization.
    out.Gamma_star.diagonal().array() +=
        1e-8 * out.Gamma_star.trace() / static_cast<double>(D);

    const Eigen::MatrixXd gamma_lower = cholesky_lower(Gamma, k);
    const Eigen::MatrixXd gamma_inv =
        gamma_lower.triangularView<Eigen::Lower>().solve(
            Eigen::MatrixXd::Identity(L, L));
    const Eigen::MatrixXd gamma_precision = gamma_inv.transpose() * gamma_inv;

    Eigen::MatrixXd sigma_star_inv =
        gamma_precision + A.transpose() * A / comp.sigma2;
    const Eigen::MatrixXd prec_lower = cholesky_lower(sigma_star_inv, k);
    Eigen::MatrixXd identity_l = Eigen::MatrixXd::Identity(L, L);
    Eigen::MatrixXd inv_lower =
        prec_lower.triangularView<Eigen::Lower>().solve(identity_l);
    out.Sigma_star = inv_lower.transpose() * inv_lower;

    out.A_star = out.Sigma_star * A.transpose() / comp.sigma2;
    out.b_star = out.Sigma_star *
                 (gamma_precision * c - A.transpose() * comp.b / comp.sigma2);
    starred.push_back(std::move(out));
  }
  return ForwardModel(model.dims, std::move(starred), model.log_weights);
}

namespace {

/// Shared weight + blend arithmetic: softmax(prior_scores + gate log
/// densities), then the weighted affine means. Every prediction path runs
/// through here so reductions between paths are exact.
Eigen::VectorXd blend_prediction(const ForwardModel& fm, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& prior_scores,
                                 const Eigen::VectorXd& log_gates) {
  const Eigen::VectorXd weights = softmax(prior_scores + log_gates);
  Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(fm.dims().L());
  for (int k = 0; k < fm.K(); ++k) {
    x_hat += weights[k] * fm.conditional_mean(y, k);
  }
  return x_hat;
}

}  // namespace

ForwardMixture forward_density(const ForwardModel& fm, const Eigen::VectorXd& y) {
  ForwardMixture mix;
  mix.weights = softmax(fm.log_weights() + fm.log_gates(y));
  mix.means.resize(fm.K(), fm.dims().L());
  for (int k = 0; k < fm.K(); ++k) {
    mix.means.row(k) = fm.conditional_mean(y, k).transpose();
  }
  return mix;
}

Eigen::VectorXd predict(const ForwardModel& fm, const Eigen::VectorXd& y) {
  return blend_prediction(fm, y, fm.log_weights(), fm.log_gates(y));
}

Eigen::MatrixXd predict(const ForwardModel& fm, const Eigen::MatrixXd& Y,
                        int threads) {
  Eigen::MatrixXd out(Y.rows(), fm.dims().L());
  parallel_chunks(Y.rows(), threads, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t i = begin; i < end; ++i) {
      out.row(i) = predict(fm, Eigen::VectorXd(Y.row(i))).transpose();
    }
  });
  return out;
}

SpatialPredictResult predict_spatial(const ForwardModel& fm,
                                     const SpectralImage& image,
                                     const NeighborGraph& graph,
                                     const SpatialPredictOptions& opts) {
  image.validate();
  const auto n = image.n_pixels();
  if (graph.n_sites() != n) {
    throw DimensionMismatch("predict_spatial: graph sites != image pixels");
  }
  if (image.cube.cols() != fm.dims().D) {
    throw DimensionMismatch("predict_spatial: image depth != model D");
  }
  const int K = fm.K();

  // Gate log-densities are fixed across sweeps; compute them once.
  Eigen::MatrixXd log_gates(n, K);
  parallel_chunks(n, opts.threads, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t i = begin; i < end; ++i) {
      log_gates.row(i) = fm.log_gates(image.cube.row(i)).transpose();
    }
  });

  PottsField field;
  field.alpha = fm.log_weights();  // prior scores; softmax-equivalent to pi
  field.beta = opts.estimate_beta ? 1.0 : opts.beta_value;

  PsiEstimateOptions psi_opts;
  psi_opts.beta_max = opts.beta_max;
  psi_opts.estimate_beta = opts.estimate_beta;
  psi_opts.estimate_alpha = (opts.alpha_mode == AlphaPredictMode::estimate);
  const bool update_field = psi_opts.estimate_beta || psi_opts.estimate_alpha;

  // Initial site posteriors: gate responsibilities without neighbor terms.
  MeanFieldPosterior q(n, K);
  for (std::int64_t i = 0; i < n; ++i) {
    q.row(i) = softmax(field.alpha + log_gates.row(i).transpose()).transpose();
  }

  SpatialPredictResult result;
  result.sweeps = 0;
  result.converged = false;
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      Eigen::VectorXd scores = field.alpha + log_gates.row(i).transpose();
      if (field.beta != 0.0) {
        for (const auto m : graph.neighbors(i)) {
          scores += field.beta * q.row(m).transpose();
        }
      }
      const Eigen::VectorXd updated = softmax(scores);
      max_delta = std::max(
          max_delta,
          (updated - q.row(i).transpose()).lpNorm<Eigen::Infinity>());
      q.row(i) = updated.transpose();
    }
    if (update_field) {
      // alpha must satisfy the pin before entering the ascent.
      PottsField pinned = field;
      pinned.alpha.array() -= pinned.alpha[0];
      field = estimate_psi(q, graph, pinned, psi_opts);
    }
    result.sweeps = sweep + 1;
    if (max_delta < opts.q_tol) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged) {
    logging::warn("predict_spatial: fixed point not reached after " +
                  std::to_string(opts.max_sweeps) + " sweeps");
  }

  // Final blend. The prior scores are alpha + beta * neighbor sums of the
  // converged q (their softmax is the converged prior approximation);
  // with posterior_weights the converged q rows are used as-is.
  result.x_hat.resize(n, fm.dims().L());
  const Eigen::MatrixXd s = field.beta != 0.0
                                ? neighbor_sums(q, graph)
                                : Eigen::MatrixXd::Zero(n, K);
  parallel_chunks(n, opts.threads, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t i = begin; i < end; ++i) {
      const Eigen::VectorXd y = image.cube.row(i);
      if (opts.posterior_weights) {
        Eigen::VectorXd x_hat = Eigen::VectorXd::Zero(fm.dims().L());
        for (int k = 0; k < K; ++k) {
          x_hat += q(i, k) * fm.conditional_mean(y, k);
        }
        result.x_hat.row(i) = x_hat.transpose();
      } else {
        const Eigen::VectorXd prior_scores =
            field.alpha + field.beta * s.row(i).transpose();
        result.x_hat.row(i) =
            blend_prediction(fm, y, prior_scores, log_gates.row(i).transpose())
                .transpose();
      }
    }
  });

  result.field = field;
  result.q = std::move(q);
  return result;
}

Eigen::VectorXd clamp_proportions(
    Eigen::VectorXd x_hat,
    const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& bounds,
    int l_t) {
  if (!bounds) return x_hat;
  const auto& [lo, hi] = *bounds;
  if (lo.size() != l_t || hi.size() != l_t) {
    throw DimensionMismatch("clamp_proportions: bounds size != L_t");
  }
  for (int i = 0; i < l_t && i < x_hat.size(); ++i) {
    x_hat[i] = std::clamp(x_hat[i], lo[i], hi[i]);
  }
  return x_hat;
}

}  // namespace gllim
