#include "gllim/vem.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "gllim/parallel.hpp"

namespace gllim {

void TrainConfig::validate() const {
  if (K < 1) throw ConfigError("TrainConfig: K must be >= 1");
  if (L_w < 0) throw ConfigError("TrainConfig: L_w must be >= 0");
  if (max_iter < 1) throw ConfigError("TrainConfig: max_iter must be >= 1");
  if (!(rel_tol > 0.0)) throw ConfigError("TrainConfig: rel_tol must be > 0");
  if (n_restarts < 1) throw ConfigError("TrainConfig: n_restarts must be >= 1");
  if (!(beta_max > 0.0)) throw ConfigError("TrainConfig: beta_max must be > 0");
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  TrainConfig cfg;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ParseError("config: expected key = value", line_no, 1);
      }
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "K") {
        cfg.K = std::stoi(value);
      } else if (key == "Lw") {
        cfg.L_w = std::stoi(value);
      } else if (key == "max_iter") {
        cfg.max_iter = std::stoi(value);
      } else if (key == "tol") {
        cfg.rel_tol = std::stod(value);
      } else if (key == "restarts") {
        cfg.n_restarts = std::stoi(value);
      } else if (key == "seed") {
        cfg.rng_seed = std::stoull(value);
      } else if (key == "threads") {
        cfg.threads = std::stoi(value);
      } else if (key == "beta") {
        if (value == "estimated" || value == "estimate") {
          cfg.beta_mode = BetaMode::estimated;
        } else {
          cfg.beta_mode = BetaMode::fixed;
          cfg.beta_value = std::stod(value);
        }
      } else if (key == "covariance") {
        if (value == "isotropic") {
          cfg.covariance_mode = CovarianceMode::isotropic;
        } else if (value == "equal") {
          cfg.covariance_mode = CovarianceMode::isotropic_equal;
        } else {
          throw ConfigError("config: covariance must be isotropic or equal");
        }
      } else if (key == "init") {
        if (value == "kmeans") {
          cfg.init_strategy = InitStrategy::kmeans;
        } else if (value == "random") {
          cfg.init_strategy = InitStrategy::random;
        } else {
          throw ConfigError("config: init must be kmeans or random");
        }
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ParseError("config: bad value for '" + key + "'", line_no, 1);
    }
  }
  cfg.validate();
  return cfg;
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["objective_trace"] = objective_trace;
  j["iterations"] = iterations;
  j["restart_index"] = restart_index;
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  j["K"] = model.dims.K;
  j["L_t"] = model.dims.L_t;
  j["L_w"] = model.dims.L_w;
  j["D"] = model.dims.D;
  j["N"] = model.dims.N;
  j["beta"] = field.beta;
  std::vector<double> alpha(field.alpha.data(), field.alpha.data() + field.alpha.size());
  j["alpha"] = alpha;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// E-steps
// ---------------------------------------------------------------------------

MeanFieldPosterior e_step_z_from_loglik(const Eigen::MatrixXd& loglik,
                                        const PottsField& field,
                                        const NeighborGraph* graph,
                                        MeanFieldPosterior q) {
  const auto n = loglik.rows();
  const int K = static_cast<int>(loglik.cols());
  if (field.alpha.size() != K) {
    throw DimensionMismatch("e_step_z: field K != loglik K");
  }
  if (graph == nullptr || field.beta == 0.0) {
    // No neighbor coupling: rows are independent softmaxes.
    MeanFieldPosterior out(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.row(i) = softmax(field.alpha + loglik.row(i).transpose()).transpose();
    }
    return out;
  }
  if (q.rows() != n || q.cols() != K) {
    throw DimensionMismatch("e_step_z: q_prev shape mismatch");
  }
  if (graph->n_sites() != n) {
    throw DimensionMismatch("e_step_z: graph sites != data rows");
  }
  // Asynchronous raster-order sweep: each site sees already-updated neighbors.
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd scores = field.alpha + loglik.row(i).transpose();
    for (const auto m : graph->neighbors(i)) {
      scores += field.beta * q.row(m).transpose();
    }
    q.row(i) = softmax(scores).transpose();
  }
  return q;
}

MeanFieldPosterior e_step_z(const InverseModel& model, const PottsField& field,
                            const NeighborGraph* graph, const Eigen::MatrixXd& Y,
                            const Eigen::MatrixXd& T,
                            const MeanFieldPosterior& q_prev, int threads) {
  const LikelihoodCache cache(model);
  return e_step_z_from_loglik(cache.log_lik_matrix(Y, T, threads), field, graph,
                              q_prev);
}

LatentWStats e_step_w(const InverseModel& model, const Eigen::MatrixXd& Y,
                      const Eigen::MatrixXd& T, int threads) {
  (void)threads;
  LatentWStats stats;
  const int L_w = model.dims.L_w;
  if (L_w == 0) return stats;
  const int K = model.K();
  stats.mu.reserve(static_cast<std::size_t>(K));
  stats.S.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& comp = model.components[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd gamma_w_lower = cholesky_lower(comp.Gamma_w, k);
    const Eigen::MatrixXd gamma_w_inv =
        gamma_w_lower.triangularView<Eigen::Lower>().solve(
            Eigen::MatrixXd::Identity(L_w, L_w));
    const Eigen::MatrixXd prec_prior = gamma_w_inv.transpose() * gamma_w_inv;
    const Eigen::MatrixXd prec_post =
        prec_prior + comp.A_w.transpose() * comp.A_w / comp.sigma2;
    const Eigen::MatrixXd s_lower = cholesky_lower(prec_post, k);
    Eigen::MatrixXd S =
        s_lower.triangularView<Eigen::Lower>().solve(
            Eigen::MatrixXd::Identity(L_w, L_w));
    S = S.transpose() * S;  // (prec_post)^-1

    Eigen::MatrixXd residual = Y;
    residual.rowwise() -= comp.b.transpose();
    if (comp.A_t.cols() > 0) residual.noalias() -= T * comp.A_t.transpose();
    const Eigen::VectorXd prior_pull = prec_prior * comp.c_w;
    Eigen::MatrixXd mu =
        (residual * comp.A_w) / comp.sigma2;  // rows: A_w^T r_n / sigma2
    mu.rowwise() += prior_pull.transpose();
    mu = mu * S;  // rows: S (A_w^T r_n / sigma2 + Gamma_w^-1 c_w)
    stats.mu.push_back(std::move(mu));
    stats.S.push_back(std::move(S));
  }
  return stats;
}

// ---------------------------------------------------------------------------
// M-step
// ---------------------------------------------------------------------------

namespace {

double mean_column_variance(const Eigen::MatrixXd& m) {
  const Eigen::RowVectorXd mean = m.colwise().mean();
  return (m.rowwise() - mean).squaredNorm() /
         (static_cast<double>(m.rows()) * static_cast<double>(m.cols()));
}

}  // namespace

InverseModel m_step_theta(const MeanFieldPosterior& q, const LatentWStats& wstats,
                          const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                          const TrainConfig& cfg) {
  const auto n = Y.rows();
  const int K = static_cast<int>(q.cols());
  const int D = static_cast<int>(Y.cols());
  const int L_t = static_cast<int>(T.cols());
  const int L_w = cfg.L_w;
  const int L = L_t + L_w;
  if (q.rows() != n) throw DimensionMismatch("m_step: q rows != data rows");
  if (L_w > 0 && (wstats.empty() || static_cast<int>(wstats.mu.size()) != K)) {
    throw DimensionMismatch("m_step: latent stats inconsistent with K");
  }

  const double sigma2_floor =
      std::max(cfg.sigma2_floor_scale * mean_column_variance(Y), 1e-300);
  // Keeps the scatter of a (near-)singleton cluster factorizable; relative
  // scale 1e-12 is far below the 1e-8 monotonicity tolerance.
  const double gamma_ridge =
      L_t > 0 ? std::max(1e-12 * mean_column_variance(T), 1e-300) : 0.0;

  InverseModel model;
  model.dims = Dims{D, L_t, L_w, K, n};
  model.components.resize(static_cast<std::size_t>(K));
  model.log_weights.resize(K);

  std::vector<int> starved;
  double pooled_residual = 0.0;  // for the shared-sigma mode
  const double empty_eps = static_cast<double>(K) * 1e-8;

  for (int k = 0; k < K; ++k) {
    auto& comp = model.components[static_cast<std::size_t>(k)];
    const Eigen::VectorXd r = q.col(k);
    const double rk = r.sum();
    if (rk < empty_eps) {
      starved.push_back(k);
      comp.c_t = Eigen::VectorXd::Zero(L_t);
      comp.c_w = Eigen::VectorXd::Zero(L_w);
      comp.Gamma_t = Eigen::MatrixXd::Identity(L_t, L_t);
      comp.Gamma_w = Eigen::MatrixXd::Identity(L_w, L_w);
      comp.A_t = Eigen::MatrixXd::Zero(D, L_t);
      comp.A_w = Eigen::MatrixXd::Zero(D, L_w);
      comp.b = Eigen::VectorXd::Zero(D);
      comp.sigma2 = 1.0;
      model.log_weights[k] = std::log(empty_eps / static_cast<double>(n));
      continue;
    }

    Eigen::MatrixXd x_hat(n, L);
    if (L_t > 0) x_hat.leftCols(L_t) = T;
    if (L_w > 0) x_hat.rightCols(L_w) = wstats.mu[static_cast<std::size_t>(k)];

    const Eigen::VectorXd x_bar = x_hat.transpose() * r / rk;
    const Eigen::VectorXd y_bar = Y.transpose() * r / rk;

    Eigen::MatrixXd x_centered = x_hat.rowwise() - x_bar.transpose();
    Eigen::MatrixXd x_weighted =
        x_centered.array().colwise() * r.array();  // diag(r) * Xc
    Eigen::MatrixXd scatter_xx =
        x_weighted.transpose() * x_centered / rk;  // full L x L scatter
    scatter_xx.diagonal().head(L_t).array() += gamma_ridge;

    comp.c_t = x_bar.head(L_t);
    comp.c_w = x_bar.tail(L_w);
    comp.Gamma_t = scatter_xx.topLeftCorner(L_t, L_t);
    comp.Gamma_w = scatter_xx.bottomRightCorner(L_w, L_w);
    if (L_w > 0) comp.Gamma_w += wstats.S[static_cast<std::size_t>(k)];

    // Affine regression of y on the augmented response; the latent posterior
    // covariance enters the normal equations.
    Eigen::MatrixXd reg_xx = scatter_xx;
    if (L_w > 0) {
      reg_xx.bottomRightCorner(L_w, L_w) += wstats.S[static_cast<std::size_t>(k)];
    }
    const Eigen::MatrixXd y_centered = Y.rowwise() - y_bar.transpose();
    const Eigen::MatrixXd scatter_yx =
        y_centered.transpose() * x_weighted / rk;  // D x L
    Eigen::MatrixXd A;
    if (L > 0) {
      const Eigen::MatrixXd reg_lower = cholesky_lower(reg_xx, k);
      // A = scatter_yx * reg_xx^-1 via two triangular solves.
      Eigen::MatrixXd tmp =
          reg_lower.triangularView<Eigen::Lower>().solve(scatter_yx.transpose());
      A = reg_lower.transpose()
              .triangularView<Eigen::Upper>()
              .solve(tmp)
              .transpose();
    } else {
      A = Eigen::MatrixXd::Zero(D, 0);
    }
    comp.A_t = A.leftCols(L_t);
    comp.A_w = A.rightCols(L_w);
    comp.b = y_bar - A * x_bar;

    Eigen::MatrixXd fit_residual = Y;
    fit_residual.rowwise() -= comp.b.transpose();
    fit_residual.noalias() -= x_hat * A.transpose();
    double residual_power = (fit_residual.array().square().colwise() * r.array()).sum();
    if (L_w > 0) {
      residual_power +=
          rk * (comp.A_w * wstats.S[static_cast<std::size_t>(k)] *
                comp.A_w.transpose())
                   .trace();
    }
    comp.sigma2 =
        std::max(residual_power / (rk * static_cast<double>(D)), sigma2_floor);
    pooled_residual += residual_power;
    model.log_weights[k] = std::log(rk / static_cast<double>(n));
  }

  if (cfg.covariance_mode == CovarianceMode::isotropic_equal) {
    const double shared = std::max(
        pooled_residual / (static_cast<double>(n) * static_cast<double>(D)),
        sigma2_floor);
    for (auto& comp : model.components) comp.sigma2 = shared;
  }

  // Starved components are reseeded from the data point the fitted mixture
  // explains worst (largest best-case squared residual).
  if (!starved.empty()) {
    logging::warn("m_step: reseeding " + std::to_string(starved.size()) +
                  " empty component(s)");
    Eigen::VectorXd best_residual = Eigen::VectorXd::Constant(
        n, std::numeric_limits<double>::infinity());
    for (int k = 0; k < K; ++k) {
      if (std::find(starved.begin(), starved.end(), k) != starved.end()) continue;
      const auto& comp = model.components[static_cast<std::size_t>(k)];
      Eigen::MatrixXd res = Y;
      res.rowwise() -= comp.b.transpose();
      if (L_t > 0) res.noalias() -= T * comp.A_t.transpose();
      // Latent block contributes through its prior mean only.
      if (L_w > 0) res.rowwise() -= (comp.A_w * comp.c_w).transpose();
      best_residual =
          best_residual.cwiseMin(res.rowwise().squaredNorm() / comp.sigma2);
    }
    const double t_scale = L_t > 0 ? mean_column_variance(T) : 1.0;
    const double y_scale = mean_column_variance(Y);
    for (const int k : starved) {
      Eigen::Index worst;
      best_residual.maxCoeff(&worst);
      best_residual[worst] = -std::numeric_limits<double>::infinity();
      auto& comp = model.components[static_cast<std::size_t>(k)];
      if (L_t > 0) comp.c_t = T.row(worst);
      comp.Gamma_t = t_scale * Eigen::MatrixXd::Identity(L_t, L_t);
      comp.Gamma_w = Eigen::MatrixXd::Identity(L_w, L_w);
      comp.b = Y.row(worst);
      comp.sigma2 = std::max(0.1 * y_scale, sigma2_floor);
    }
    // Renormalize the weights including the reseeded slivers.
    const double lse = log_sum_exp(model.log_weights);
    model.log_weights.array() -= lse;
  }

  return model;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

/// Top-L PCA projection of Y (columns centered), used only to build the
/// joint clustering space.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& Y, int out_dim) {
  const Eigen::RowVectorXd mean = Y.colwise().mean();
  const Eigen::MatrixXd centered = Y.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / std::max<double>(1.0, Y.rows() - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw NumericError("pca_project: eigendecomposition failed");
  }
  const int d = static_cast<int>(Y.cols());
  const int keep = std::min(out_dim, d);
  // Eigenvalues ascend; take the trailing columns.
  return centered * eig.eigenvectors().rightCols(keep);
}

void standardize_columns_inplace(Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).mean();
    const double sd = std::sqrt(
        (m.col(c).array() - mean).square().sum() /
        std::max<double>(1.0, m.rows() - 1.0));
    m.col(c).array() -= mean;
    if (sd > 0.0) m.col(c) /= sd;
  }
}

std::vector<int> kmeans_labels(const Eigen::MatrixXd& u, int K,
                               std::mt19937_64& rng) {
  const auto n = u.rows();
  const int dim = static_cast<int>(u.cols());
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // k-means++ seeding.
  Eigen::MatrixXd centers(K, dim);
  std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
  centers.row(0) = u.row(pick(rng));
  Eigen::VectorXd d2 =
      (u.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = d2.sum();
    if (total <= 0.0) {
      centers.row(k) = u.row(pick(rng));
    } else {
      double target = unif(rng) * total;
      Eigen::Index chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[i];
        if (target <= 0.0) {
          chosen = i;
          break;
        }
      }
      centers.row(k) = u.row(chosen);
    }
    d2 = d2.cwiseMin((u.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (u.row(i) - centers.row(0)).squaredNorm();
      for (int k = 1; k < K; ++k) {
        const double d = (u.row(i) - centers.row(k)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, dim);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += u.row(i);
      counts[labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0.0) {
        centers.row(k) = sums.row(k) / counts[k];
      } else {
        // Re-seed an empty cluster from the point farthest from its center.
        Eigen::Index farthest = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d =
              (u.row(i) - centers.row(labels[static_cast<std::size_t>(i)]))
                  .squaredNorm();
          if (d > far_d) {
            far_d = d;
            farthest = i;
          }
        }
        centers.row(k) = u.row(farthest);
        labels[static_cast<std::size_t>(farthest)] = k;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return labels;
}

/// Probabilistic-PCA style activation of the latent block: the top L_w
/// eigenpairs of each component's weighted residual scatter seed A_w, and
/// the residual spectrum tail seeds sigma2 (residual cov ~ A_w A_w^T +
/// sigma2 I). Without this the zero-initialized latent block is a fixed
/// point of the EM and never activates.
void activate_latent_block(InverseModel& model, const MeanFieldPosterior& q,
                           const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                           double sigma2_floor, CovarianceMode mode) {
  const int L_w = model.dims.L_w;
  if (L_w == 0) return;
  const int D = model.dims.D;
  for (int k = 0; k < model.K(); ++k) {
    auto& comp = model.components[static_cast<std::size_t>(k)];
    const Eigen::VectorXd r = q.col(k);
    const double rk = r.sum();
    if (rk <= 0.0) continue;
    Eigen::MatrixXd residual = Y;
    residual.rowwise() -= comp.b.transpose();
    if (comp.A_t.cols() > 0) residual.noalias() -= T * comp.A_t.transpose();
    const Eigen::MatrixXd cov =
        (residual.array().colwise() * r.array()).matrix().transpose() *
        residual / rk;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) {
      throw NumericError("latent init: eigendecomposition failed");
    }
    const Eigen::VectorXd evals = eig.eigenvalues();  // ascending
    const int tail = D - L_w;
    double noise = 0.0;
    if (tail > 0) noise = evals.head(tail).sum() / tail;
    noise = std::max(noise, sigma2_floor);
    comp.sigma2 = noise;
    comp.c_w = Eigen::VectorXd::Zero(L_w);
    comp.Gamma_w = Eigen::MatrixXd::Identity(L_w, L_w);
    for (int j = 0; j < L_w; ++j) {
      const double lambda = evals[D - 1 - j];
      const double scale = std::sqrt(std::max(lambda - noise, 1e-8 * noise));
      comp.A_w.col(j) = eig.eigenvectors().col(D - 1 - j) * scale;
    }
  }
  // The shared-variance family must hold from the very first iterate, or the
  // first constrained M-step can fall below the unconstrained start.
  if (mode == CovarianceMode::isotropic_equal) {
    double pooled = 0.0, mass = 0.0;
    for (int k = 0; k < model.K(); ++k) {
      const double rk = q.col(k).sum();
      pooled += rk * model.components[static_cast<std::size_t>(k)].sigma2;
      mass += rk;
    }
    const double shared = std::max(pooled / std::max(mass, 1.0), sigma2_floor);
    for (auto& comp : model.components) comp.sigma2 = shared;
  }
}

MeanFieldPosterior one_hot(const std::vector<int>& labels, int K) {
  MeanFieldPosterior q = MeanFieldPosterior::Zero(
      static_cast<Eigen::Index>(labels.size()), K);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    q(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return q;
}

PottsField field_from_log_weights(const Eigen::VectorXd& log_weights) {
  PottsField f;
  f.alpha = log_weights.array() - log_weights[0];  // pin alpha_1 = 0
  f.beta = 0.0;
  return f;
}

}  // namespace

double free_energy(const PottsField& field, const NeighborGraph* graph,
                   const MeanFieldPosterior& q, const Eigen::MatrixXd& loglik) {
  Eigen::MatrixXd log_prior(q.rows(), q.cols());
  if (graph != nullptr && field.beta != 0.0) {
    const Eigen::MatrixXd s = neighbor_sums(q, *graph);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      const Eigen::VectorXd scores =
          field.alpha + field.beta * s.row(i).transpose();
      log_prior.row(i) =
          (scores.array() - log_sum_exp(scores)).transpose();
    }
  } else {
    const Eigen::VectorXd shifted =
        field.alpha.array() - log_sum_exp(field.alpha);
    log_prior = shifted.transpose().replicate(q.rows(), 1);
  }
  double f = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      const double qi = q(i, k);
      if (qi <= 0.0) continue;
      f += qi * (loglik(i, k) + log_prior(i, k) - std::log(qi));
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainReport train_from_q(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                         const NeighborGraph* graph, const TrainConfig& cfg,
                         MeanFieldPosterior q0) {
  cfg.validate();
  const auto n = Y.rows();
  const int K = cfg.K;
  if (q0.rows() != n || q0.cols() != K) {
    throw DimensionMismatch("train_from_q: q0 shape mismatch");
  }
  const bool mrf = graph != nullptr;
  if (mrf && graph->n_sites() != n) {
    throw DimensionMismatch("train: graph sites != data rows");
  }
  if (!mrf && !(cfg.beta_mode == BetaMode::fixed && cfg.beta_value == 0.0)) {
    throw ConfigError("train: a graph is required unless beta is fixed at 0");
  }

  const double sigma2_floor =
      std::max(cfg.sigma2_floor_scale * mean_column_variance(Y), 1e-300);

  // Initial parameters: one M-step from q0 with a zeroed latent block, a
  // ridge so one-hot singleton clusters stay factorizable, then the latent
  // block activation.
  LatentWStats wstats0;
  if (cfg.L_w > 0) {
    wstats0.mu.assign(static_cast<std::size_t>(K),
                      Eigen::MatrixXd::Zero(n, cfg.L_w));
    wstats0.S.assign(static_cast<std::size_t>(K),
                     Eigen::MatrixXd::Identity(cfg.L_w, cfg.L_w));
  }
  InverseModel model = m_step_theta(q0, wstats0, Y, T, cfg);
  if (model.dims.L_t > 0) {
    const double ridge = 1e-6 * std::max(mean_column_variance(T), 1e-12);
    for (auto& comp : model.components) {
      comp.Gamma_t.diagonal().array() += ridge;
    }
  }
  activate_latent_block(model, q0, Y, T, sigma2_floor, cfg.covariance_mode);

  PottsField field = field_from_log_weights(model.log_weights);
  if (cfg.beta_mode == BetaMode::fixed) {
    field.beta = cfg.beta_value;
  } else {
    field.beta = 1.0;
  }

  PsiEstimateOptions psi_opts;
  psi_opts.beta_max = cfg.beta_max;
  psi_opts.estimate_beta = (cfg.beta_mode == BetaMode::estimated);
  psi_opts.estimate_alpha = true;

  const bool exact_em = !mrf || field.beta == 0.0;

  TrainReport report;
  report.seed = cfg.rng_seed;
  MeanFieldPosterior q = std::move(q0);

  LikelihoodCache cache(model);
  Eigen::MatrixXd loglik = cache.log_lik_matrix(Y, T, cfg.threads);

  auto objective = [&](const InverseModel& m) -> double {
    if (exact_em || !mrf) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        total += log_sum_exp(m.log_weights + loglik.row(i).transpose());
      }
      return total;
    }
    return free_energy(field, graph, q, loglik);
  };

  double obj = objective(model);
  if (!std::isfinite(obj)) throw NonFinite("train: initial objective not finite");
  report.objective_trace.push_back(obj);

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    // E-steps on the current parameters. Without a graph the prior scores
    // are the mixture log-weights (the softmax is shift-invariant).
    PottsField estep_field = field;
    if (!mrf) estep_field.alpha = model.log_weights;
    q = e_step_z_from_loglik(loglik, estep_field, mrf ? graph : nullptr, q);
    const LatentWStats wstats = e_step_w(model, Y, T, cfg.threads);

    // M-steps.
    model = m_step_theta(q, wstats, Y, T, cfg);
    if (mrf) {
      field = estimate_psi(q, *graph, field, psi_opts);
      model.log_weights = field.alpha.array() - log_sum_exp(field.alpha);
    }

    cache = LikelihoodCache(model);
    loglik = cache.log_lik_matrix(Y, T, cfg.threads);
    const double next_obj = objective(model);
    if (!std::isfinite(next_obj)) {
      throw NonFinite("train: objective became non-finite at iteration " +
                      std::to_string(iter + 1));
    }
    report.objective_trace.push_back(next_obj);
    report.iterations = iter + 1;
    if (exact_em && next_obj < obj - 1e-8 * std::abs(obj)) {
      logging::warn("train: exact-EM objective decreased at iteration " +
                    std::to_string(iter + 1) + " by " +
                    std::to_string(next_obj - obj) + " (obj " +
                    std::to_string(obj) + ", L_w " + std::to_string(cfg.L_w) +
                    ")");
    }
    const double change = std::abs(next_obj - obj);
    obj = next_obj;
    if (change <= cfg.rel_tol * std::max(1.0, std::abs(obj))) break;
  }

  if (!mrf) field = field_from_log_weights(model.log_weights);
  report.model = std::move(model);
  report.field = field;
  report.q = std::move(q);
  return report;
}

TrainReport train(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                  const NeighborGraph* graph, const TrainConfig& cfg) {
  cfg.validate();
  const auto n = Y.rows();
  if (T.rows() != n && T.cols() > 0) {
    throw DimensionMismatch("train: Y and T row counts disagree");
  }
  if (n <= cfg.K) throw ConfigError("train: need N > K");
  Dims{static_cast<int>(Y.cols()), static_cast<int>(T.cols()), cfg.L_w, cfg.K, n}
      .validate();

  const auto start = std::chrono::steady_clock::now();
  TrainReport best;
  bool have_best = false;
  for (int restart = 0; restart < cfg.n_restarts; ++restart) {
    const std::uint64_t seed =
        cfg.rng_seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(restart);
    std::mt19937_64 rng(seed);

    MeanFieldPosterior q0;
    if (cfg.init_strategy == InitStrategy::kmeans) {
      const int L = static_cast<int>(T.cols()) + cfg.L_w;
      Eigen::MatrixXd joint(n, T.cols() + std::min<int>(L, Y.cols()));
      if (T.cols() > 0) joint.leftCols(T.cols()) = T;
      joint.rightCols(joint.cols() - T.cols()) =
          pca_project(Y, std::max(1, std::min<int>(L, static_cast<int>(Y.cols()))));
      standardize_columns_inplace(joint);
      q0 = one_hot(kmeans_labels(joint, cfg.K, rng), cfg.K);
    } else {
      std::uniform_int_distribution<int> pick(0, cfg.K - 1);
      std::vector<int> labels(static_cast<std::size_t>(n));
      for (auto& l : labels) l = pick(rng);
      q0 = one_hot(labels, cfg.K);
    }

    TrainConfig run_cfg = cfg;
    run_cfg.rng_seed = seed;
    TrainReport report = train_from_q(Y, T, graph, run_cfg, std::move(q0));
    report.restart_index = restart;
    if (!have_best ||
        report.objective_trace.back() > best.objective_trace.back()) {
      best = std::move(report);
      have_best = true;
    }
  }
  best.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return best;
}

}  // namespace gllim
