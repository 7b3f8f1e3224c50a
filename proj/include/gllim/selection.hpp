#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gllim/model.hpp"
#include "gllim/vem.hpp"

namespace gllim {

struct BicRecord {
  int L_w = 0;
  std::int64_t dof = 0;
  double loglik = 0.0;
  double bic = 0.0;
  std::uint64_t seed = 0;
};

/// Free-parameter count K (D (L_w + L_t + 1) + L_t (L_t + 3) / 2 + 1).
/// The closed form counts one isotropic variance per component with the
/// latent-block mean/covariance pinned for identifiability; per-component
/// variances add K - 1 over the shared-variance convention.
std::int64_t dof(const Dims& dims,
                 CovarianceMode mode = CovarianceMode::isotropic_equal);

/// -2 L + dof log N with L the exact i.i.d. mixture log-likelihood. The
/// model must come from non-spatial training (the multinomial weights are
/// used). Per-component vs shared variances are detected from the model.
BicRecord bic(const InverseModel& model, const Eigen::MatrixXd& Y,
              const Eigen::MatrixXd& T, int threads = 0);

struct SelectionResult {
  int best_L_w = 0;
  std::vector<BicRecord> records;
};

/// Trains one model per candidate latent dimension (same seed policy for
/// every fit) and returns the BIC minimizer, ties broken toward the smaller
/// dimension. Failed fits are skipped with a warning; at least one fit must
/// succeed. Fits run on parallel worker slots, records merge in L_w order.
SelectionResult select_lw(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                          const TrainConfig& base_cfg,
                          const std::vector<int>& lw_range, int workers = 0);

/// CSV rows "L_w,dof,loglik,bic" with a header.
std::string bic_records_csv(const std::vector<BicRecord>& records);

}  // namespace gllim
