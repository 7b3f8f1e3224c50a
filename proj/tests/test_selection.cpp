#include <doctest.h>

#include <cmath>
#include <random>

#include "gllim/gaussian.hpp"
#include "gllim/selection.hpp"
#include "gllim/synth.hpp"
#include "oracles.hpp"

using namespace gllim;

namespace {

/// Free scalars in a component under the pinned-latent convention: A, b, the
/// observed-block mean, the upper triangle of the observed-block covariance,
/// and one variance. Counted from the actual matrices, not from a formula.
std::int64_t count_free_scalars(const InverseModel& model) {
  std::int64_t count = 0;
  for (const auto& comp : model.components) {
    count += comp.A_t.size() + comp.A_w.size();
    count += comp.b.size();
    count += comp.c_t.size();
    count += comp.Gamma_t.rows() * (comp.Gamma_t.rows() + 1) / 2;
    count += 1;  // sigma2
  }
  return count;
}

}  // namespace

TEST_CASE("parameter count closed form") {
  CHECK(dof(Dims{1, 1, 0, 1, 1}) == 5);
  CHECK(dof(Dims{3, 1, 1, 2, 1}) == 24);
  // Linear in K.
  const auto base = dof(Dims{7, 2, 3, 4, 1});
  CHECK(dof(Dims{7, 2, 3, 8, 1}) == 2 * base);
  // Per-component variances add K - 1.
  CHECK(dof(Dims{3, 1, 1, 2, 1}, CovarianceMode::isotropic) == 24 + 1);
}

TEST_CASE("parameter count matches a brute force scan of the model") {
  std::mt19937_64 rng(17);
  for (const auto& dims :
       {Dims{5, 2, 1, 3, 1}, Dims{8, 1, 0, 2, 1}, Dims{4, 2, 2, 5, 1}}) {
    const auto model = generate_synthetic_model(rng, dims, GeneratorOptions{});
    CHECK(dof(dims) == count_free_scalars(model));
  }
}

TEST_CASE("single observation removes the penalty") {
  std::mt19937_64 rng(3);
  Dims dims{2, 1, 0, 1, 1};
  const auto model = generate_synthetic_model(rng, dims, GeneratorOptions{});
  const auto data = sample_dataset(model, 1, rng);
  const auto rec = bic(model, data.Y, data.T);
  CHECK(rec.bic == doctest::Approx(-2.0 * rec.loglik).epsilon(1e-15));
}

TEST_CASE("an unused latent dimension strictly increases the criterion") {
  std::mt19937_64 rng(5);
  Dims dims{4, 1, 0, 2, 1};
  const auto model = generate_synthetic_model(rng, dims, GeneratorOptions{});
  const auto data = sample_dataset(model, 200, rng);

  InverseModel padded = model;
  padded.dims.L_w = 1;
  for (auto& comp : padded.components) {
    comp.c_w = Eigen::VectorXd::Zero(1);
    comp.Gamma_w = Eigen::MatrixXd::Identity(1, 1);
    comp.A_w = Eigen::MatrixXd::Zero(4, 1);
  }
  const auto rec = bic(model, data.Y, data.T);
  const auto rec_padded = bic(padded, data.Y, data.T);
  CHECK(rec_padded.loglik == doctest::Approx(rec.loglik).epsilon(1e-12));
  CHECK(rec_padded.bic > rec.bic);
}

TEST_CASE("criterion equals an independent per point resummation") {
  std::mt19937_64 rng(7);
  Dims dims{3, 1, 0, 2, 1};
  GeneratorOptions gen;
  gen.separation = 2.0;
  const auto model = generate_synthetic_model(rng, dims, gen);
  const auto data = sample_dataset(model, 150, rng);
  const auto rec = bic(model, data.Y, data.T);

  double loglik = 0.0;
  for (int i = 0; i < 150; ++i) {
    double p = 0.0;
    for (int k = 0; k < 2; ++k) {
      const auto& comp = model.components[static_cast<std::size_t>(k)];
      const Eigen::VectorXd t = data.T.row(i);
      const Eigen::VectorXd y = data.Y.row(i);
      p += std::exp(model.log_weights[k]) *
           std::exp(oracles::dense_log_gaussian(t, comp.c_t, comp.Gamma_t)) *
           std::exp(oracles::dense_log_gaussian(
               y, comp.A_t * t + comp.b,
               comp.sigma2 * Eigen::MatrixXd::Identity(3, 3)));
    }
    loglik += std::log(p);
  }
  const double expected = -2.0 * loglik + static_cast<double>(rec.dof) *
                                              std::log(150.0);
  CHECK(rec.bic == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("singleton range returns its element") {
  std::mt19937_64 rng(9);
  Dims dims{6, 1, 0, 2, 1};
  const auto model = generate_synthetic_model(rng, dims, GeneratorOptions{});
  const auto data = sample_dataset(model, 300, rng);
  TrainConfig cfg;
  cfg.K = 2;
  cfg.max_iter = 30;
  cfg.n_restarts = 1;
  cfg.covariance_mode = CovarianceMode::isotropic_equal;
  const auto result = select_lw(data.Y, data.T, cfg, {3});
  CHECK(result.best_L_w == 3);
  CHECK(result.records.size() == 1);
}

TEST_CASE("strong fully observed signal selects zero latent dimensions") {
  std::mt19937_64 rng(11);
  Dims dims{8, 2, 0, 3, 1};
  GeneratorOptions gen;
  gen.separation = 4.0;
  gen.noise_std = 0.05;
  const auto truth = generate_synthetic_model(rng, dims, gen);
  const auto data = sample_dataset(truth, 2000, rng);
  TrainConfig cfg;
  cfg.K = 3;
  cfg.max_iter = 60;
  cfg.n_restarts = 2;
  cfg.rng_seed = 5;
  cfg.covariance_mode = CovarianceMode::isotropic_equal;
  const auto result = select_lw(data.Y, data.T, cfg, {0, 1, 2});
  CHECK(result.best_L_w == 0);
  CHECK(result.records.size() == 3);
  // One record per candidate, ordered.
  CHECK(result.records[0].L_w == 0);
  CHECK(result.records[2].L_w == 2);
}

TEST_CASE("a sweep where every fit fails is an error") {
  // Three samples cannot support K=5 (train requires N > K), so every
  // candidate fit is skipped and the sweep reports the failure.
  Eigen::MatrixXd Y = Eigen::MatrixXd::Random(3, 4);
  Eigen::MatrixXd T = Eigen::MatrixXd::Random(3, 1);
  TrainConfig cfg;
  cfg.K = 5;
  CHECK_THROWS_AS(select_lw(Y, T, cfg, {0, 1}), NumericError);
}

TEST_CASE("records render as csv") {
  std::vector<BicRecord> records{{0, 10, -123.5, 300.0, 1},
                                 {1, 14, -120.0, 305.0, 1}};
  const auto csv = bic_records_csv(records);
  CHECK(csv.find("L_w,dof,loglik,bic\n") == 0);
  CHECK(csv.find("0,10,") != std::string::npos);
}
