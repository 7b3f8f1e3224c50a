#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gllim/potts.hpp"
#include "oracles.hpp"

using namespace gllim;

namespace {

MeanFieldPosterior random_posterior(std::int64_t n, int K, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  MeanFieldPosterior q(n, K);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) q(i, k) = unif(rng);
    q.row(i) /= q.row(i).sum();
  }
  return q;
}

Eigen::VectorXd
pack_psi(const PottsField& f) {
  Eigen::VectorXd x(f.K());
  x[0] = f.beta;
  x.tail(f.K() - 1) = f.alpha.tail(f.K() - 1);
  return x;
}

PottsField unpack_psi(const Eigen::VectorXd& x) {
  PottsField f;
  f.alpha = Eigen::VectorXd::Zero(x.size());
  f.alpha.tail(x.size() - 1) = x.tail(x.size() - 1);
  f.beta = x[0];
  return f;
}

}  // namespace

TEST_CASE("lattice neighborhoods") {
  const auto g4 = NeighborGraph::lattice(3, 4, 4);
  CHECK(g4.n_sites() == 12);
  CHECK(g4.neighbors(0).size() == 2);   // corner
  CHECK(g4.neighbors(5).size() == 4);   // interior
  const auto g8 = NeighborGraph::lattice(3, 4, 8);
  CHECK(g8.neighbors(5).size() == 8);   // interior of an 8-connected lattice
  CHECK(g8.neighbors(0).size() == 3);
  CHECK_NOTHROW(g8.validate());
  CHECK_THROWS_AS(NeighborGraph::lattice(2, 2, 6), ConfigError);
}

TEST_CASE("edge list files round trip") {
  const auto path =
      (std::filesystem::temp_directory_path() / "gllim_edges.txt").string();
  {
    std::ofstream out(path);
    out << "# tiny graph\n0 1\n1 2\n2 0\n";
  }
  const auto g = NeighborGraph::from_edge_list(path);
  CHECK(g.n_sites() == 3);
  CHECK(g.n_edges() == 3);
  CHECK_NOTHROW(g.validate());
  std::filesystem::remove(path);
}

TEST_CASE("self loops are rejected") {
  NeighborGraph g(3);
  CHECK_THROWS_AS(g.add_edge(1, 1), ConfigError);
}

TEST_CASE("potts energy with no interaction is the field sum") {
  const auto g = NeighborGraph::lattice(2, 3, 4);
  PottsField f;
  f.alpha = (Eigen::VectorXd(3) << 0.0, 0.4, -0.2).finished();
  f.beta = 0.0;
  const std::vector<int> z{0, 1, 2, 1, 1, 0};
  double expected = 0.0;
  for (int zi : z) expected += f.alpha[zi];
  CHECK(potts_energy(z, f, g) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("single pinned site has zero energy") {
  NeighborGraph g(1);
  PottsField f;
  f.alpha = Eigen::VectorXd::Zero(2);
  f.beta = 3.0;
  CHECK(potts_energy({0}, f, g) == 0.0);
}

TEST_CASE("two agreeing neighbors") {
  NeighborGraph g(2);
  g.add_edge(0, 1);
  PottsField f;
  f.alpha = (Eigen::VectorXd(2) << 0.0, 0.3).finished();
  f.beta = 1.0;
  // alpha contributions 0.3 + 0.3, half-beta per directed agreement 0.5 + 0.5
  CHECK(potts_energy({1, 1}, f, g) == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("labels outside the range are rejected") {
  NeighborGraph g(2);
  g.add_edge(0, 1);
  PottsField f;
  f.alpha = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(potts_energy({0, 2}, f, g), InvalidLabel);
  CHECK_THROWS_AS(potts_energy({-1, 0}, f, g), InvalidLabel);
}

TEST_CASE("energy is invariant under the 180 degree lattice automorphism") {
  const int h = 3, w = 4;
  const auto g = NeighborGraph::lattice(h, w, 8);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, 2);
  PottsField f;
  f.alpha = (Eigen::VectorXd(3) << 0.0, 0.7, -0.4).finished();
  f.beta = 1.3;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> z(static_cast<std::size_t>(h * w));
    for (auto& zi : z) zi = pick(rng);
    std::vector<int> rotated(z.size());
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        rotated[static_cast<std::size_t>((h - 1 - r) * w + (w - 1 - c))] =
            z[static_cast<std::size_t>(r * w + c)];
      }
    }
    CHECK(potts_energy(z, f, g) ==
          doctest::Approx(potts_energy(rotated, f, g)).epsilon(1e-12));
  }
}

TEST_CASE("flat field gives a uniform prior") {
  const auto g = NeighborGraph::lattice(2, 2, 4);
  std::mt19937_64 rng(2);
  const auto q = random_posterior(4, 3, rng);
  const auto prior = mean_field_prior(q, PottsField::zeros(3), g);
  CHECK((prior.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("external field alone is a softmax") {
  const auto g = NeighborGraph::lattice(2, 2, 4);
  std::mt19937_64 rng(3);
  const auto q = random_posterior(4, 2, rng);
  PottsField f;
  f.alpha = (Eigen::VectorXd(2) << 0.0, std::log(3.0)).finished();
  f.beta = 0.0;
  const auto prior = mean_field_prior(q, f, g);
  for (int i = 0; i < 4; ++i) {
    CHECK(prior(i, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(prior(i, 1) == doctest::Approx(0.75).epsilon(1e-12));
  }
}

TEST_CASE("one confident neighbor tilts the prior") {
  NeighborGraph g(2);
  g.add_edge(0, 1);
  MeanFieldPosterior q(2, 2);
  q << 1.0, 0.0, 0.5, 0.5;
  PottsField f;
  f.alpha = Eigen::VectorXd::Zero(2);
  f.beta = 2.0;
  const auto prior = mean_field_prior(q, f, g);
  const double e2 = std::exp(2.0);
  CHECK(prior(1, 0) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(prior(1, 1) == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-12));
}

TEST_CASE("prior rows always sum to one") {
  std::mt19937_64 rng(9);
  const auto g = NeighborGraph::lattice(4, 4, 8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = random_posterior(16, 4, rng);
    PottsField f;
    f.alpha = Eigen::VectorXd::Zero(4);
    f.alpha.tail(3).setRandom();
    f.beta = 2.0 * std::abs(f.alpha[1]);
    const auto prior = mean_field_prior(q, f, g);
    for (int i = 0; i < 16; ++i) {
      CHECK(prior.row(i).sum() == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("flat field objective is minus N log K") {
  const auto g = NeighborGraph::lattice(3, 3, 4);
  std::mt19937_64 rng(4);
  for (int K : {2, 5}) {
    const auto q = random_posterior(9, K, rng);
    CHECK(psi_objective(q, PottsField::zeros(K), g) ==
          doctest::Approx(-9.0 * std::log(static_cast<double>(K))).epsilon(1e-12));
  }
}

TEST_CASE("single site objective in closed form") {
  NeighborGraph g(1);
  MeanFieldPosterior q(1, 2);
  q << 1.0, 0.0;
  for (double a : {-1.0, 0.3, 2.0}) {
    PottsField f;
    f.alpha = (Eigen::VectorXd(2) << 0.0, a).finished();
    f.beta = 0.7;  // no neighbors; must not matter
    CHECK(psi_objective(q, f, g) ==
          doctest::Approx(-std::log1p(std::exp(a))).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient equals central finite differences") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  for (int K : {2, 3, 5}) {
    const auto g = NeighborGraph::lattice(3, 3, 8);
    const auto q = random_posterior(9, K, rng);
    PottsField f;
    f.alpha = Eigen::VectorXd::Zero(K);
    for (int k = 1; k < K; ++k) f.alpha[k] = 0.5 * normal(rng);
    f.beta = std::abs(normal(rng));

    const Eigen::VectorXd analytic = psi_gradient(q, f, g);
    const Eigen::VectorXd fd = oracles::finite_difference_gradient(
        [&](const Eigen::VectorXd& x) {
          return psi_objective(q, unpack_psi(x), g);
        },
        pack_psi(f), 1e-5);
    const double scale = std::max(1.0, analytic.lpNorm<Eigen::Infinity>());
    CHECK((analytic - fd).lpNorm<Eigen::Infinity>() / scale < 1e-6);
  }
}

TEST_CASE("matched moments zero the gradient") {
  // Uniform q on any lattice is the mean-field prior of the flat field for
  // every beta, so the whole gradient vanishes identically.
  const auto g = NeighborGraph::lattice(3, 4, 8);
  const MeanFieldPosterior q = MeanFieldPosterior::Constant(12, 3, 1.0 / 3.0);
  for (double beta : {0.0, 1.0, 4.0}) {
    PottsField f;
    f.alpha = Eigen::VectorXd::Zero(3);
    f.beta = beta;
    const auto prior = mean_field_prior(q, f, g);
    REQUIRE((prior - q).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(psi_gradient(q, f, g).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("uniform prior alpha gradient is the excess mass") {
  const auto g = NeighborGraph::lattice(2, 3, 4);
  std::mt19937_64 rng(31);
  const auto q = random_posterior(6, 2, rng);
  const Eigen::VectorXd grad = psi_gradient(q, PottsField::zeros(2), g);
  CHECK(grad[1] == doctest::Approx((q.col(1).array() - 0.5).sum()).epsilon(1e-12));
}

TEST_CASE("objective is concave") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  const auto g = NeighborGraph::lattice(4, 4, 8);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 3;
    const auto q = random_posterior(16, K, rng);
    Eigen::VectorXd x1(K), x2(K);
    for (int i = 0; i < K; ++i) {
      x1[i] = normal(rng);
      x2[i] = normal(rng);
    }
    x1[0] = std::abs(x1[0]);
    x2[0] = std::abs(x2[0]);
    const double f1 = psi_objective(q, unpack_psi(x1), g);
    const double f2 = psi_objective(q, unpack_psi(x2), g);
    const double fm = psi_objective(q, unpack_psi(0.5 * (x1 + x2)), g);
    CHECK(fm >= 0.5 * f1 + 0.5 * f2 - 1e-12);
  }
}

TEST_CASE("ascent never decreases the objective and reaches the optimum") {
  std::mt19937_64 rng(17);
  const auto g = NeighborGraph::lattice(4, 4, 8);
  const auto q = random_posterior(16, 3, rng);
  const PottsField init = PottsField::zeros(3);
  const double before = psi_objective(q, init, g);
  PsiEstimateOptions opts;
  opts.grad_tol = 1e-8;
  const PottsField psi = estimate_psi(q, g, init, opts);
  const double after = psi_objective(q, psi, g);
  CHECK(after >= before);
  CHECK(psi.alpha[0] == 0.0);
  // At the constrained optimum the projected gradient vanishes: beta may sit
  // on its lower bound with the raw gradient pointing outward.
  Eigen::VectorXd grad = psi_gradient(q, psi, g);
  if ((psi.beta <= 0.0 && grad[0] < 0.0) || (psi.beta >= opts.beta_max && grad[0] > 0.0)) {
    grad[0] = 0.0;
  }
  CHECK(grad.lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("self-consistent posteriors are recovered") {
  // Build a mean-field fixed point of a known field, then ask the estimator
  // to find a field whose prior reproduces it.
  const auto g = NeighborGraph::lattice(6, 6, 4);
  PottsField truth;
  truth.alpha = (Eigen::VectorXd(3) << 0.0, 0.5, -0.3).finished();
  truth.beta = 0.8;
  std::mt19937_64 rng(41);
  MeanFieldPosterior q = random_posterior(36, 3, rng);
  for (int it = 0; it < 500; ++it) {
    const MeanFieldPosterior next = mean_field_prior(q, truth, g);
    const double delta = (next - q).lpNorm<Eigen::Infinity>();
    q = next;
    if (delta < 1e-14) break;
  }
  REQUIRE((mean_field_prior(q, truth, g) - q).lpNorm<Eigen::Infinity>() < 1e-12);

  PsiEstimateOptions opts;
  opts.grad_tol = 1e-10;
  opts.max_iter = 5000;
  const PottsField psi = estimate_psi(q, g, PottsField::zeros(3), opts);
  const auto prior = mean_field_prior(q, psi, g);
  CHECK((prior - q).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("uniform posteriors leave the flat field untouched") {
  const auto g = NeighborGraph::lattice(3, 3, 8);
  const MeanFieldPosterior q = MeanFieldPosterior::Constant(9, 2, 0.5);
  PottsField init = PottsField::zeros(2);
  init.beta = 0.3;
  const PottsField psi = estimate_psi(q, g, init);
  CHECK(psi.alpha.lpNorm<Eigen::Infinity>() == 0.0);
  // Flat direction: beta gradient is identically zero at the uniform point.
  CHECK(psi_gradient(q, psi, g)[0] == 0.0);
  CHECK(psi.beta == doctest::Approx(0.3));
}

TEST_CASE("constant one-hot posteriors drive beta to the clamp") {
  const auto g = NeighborGraph::lattice(3, 3, 4);
  MeanFieldPosterior q = MeanFieldPosterior::Zero(9, 2);
  q.col(0).setOnes();
  // The interaction gradient stays strictly positive for every finite beta:
  // sum_n (1 - prior_n(1)) * degree_n > 0.
  for (double beta : {0.0, 1.0, 3.0, 8.0}) {
    PottsField f = PottsField::zeros(2);
    f.beta = beta;
    CHECK(psi_gradient(q, f, g)[0] > 0.0);
  }
  PsiEstimateOptions opts;
  opts.estimate_alpha = false;  // isolate the interaction estimate
  opts.beta_max = 3.0;  // reachable before the gradient decays below tolerance
  opts.max_iter = 2000;
  const PottsField psi = estimate_psi(q, g, PottsField::zeros(2), opts);
  CHECK(psi.beta == doctest::Approx(3.0));
}
