#include <doctest.h>

#include <cmath>
#include <random>

#include "gllim/forward.hpp"
#include "gllim/synth.hpp"
#include "oracles.hpp"

using namespace gllim;

namespace {

InverseModel one_dim_model(double A, double b, double c, double Gamma,
                           double sigma2) {
  InverseModel model;
  model.dims = Dims{1, 1, 0, 1, 1};
  model.log_weights = Eigen::VectorXd::Zero(1);
  Component comp;
  comp.c_t = Eigen::VectorXd::Constant(1, c);
  comp.c_w.resize(0);
  comp.Gamma_t = Eigen::MatrixXd::Constant(1, 1, Gamma);
  comp.Gamma_w.resize(0, 0);
  comp.A_t = Eigen::MatrixXd::Constant(1, 1, A);
  comp.A_w.resize(1, 0);
  comp.b = Eigen::VectorXd::Constant(1, b);
  comp.sigma2 = sigma2;
  model.components.push_back(comp);
  return model;
}

InverseModel random_mixture_1d(std::mt19937_64& rng, int K) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.3, 1.5);
  InverseModel model;
  model.dims = Dims{1, 1, 0, K, 1};
  Eigen::VectorXd w(K);
  for (int k = 0; k < K; ++k) w[k] = unif(rng);
  model.log_weights = (w / w.sum()).array().log();
  for (int k = 0; k < K; ++k) {
    Component comp;
    comp.c_t = Eigen::VectorXd::Constant(1, 2.0 * normal(rng));
    comp.c_w.resize(0);
    comp.Gamma_t = Eigen::MatrixXd::Constant(1, 1, unif(rng));
    comp.Gamma_w.resize(0, 0);
    comp.A_t = Eigen::MatrixXd::Constant(1, 1, normal(rng));
    comp.A_w.resize(1, 0);
    comp.b = Eigen::VectorXd::Constant(1, normal(rng));
    comp.sigma2 = unif(rng);
    model.components.push_back(comp);
  }
  return model;
}

/// Joint density p(x, y) of the one dimensional mixture, from the raw
/// definition.
double joint_density_1d(const InverseModel& m, double x, double y) {
  double p = 0.0;
  for (int k = 0; k < m.K(); ++k) {
    const auto& comp = m.components[static_cast<std::size_t>(k)];
    p += std::exp(m.log_weights[k]) *
         std::exp(oracles::dense_log_gaussian(
             Eigen::VectorXd::Constant(1, x), comp.c_t, comp.Gamma_t)) *
         std::exp(oracles::dense_log_gaussian(
             Eigen::VectorXd::Constant(1, y),
             comp.A_t * Eigen::VectorXd::Constant(1, x) + comp.b,
             comp.sigma2 * Eigen::MatrixXd::Identity(1, 1)));
  }
  return p;
}

SpectralImage constant_image(int h, int w, const Eigen::VectorXd& spectrum) {
  SpectralImage img;
  img.height = h;
  img.width = w;
  img.cube = spectrum.transpose().replicate(static_cast<Eigen::Index>(h) * w, 1);
  return img;
}

}  // namespace

TEST_CASE("decoupled component collapses to the prior") {
  InverseModel model = one_dim_model(0.0, 0.4, 0.9, 1.7, 0.6);
  const auto fm = to_forward(model);
  const auto& c = fm.component(0);
  CHECK(c.c_star[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(c.Gamma_star(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(c.Sigma_star(0, 0) == doctest::Approx(1.7).epsilon(1e-9));
  CHECK(c.A_star(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.b_star[0] == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("unit model conversion in closed form") {
  // A=1, b=0, c=0, Gamma=1, sigma2=1: the joint is N(0, [[1,1],[1,2]]).
  const auto fm = to_forward(one_dim_model(1.0, 0.0, 0.0, 1.0, 1.0));
  const auto& c = fm.component(0);
  CHECK(c.c_star[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.Gamma_star(0, 0) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(c.Sigma_star(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(c.A_star(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(c.b_star[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("forward density matches grid conditioning of the joint") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    const int K = 1 + static_cast<int>(rng() % 3);
    const auto model = random_mixture_1d(rng, K);
    const auto fm = to_forward(model);
    std::normal_distribution<double> normal;
    const double y = 1.5 * normal(rng);

    const int grid_n = 2001;
    const double lo = -14.0, hi = 14.0;
    const double h = (hi - lo) / (grid_n - 1);

    // Normalized grid masses from the joint.
    Eigen::VectorXd joint(grid_n);
    for (int i = 0; i < grid_n; ++i) {
      joint[i] = joint_density_1d(model, lo + h * i, y);
    }
    const double mass = joint.sum() * h;

    // Same grid under the converted mixture.
    const auto mix = forward_density(fm, Eigen::VectorXd::Constant(1, y));
    Eigen::VectorXd converted(grid_n);
    for (int i = 0; i < grid_n; ++i) {
      double p = 0.0;
      for (int k = 0; k < K; ++k) {
        p += mix.weights[k] *
             std::exp(oracles::dense_log_gaussian(
                 Eigen::VectorXd::Constant(1, lo + h * i),
                 mix.means.row(k).transpose(), fm.component(k).Sigma_star));
      }
      converted[i] = p;
    }
    const double tv = 0.5 * h * ((joint / mass) - converted).cwiseAbs().sum();
    CHECK(tv < 1e-4);
  }
}

TEST_CASE("single component prediction is the affine map") {
  const auto fm = to_forward(one_dim_model(2.0, 1.0, 0.3, 0.8, 0.2));
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 1.4);
  const auto mix = forward_density(fm, y);
  CHECK(mix.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(predict(fm, y)[0] ==
        doctest::Approx(fm.component(0).A_star(0, 0) * 1.4 +
                        fm.component(0).b_star[0])
            .epsilon(1e-12));
}

TEST_CASE("far separated component takes all the weight") {
  std::mt19937_64 rng(66);
  auto model = random_mixture_1d(rng, 2);
  // Push the second component's observation far away.
  model.components[1].b[0] += 100.0;
  const auto fm = to_forward(model);
  const auto mix = forward_density(fm, fm.component(0).c_star);
  CHECK(mix.weights[0] > 0.999);
}

TEST_CASE("gate weights always normalize") {
  std::mt19937_64 rng(67);
  const auto model = random_mixture_1d(rng, 3);
  const auto fm = to_forward(model);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 20; ++i) {
    const auto mix = forward_density(fm, Eigen::VectorXd::Constant(1, 3.0 * normal(rng)));
    CHECK(mix.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("symmetric two component model averages the two affine maps") {
  InverseModel model;
  model.dims = Dims{1, 1, 0, 2, 1};
  model.log_weights = Eigen::VectorXd::Constant(2, std::log(0.5));
  for (double sign : {1.0, -1.0}) {
    Component comp;
    comp.c_t = Eigen::VectorXd::Constant(1, sign * 1.0);
    comp.c_w.resize(0);
    comp.Gamma_t = Eigen::MatrixXd::Constant(1, 1, 0.5);
    comp.Gamma_w.resize(0, 0);
    comp.A_t = Eigen::MatrixXd::Constant(1, 1, sign * 2.0);
    comp.A_w.resize(1, 0);
    comp.b = Eigen::VectorXd::Constant(1, 0.0);
    comp.sigma2 = 0.3;
    model.components.push_back(comp);
  }
  // y = 0 sits symmetrically between the components.
  const auto fm = to_forward(model);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
  const auto mix = forward_density(fm, y);
  CHECK(mix.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  const double expected =
      0.5 * (fm.conditional_mean(y, 0)[0] + fm.conditional_mean(y, 1)[0]);
  CHECK(predict(fm, y)[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("posterior mean matches quadrature") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 10; ++trial) {
    const auto model = random_mixture_1d(rng, 2);
    const auto fm = to_forward(model);
    const double y = normal(rng);
    const int grid_n = 4001;
    const double lo = -16.0, hi = 16.0;
    const double h = (hi - lo) / (grid_n - 1);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < grid_n; ++i) {
      const double x = lo + h * i;
      const double p = joint_density_1d(model, x, y);
      num += x * p;
      den += p;
    }
    const Eigen::VectorXd y_vec = Eigen::VectorXd::Constant(1, y);
    CHECK(predict(fm, y_vec)[0] == doctest::Approx(num / den).epsilon(1e-4));
  }
}

TEST_CASE("response reparameterization commutes with conversion") {
  // Mapping the response x -> M x + v and converting equals converting and
  // mapping the predictions.
  std::mt19937_64 rng(88);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 10; ++trial) {
    Dims dims{3, 2, 0, 2, 1};
    const auto model = generate_synthetic_model(rng, dims, GeneratorOptions{});
    Eigen::MatrixXd M(2, 2);
    do {
      for (int i = 0; i < 4; ++i) M(i / 2, i % 2) = normal(rng);
    } while (std::abs(M.determinant()) < 0.1);
    const Eigen::VectorXd v =
        (Eigen::VectorXd(2) << normal(rng), normal(rng)).finished();

    InverseModel mapped = model;
    const Eigen::MatrixXd M_inv = M.inverse();
    for (auto& comp : mapped.components) {
      comp.c_t = M * comp.c_t + v;
      comp.Gamma_t = M * comp.Gamma_t * M.transpose();
      comp.A_t = comp.A_t * M_inv;
      comp.b = comp.b - comp.A_t * v;
    }
    const auto fm = to_forward(model);
    const auto fm_mapped = to_forward(mapped);
    const Eigen::VectorXd y =
        (Eigen::VectorXd(3) << normal(rng), normal(rng), normal(rng)).finished();
    const Eigen::VectorXd direct = M * predict(fm, y) + v;
    const Eigen::VectorXd through = predict(fm_mapped, y);
    CHECK((direct - through).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("spatial prediction with zero interaction is per-pixel prediction") {
  std::mt19937_64 rng(99);
  Dims dims{4, 2, 0, 3, 1};
  const auto truth = generate_synthetic_model(rng, dims, GeneratorOptions{});
  const auto sampled = sample_dataset(truth, 48, rng);
  SpectralImage img;
  img.height = 6;
  img.width = 8;
  img.cube = sampled.Y;
  const auto graph = NeighborGraph::lattice(6, 8, 8);
  const auto fm = to_forward(truth);

  SpatialPredictOptions opts;
  opts.estimate_beta = false;
  opts.beta_value = 0.0;
  opts.alpha_mode = AlphaPredictMode::fixed_log_weights;
  const auto spatial = predict_spatial(fm, img, graph, opts);
  const auto plain = predict(fm, img.cube);
  CHECK(spatial.converged);
  // Bit-for-bit: the two paths share their arithmetic exactly.
  REQUIRE(spatial.x_hat.rows() == plain.rows());
  for (Eigen::Index i = 0; i < plain.rows(); ++i) {
    for (Eigen::Index j = 0; j < plain.cols(); ++j) {
      CHECK(spatial.x_hat(i, j) == plain(i, j));
    }
  }
}

TEST_CASE("constant images give constant predictions") {
  std::mt19937_64 rng(111);
  Dims dims{4, 1, 0, 2, 1};
  const auto truth = generate_synthetic_model(rng, dims, GeneratorOptions{});
  const auto fm = to_forward(truth);
  const Eigen::VectorXd spectrum = Eigen::VectorXd::Constant(4, 0.37);
  const auto img = constant_image(5, 5, spectrum);
  const auto graph = NeighborGraph::lattice(5, 5, 4);
  const auto result = predict_spatial(fm, img, graph, SpatialPredictOptions{});
  for (Eigen::Index i = 1; i < result.x_hat.rows(); ++i) {
    CHECK((result.x_hat.row(i) - result.x_hat.row(0)).lpNorm<Eigen::Infinity>() <
          1e-12);
  }
}

TEST_CASE("isolated vertices reduce to per-pixel prediction at any beta") {
  std::mt19937_64 rng(123);
  Dims dims{3, 1, 0, 2, 1};
  const auto truth = generate_synthetic_model(rng, dims, GeneratorOptions{});
  const auto sampled = sample_dataset(truth, 12, rng);
  SpectralImage img;
  img.height = 3;
  img.width = 4;
  img.cube = sampled.Y;
  const NeighborGraph graph(12);  // no edges
  const auto fm = to_forward(truth);
  const auto plain = predict(fm, img.cube);
  for (double beta : {0.0, 2.0, 7.0}) {
    SpatialPredictOptions opts;
    opts.estimate_beta = false;
    opts.beta_value = beta;
    opts.alpha_mode = AlphaPredictMode::fixed_log_weights;
    const auto spatial = predict_spatial(fm, img, graph, opts);
    CHECK((spatial.x_hat - plain).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("interaction denoises a checkerboard") {
  // Two well separated classes arranged as 8x8 blocks; likelihood noise
  // flips a fraction of pixels. The smoothing prior must recover strictly
  // more pixels than independent assignment.
  std::mt19937_64 rng(321);
  std::normal_distribution<double> normal;
  const int h = 32, w = 32;
  Dims dims{6, 1, 0, 2, 1};
  GeneratorOptions gen;
  gen.separation = 5.0;
  gen.noise_std = 0.2;
  const auto truth = generate_synthetic_model(rng, dims, gen);

  SpectralImage img;
  img.height = h;
  img.width = w;
  img.cube.resize(h * w, 6);
  std::vector<int> clean_label(static_cast<std::size_t>(h * w));
  std::uniform_real_distribution<double> unif;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int block = ((r / 8) + (c / 8)) % 2;
      const auto pixel = static_cast<std::int64_t>(r) * w + c;
      clean_label[static_cast<std::size_t>(pixel)] = block;
      const auto& comp = truth.components[static_cast<std::size_t>(block)];
      Eigen::VectorXd t(1), noise(6);
      t[0] = comp.c_t[0] + 0.3 * normal(rng);
      for (int j = 0; j < 6; ++j) noise[j] = normal(rng);
      Eigen::VectorXd y =
          comp.A_t * t + comp.b + std::sqrt(comp.sigma2) * noise;
      if (unif(rng) < 0.05) y += 3.0 * Eigen::VectorXd::Random(6);  // corrupt
      img.cube.row(pixel) = y.transpose();
    }
  }

  const auto fm = to_forward(truth);
  const auto graph = NeighborGraph::lattice(h, w, 8);

  auto accuracy = [&](const MeanFieldPosterior& q) {
    int hits = 0;
    for (std::int64_t i = 0; i < q.rows(); ++i) {
      int argmax = 0;
      q.row(i).maxCoeff(&argmax);
      if (argmax == clean_label[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(q.rows());
  };

  SpatialPredictOptions sharp;
  sharp.estimate_beta = false;
  sharp.beta_value = 0.0;
  sharp.alpha_mode = AlphaPredictMode::fixed_log_weights;
  const auto independent = predict_spatial(fm, img, graph, sharp);

  SpatialPredictOptions smooth = sharp;
  smooth.beta_value = 2.0;
  const auto coupled = predict_spatial(fm, img, graph, smooth);

  CHECK(accuracy(coupled.q) > accuracy(independent.q));
}

TEST_CASE("clamping applies to observed coordinates only") {
  Eigen::VectorXd x(3);
  x << -0.2, 0.5, 1.3;
  const auto bounds = std::make_optional(std::make_pair(
      Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)));
  // L_t = 2: the third coordinate is latent and stays untouched.
  const Eigen::VectorXd clamped = clamp_proportions(x, bounds, 2);
  CHECK(clamped[0] == 0.0);
  CHECK(clamped[1] == 0.5);
  CHECK(clamped[2] == 1.3);

  Eigen::VectorXd inside(2);
  inside << 0.4, 0.9;
  const auto full_bounds = std::make_optional(std::make_pair(
      Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)));
  CHECK(clamp_proportions(inside, full_bounds, 2) == inside);
  CHECK(clamp_proportions(x, std::nullopt, 2) == x);
}
