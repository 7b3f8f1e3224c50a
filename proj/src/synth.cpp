#include "gllim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gllim {

InverseModel generate_synthetic_model(std::mt19937_64& rng, const Dims& dims,
                                      const GeneratorOptions& opts) {
  dims.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn_matrix = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
    }
    return m;
  };

  InverseModel model;
  model.dims = dims;
  model.log_weights =
      Eigen::VectorXd::Constant(dims.K, -std::log(static_cast<double>(dims.K)));
  model.components.resize(static_cast<std::size_t>(dims.K));
  for (int k = 0; k < dims.K; ++k) {
    auto& comp = model.components[static_cast<std::size_t>(k)];
    comp.c_t = opts.separation * randn_matrix(dims.L_t, 1);
    comp.c_w = Eigen::VectorXd::Zero(dims.L_w);  // latent block is centered

    // Near-identity SPD covariances: I + small random symmetric bump.
    auto spd = [&](int d) {
      Eigen::MatrixXd noise = 0.15 * randn_matrix(d, d);
      return (Eigen::MatrixXd::Identity(d, d) + noise * noise.transpose()).eval();
    };
    comp.Gamma_t = spd(dims.L_t);
    comp.Gamma_w = Eigen::MatrixXd::Identity(dims.L_w, dims.L_w);

    const double t_scale =
        opts.map_scale / std::sqrt(std::max(1, dims.L_t));
    const double w_scale =
        opts.latent_scale / std::sqrt(std::max(1, dims.L_w));
    comp.A_t = t_scale * randn_matrix(dims.D, dims.L_t);
    comp.A_w = w_scale * randn_matrix(dims.D, dims.L_w);
    comp.b = randn_matrix(dims.D, 1);
    comp.sigma2 = opts.noise_std * opts.noise_std;
  }
  return model;
}

SampledData sample_dataset(const InverseModel& model, std::int64_t n,
                           std::mt19937_64& rng) {
  model.validate();
  const auto& dims = model.dims;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> weights(static_cast<std::size_t>(dims.K));
  for (int k = 0; k < dims.K; ++k) {
    weights[static_cast<std::size_t>(k)] = std::exp(model.log_weights[k]);
  }
  std::discrete_distribution<int> component_pick(weights.begin(), weights.end());

  std::vector<Eigen::MatrixXd> gamma_t_lower, gamma_w_lower;
  for (int k = 0; k < dims.K; ++k) {
    const auto& comp = model.components[static_cast<std::size_t>(k)];
    gamma_t_lower.push_back(dims.L_t > 0 ? cholesky_lower(comp.Gamma_t, k)
                                         : Eigen::MatrixXd());
    gamma_w_lower.push_back(dims.L_w > 0 ? cholesky_lower(comp.Gamma_w, k)
                                         : Eigen::MatrixXd());
  }

  SampledData data;
  data.Y.resize(n, dims.D);
  data.T.resize(n, dims.L_t);
  data.W.resize(n, dims.L_w);
  data.labels.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd unit_t(dims.L_t), unit_w(dims.L_w), unit_y(dims.D);
  for (std::int64_t i = 0; i < n; ++i) {
    const int k = component_pick(rng);
    const auto& comp = model.components[static_cast<std::size_t>(k)];
    data.labels[static_cast<std::size_t>(i)] = k;
    for (int j = 0; j < dims.L_t; ++j) unit_t[j] = normal(rng);
    for (int j = 0; j < dims.L_w; ++j) unit_w[j] = normal(rng);
    for (int j = 0; j < dims.D; ++j) unit_y[j] = normal(rng);
    Eigen::VectorXd t(dims.L_t), w(dims.L_w);
    if (dims.L_t > 0) {
      t = comp.c_t + gamma_t_lower[static_cast<std::size_t>(k)] * unit_t;
    }
    if (dims.L_w > 0) {
      w = comp.c_w + gamma_w_lower[static_cast<std::size_t>(k)] * unit_w;
    }
    Eigen::VectorXd y = comp.b + std::sqrt(comp.sigma2) * unit_y;
    if (dims.L_t > 0) y += comp.A_t * t;
    if (dims.L_w > 0) y += comp.A_w * w;
    data.Y.row(i) = y.transpose();
    if (dims.L_t > 0) data.T.row(i) = t.transpose();
    if (dims.L_w > 0) data.W.row(i) = w.transpose();
  }
  return data;
}

namespace {

std::vector<std::int64_t> nearest_neighbor_pool(const Eigen::MatrixXd& t_std,
                                                std::int64_t seed_row,
                                                int n_neighbors) {
  const auto n = t_std.rows();
  const Eigen::VectorXd d2 =
      (t_std.rowwise() - t_std.row(seed_row)).rowwise().squaredNorm();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto keep = static_cast<std::size_t>(n_neighbors) + 1;  // seed + NNs
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                    order.end(), [&](std::int64_t a, std::int64_t b) {
                      if (d2[a] != d2[b]) return d2[a] < d2[b];
                      return a < b;
                    });
  order.resize(keep);
  return order;
}

}  // namespace

GeneratedImage generate_image(const SpectralDataset& ds, const ImageLayout& layout,
                              std::mt19937_64& rng) {
  ds.validate();
  if (layout.height < 1 || layout.width < 1 || layout.region_rows < 1 ||
      layout.region_cols < 1) {
    throw ConfigError("generate_image: layout sizes must be positive");
  }
  if (layout.region_rows > layout.height || layout.region_cols > layout.width) {
    throw RegionTooSmall("generate_image: more regions than pixels along an axis");
  }
  if (ds.n() < layout.n_neighbors + 1) {
    throw InsufficientNeighbors("generate_image: dataset has " +
                                std::to_string(ds.n()) + " rows, need " +
                                std::to_string(layout.n_neighbors + 1));
  }
  if (ds.l_t() < 1) {
    throw ConfigError("generate_image: dataset has no parameter columns");
  }

  // Nearest neighbors in standardized parameter space.
  Eigen::MatrixXd t_std = ds.T;
  for (Eigen::Index c = 0; c < t_std.cols(); ++c) {
    const double mean = t_std.col(c).mean();
    const double sd = std::sqrt((t_std.col(c).array() - mean).square().sum() /
                                std::max<double>(1.0, t_std.rows() - 1.0));
    t_std.col(c).array() -= mean;
    if (sd > 0.0) t_std.col(c) /= sd;
  }

  GeneratedImage out;
  auto& img = out.image;
  img.height = layout.height;
  img.width = layout.width;
  img.cube.resize(img.n_pixels(), ds.d());
  img.truth.resize(img.n_pixels(), ds.l_t());

  std::uniform_int_distribution<std::int64_t> pick_row(0, ds.n() - 1);
  for (int rr = 0; rr < layout.region_rows; ++rr) {
    // Balanced tiling: region r spans [floor(r*H/R), floor((r+1)*H/R)).
    const int r0 = static_cast<int>(
        static_cast<std::int64_t>(rr) * layout.height / layout.region_rows);
    const int r1 = static_cast<int>(static_cast<std::int64_t>(rr + 1) *
                                    layout.height / layout.region_rows);
    for (int cc = 0; cc < layout.region_cols; ++cc) {
      const int c0 = static_cast<int>(
          static_cast<std::int64_t>(cc) * layout.width / layout.region_cols);
      const int c1 = static_cast<int>(static_cast<std::int64_t>(cc + 1) *
                                      layout.width / layout.region_cols);
      if (r1 == r0 || c1 == c0) {
        throw RegionTooSmall("generate_image: empty region in the tiling");
      }
      const std::int64_t seed_row = pick_row(rng);
      const auto pool =
          nearest_neighbor_pool(t_std, seed_row, layout.n_neighbors);
      std::uniform_int_distribution<std::size_t> pick_pool(0, pool.size() - 1);
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
          const auto row = pool[pick_pool(rng)];
          const auto pixel = static_cast<std::int64_t>(r) * layout.width + c;
          img.cube.row(pixel) = ds.Y.row(row);
          img.truth.row(pixel) = ds.T.row(row);
        }
      }
    }
  }

  out.clean_cube = img.cube;
  if (std::isfinite(layout.snr_db)) {
    const double signal_power = img.cube.array().square().mean();
    const double noise_power =
        signal_power / std::pow(10.0, layout.snr_db / 10.0);
    const double noise_std = std::sqrt(noise_power);
    std::normal_distribution<double> normal(0.0, noise_std);
    for (Eigen::Index i = 0; i < img.cube.rows(); ++i) {
      for (Eigen::Index j = 0; j < img.cube.cols(); ++j) {
        img.cube(i, j) += normal(rng);
      }
    }
  }
  return out;
}

std::vector<CrossvalSplit> crossval_protocol(std::int64_t n, std::int64_t train_size,
                                             int n_splits, std::mt19937_64& rng) {
  if (train_size < 1 || train_size >= n) {
    throw ConfigError("crossval_protocol: train_size must be in [1, n)");
  }
  if (n_splits < 1) throw ConfigError("crossval_protocol: need n_splits >= 1");
  std::vector<CrossvalSplit> splits;
  splits.reserve(static_cast<std::size_t>(n_splits));
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (int s = 0; s < n_splits; ++s) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    CrossvalSplit split;
    split.train_idx.assign(order.begin(), order.begin() + train_size);
    split.test_idx.assign(order.begin() + train_size, order.end());
    std::sort(split.train_idx.begin(), split.train_idx.end());
    std::sort(split.test_idx.begin(), split.test_idx.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

}  // namespace gllim
