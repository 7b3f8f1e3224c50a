#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "gllim/dataset.hpp"
#include "gllim/model.hpp"

namespace gllim {

struct GeneratorOptions {
  /// Distance between component response centers, in prior standard
  /// deviations (Gamma is near identity).
  double separation = 3.0;
  double noise_std = 0.1;
  /// Scale of the affine map entries, observed and latent blocks.
  double map_scale = 1.0;
  double latent_scale = 1.0;
};

/// Random ground-truth model used as the data generator for synthetic
/// experiments (the stand-in for a physical simulator).
InverseModel generate_synthetic_model(std::mt19937_64& rng, const Dims& dims,
                                      const GeneratorOptions& opts = {});

inline InverseModel generate_synthetic_model(std::mt19937_64& rng,
                                             const Dims& dims,
                                             double separation) {
  GeneratorOptions opts;
  opts.separation = separation;
  return generate_synthetic_model(rng, dims, opts);
}

struct SampledData {
  Eigen::MatrixXd Y;        // n x D
  Eigen::MatrixXd T;        // n x L_t (observed block only)
  Eigen::MatrixXd W;        // n x L_w (kept for diagnostics)
  std::vector<int> labels;  // generating component per row

  SpectralDataset dataset() const { return SpectralDataset{Y, T, {}}; }
};

SampledData sample_dataset(const InverseModel& model, std::int64_t n,
                           std::mt19937_64& rng);

struct ImageLayout {
  int height = 400;
  int width = 300;
  int region_rows = 4;
  int region_cols = 3;
  /// Cube-wide target signal-to-noise ratio in dB; +inf disables the noise.
  double snr_db = 6.0;
  int n_neighbors = 15;
};

struct GeneratedImage {
  SpectralImage image;
  Eigen::MatrixXd clean_cube;  // pre-noise spectra, for SNR bookkeeping
};

/// Builds a region-structured image from a dataset: each region picks one
/// parameter vector uniformly, pixels draw uniformly from that vector and its
/// n nearest neighbors (Euclidean in standardized parameter space) and emit
/// the associated spectra; white Gaussian noise is added to meet the target
/// cube-wide SNR. Regions tile the image with balanced integer splits.
GeneratedImage generate_image(const SpectralDataset& ds, const ImageLayout& layout,
                              std::mt19937_64& rng);

struct CrossvalSplit {
  std::vector<std::int64_t> train_idx;
  std::vector<std::int64_t> test_idx;
};

/// n_splits seeded random train/test partitions of [0, n); train and test are
/// disjoint, test takes everything the train draw left out.
std::vector<CrossvalSplit> crossval_protocol(std::int64_t n, std::int64_t train_size,
                                             int n_splits, std::mt19937_64& rng);

}  // namespace gllim
