#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gllim/types.hpp"

namespace gllim {

/// Paired training data: N spectra (rows of Y) with their observed physical
/// parameters (rows of T). T may have zero columns.
struct SpectralDataset {
  Eigen::MatrixXd Y;                // N x D
  Eigen::MatrixXd T;                // N x L_t
  std::vector<std::string> names;   // optional labels for T columns

  std::int64_t n() const { return Y.rows(); }
  int d() const { return static_cast<int>(Y.cols()); }
  int l_t() const { return static_cast<int>(T.cols()); }

  /// Row counts consistent, every value finite.
  void validate() const;
};

/// A height x width image of D-dimensional spectra in raster order, with
/// optional per-pixel ground-truth parameter maps. Pixel (r, c) is row
/// r * width + c of the cube, matching NeighborGraph::lattice indexing.
struct SpectralImage {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd cube;   // (height*width) x D
  Eigen::MatrixXd truth;  // (height*width) x L_t, or 0x0

  std::int64_t n_pixels() const { return static_cast<std::int64_t>(height) * width; }
  bool has_truth() const { return truth.size() > 0; }
  void validate() const;
};

/// Column-wise standardization of Y and T fitted on training data; the
/// inverse transform maps predictions back to original units. Sample
/// (N-1) standard deviations.
struct Normalizer {
  Eigen::VectorXd y_mean, y_std;
  Eigen::VectorXd t_mean, t_std;

  Eigen::MatrixXd apply_y(const Eigen::MatrixXd& Y) const;
  Eigen::MatrixXd apply_t(const Eigen::MatrixXd& T) const;
  Eigen::MatrixXd invert_y(const Eigen::MatrixXd& Yn) const;
  Eigen::MatrixXd invert_t(const Eigen::MatrixXd& Tn) const;
  SpectralDataset apply(const SpectralDataset& ds) const;
};

/// Throws ConstantColumn when any retained column has zero variance;
/// requires N >= 2.
Normalizer fit_normalizer(const SpectralDataset& ds);

enum class DatasetFormat { csv, packed_binary };

/// CSV with header y_1..y_D,t_1..t_Lt, or the packed binary container
/// (see docs/formats.md). Validates on load; ParseError carries the
/// offending row/column.
SpectralDataset load_dataset(const std::string& path, DatasetFormat format);
void save_dataset(const std::string& path, const SpectralDataset& ds,
                  DatasetFormat format);

/// Picks the format from the file content (binary magic) or extension.
SpectralDataset load_dataset_auto(const std::string& path);

/// Binary image container (see docs/formats.md).
SpectralImage load_image(const std::string& path);
void save_image(const std::string& path, const SpectralImage& image);

}  // namespace gllim
