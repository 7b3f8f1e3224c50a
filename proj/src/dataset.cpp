#include "gllim/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gllim/io_util.hpp"

namespace gllim {

namespace {

constexpr char kDatasetMagic[8] = {'G', 'L', 'L', 'I', 'M', 'B', 'I', 'N'};
constexpr char kImageMagic[8] = {'G', 'L', 'L', 'I', 'M', 'I', 'M', 'G'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("truncated file while reading " + what);
  return v;
}

void append_matrix(std::string& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put(out, m(r, c));
  }
}

void read_matrix(std::istream& in, Eigen::MatrixXd& m, const std::string& what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = take<double>(in, what);
    }
  }
}

void check_finite(const Eigen::MatrixXd& m, const std::string& what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        throw ParseError(what + " contains a non-finite value", r + 1, c + 1);
      }
    }
  }
}

}  // namespace

void SpectralDataset::validate() const {
  if (Y.rows() != T.rows() && T.size() > 0) {
    throw DimensionMismatch("dataset: Y and T row counts disagree");
  }
  if (Y.rows() < 1) throw ConfigError("dataset: empty");
  check_finite(Y, "Y");
  check_finite(T, "T");
  if (!names.empty() && static_cast<int>(names.size()) != l_t()) {
    throw ConfigError("dataset: names size != T columns");
  }
}

void SpectralImage::validate() const {
  if (height < 1 || width < 1) throw ConfigError("image: empty");
  if (cube.rows() != n_pixels()) {
    throw DimensionMismatch("image: cube rows != height*width");
  }
  if (has_truth() && truth.rows() != n_pixels()) {
    throw DimensionMismatch("image: truth rows != height*width");
  }
  check_finite(cube, "cube");
  if (has_truth()) check_finite(truth, "truth");
}

// ---------------------------------------------------------------------------
// Normalizer
// ---------------------------------------------------------------------------

namespace {

void fit_columns(const Eigen::MatrixXd& m, Eigen::VectorXd& mean,
                 Eigen::VectorXd& std_dev, const std::string& what) {
  const double n = static_cast<double>(m.rows());
  mean = m.colwise().mean();
  std_dev.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double ss = (m.col(c).array() - mean[c]).square().sum();
    std_dev[c] = std::sqrt(ss / (n - 1.0));
    if (!(std_dev[c] > 0.0)) {
      throw ConstantColumn(what + " column " + std::to_string(c + 1) +
                           " is constant; cannot standardize");
    }
  }
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& std_dev) {
  if (m.cols() != mean.size()) {
    throw DimensionMismatch("normalizer: column count mismatch");
  }
  return (m.rowwise() - mean.transpose()).array().rowwise() /
         std_dev.transpose().array();
}

Eigen::MatrixXd unstandardize(const Eigen::MatrixXd& m, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& std_dev) {
  if (m.cols() != mean.size()) {
    throw DimensionMismatch("normalizer: column count mismatch");
  }
  return (m.array().rowwise() * std_dev.transpose().array()).rowwise() +
         mean.transpose().array();
}

}  // namespace

Normalizer fit_normalizer(const SpectralDataset& ds) {
  if (ds.n() < 2) throw ConfigError("fit_normalizer: need at least 2 rows");
  Normalizer nz;
  fit_columns(ds.Y, nz.y_mean, nz.y_std, "Y");
  if (ds.l_t() > 0) {
    fit_columns(ds.T, nz.t_mean, nz.t_std, "T");
  } else {
    nz.t_mean.resize(0);
    nz.t_std.resize(0);
  }
  return nz;
}

Eigen::MatrixXd Normalizer::apply_y(const Eigen::MatrixXd& Y) const {
  return standardize(Y, y_mean, y_std);
}
Eigen::MatrixXd Normalizer::apply_t(const Eigen::MatrixXd& T) const {
  if (t_mean.size() == 0) return T;
  return standardize(T, t_mean, t_std);
}
Eigen::MatrixXd Normalizer::invert_y(const Eigen::MatrixXd& Yn) const {
  return unstandardize(Yn, y_mean, y_std);
}
Eigen::MatrixXd Normalizer::invert_t(const Eigen::MatrixXd& Tn) const {
  if (t_mean.size() == 0) return Tn;
  return unstandardize(Tn, t_mean, t_std);
}
SpectralDataset Normalizer::apply(const SpectralDataset& ds) const {
  return SpectralDataset{apply_y(ds.Y), apply_t(ds.T), ds.names};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

SpectralDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 1, 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_csv_line(line);
  int d = 0, l_t = 0;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h.rfind("y_", 0) == 0 && l_t == 0) {
      ++d;
    } else if (h.rfind("t_", 0) == 0) {
      ++l_t;
    } else {
      throw ParseError("unexpected header field '" + h + "'", 1,
                       static_cast<std::int64_t>(i + 1));
    }
  }
  if (d == 0) throw ParseError("header declares no y_ columns", 1, 1);

  std::vector<double> values;
  std::int64_t rows = 0;
  std::int64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != d + l_t) {
      throw ParseError("expected " + std::to_string(d + l_t) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no, 1);
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const double v =
          parse_double(fields[c], line_no, static_cast<std::int64_t>(c + 1));
      if (!std::isfinite(v)) {
        throw ParseError("non-finite value", line_no,
                         static_cast<std::int64_t>(c + 1));
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw ParseError("no data rows", line_no, 1);

  SpectralDataset ds;
  ds.Y.resize(rows, d);
  ds.T.resize(rows, l_t);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int c = 0; c < d; ++c) ds.Y(r, c) = values[static_cast<std::size_t>(r * (d + l_t) + c)];
    for (int c = 0; c < l_t; ++c) {
      ds.T(r, c) = values[static_cast<std::size_t>(r * (d + l_t) + d + c)];
    }
  }
  ds.validate();
  return ds;
}

void save_dataset_csv(const std::string& path, const SpectralDataset& ds) {
  std::string out;
  for (int c = 0; c < ds.d(); ++c) {
    if (c) out += ',';
    out += "y_" + std::to_string(c + 1);
  }
  for (int c = 0; c < ds.l_t(); ++c) {
    out += ",t_" + std::to_string(c + 1);
  }
  out += '\n';
  for (std::int64_t r = 0; r < ds.n(); ++r) {
    for (int c = 0; c < ds.d(); ++c) {
      if (c) out += ',';
      out += format_g17(ds.Y(r, c));
    }
    for (int c = 0; c < ds.l_t(); ++c) {
      out += ',';
      out += format_g17(ds.T(r, c));
    }
    out += '\n';
  }
  atomic_write_file(path, out);
}

SpectralDataset load_dataset_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kDatasetMagic, 8) != 0) {
    throw ParseError("bad magic; not a packed dataset: " + path);
  }
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kFormatVersion) {
    throw ParseError("unsupported dataset format version " + std::to_string(version));
  }
  const auto n = take<std::uint64_t>(in, "N");
  const auto d = take<std::uint32_t>(in, "D");
  const auto l_t = take<std::uint32_t>(in, "L_t");
  SpectralDataset ds;
  ds.Y.resize(static_cast<Eigen::Index>(n), d);
  ds.T.resize(static_cast<Eigen::Index>(n), l_t);
  for (std::uint64_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < d; ++c) {
      ds.Y(static_cast<Eigen::Index>(r), c) = take<double>(in, "Y");
    }
    for (std::uint32_t c = 0; c < l_t; ++c) {
      ds.T(static_cast<Eigen::Index>(r), c) = take<double>(in, "T");
    }
  }
  ds.validate();
  return ds;
}

void save_dataset_binary(const std::string& path, const SpectralDataset& ds) {
  std::string out;
  out.append(kDatasetMagic, 8);
  put(out, kFormatVersion);
  put(out, static_cast<std::uint64_t>(ds.n()));
  put(out, static_cast<std::uint32_t>(ds.d()));
  put(out, static_cast<std::uint32_t>(ds.l_t()));
  for (std::int64_t r = 0; r < ds.n(); ++r) {
    for (int c = 0; c < ds.d(); ++c) put(out, ds.Y(r, c));
    for (int c = 0; c < ds.l_t(); ++c) put(out, ds.T(r, c));
  }
  atomic_write_file(path, out);
}

}  // namespace

SpectralDataset load_dataset(const std::string& path, DatasetFormat format) {
  return format == DatasetFormat::csv ? load_dataset_csv(path)
                                      : load_dataset_binary(path);
}

void save_dataset(const std::string& path, const SpectralDataset& ds,
                  DatasetFormat format) {
  ds.validate();
  if (format == DatasetFormat::csv) {
    save_dataset_csv(path, ds);
  } else {
    save_dataset_binary(path, ds);
  }
}

SpectralDataset load_dataset_auto(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open dataset: " + path);
  char magic[8] = {};
  probe.read(magic, 8);
  probe.close();
  if (std::memcmp(magic, kDatasetMagic, 8) == 0) {
    return load_dataset_binary(path);
  }
  return load_dataset_csv(path);
}

// ---------------------------------------------------------------------------
// Image container
// ---------------------------------------------------------------------------

SpectralImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kImageMagic, 8) != 0) {
    throw ParseError("bad magic; not an image container: " + path);
  }
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kFormatVersion) {
    throw ParseError("unsupported image format version " + std::to_string(version));
  }
  SpectralImage img;
  img.height = static_cast<int>(take<std::uint32_t>(in, "height"));
  img.width = static_cast<int>(take<std::uint32_t>(in, "width"));
  const auto d = take<std::uint32_t>(in, "D");
  const auto has_truth = take<std::uint8_t>(in, "has_truth");
  const auto l_t = take<std::uint32_t>(in, "L_t");
  img.cube.resize(img.n_pixels(), d);
  read_matrix(in, img.cube, "cube");
  if (has_truth) {
    img.truth.resize(img.n_pixels(), l_t);
    read_matrix(in, img.truth, "truth");
  }
  img.validate();
  return img;
}

void save_image(const std::string& path, const SpectralImage& image) {
  image.validate();
  std::string out;
  out.append(kImageMagic, 8);
  put(out, kFormatVersion);
  put(out, static_cast<std::uint32_t>(image.height));
  put(out, static_cast<std::uint32_t>(image.width));
  put(out, static_cast<std::uint32_t>(image.cube.cols()));
  put(out, static_cast<std::uint8_t>(image.has_truth() ? 1 : 0));
  put(out, static_cast<std::uint32_t>(image.truth.cols()));
  append_matrix(out, image.cube);
  if (image.has_truth()) append_matrix(out, image.truth);
  atomic_write_file(path, out);
}

}  // namespace gllim
