#include "gllim/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gllim/io_util.hpp"
#include "gllim/parallel.hpp"

namespace gllim {

Eigen::VectorXd Component::c() const {
  Eigen::VectorXd full(c_t.size() + c_w.size());
  full << c_t, c_w;
  return full;
}

Eigen::MatrixXd Component::Gamma() const {
  const auto lt = c_t.size();
  const auto lw = c_w.size();
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(lt + lw, lt + lw);
  full.topLeftCorner(lt, lt) = Gamma_t;
  full.bottomRightCorner(lw, lw) = Gamma_w;
  return full;
}

Eigen::MatrixXd Component::A() const {
  Eigen::MatrixXd full(A_t.rows(), A_t.cols() + A_w.cols());
  full << A_t, A_w;
  return full;
}

Eigen::MatrixXd Component::marginal_y_cov() const {
  const auto d = b.size();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  if (A_w.cols() > 0) cov = A_w * Gamma_w * A_w.transpose();
  cov.diagonal().array() += sigma2;
  return cov;
}

void InverseModel::validate() const {
  dims.validate();
  if (K() != dims.K) throw DimensionMismatch("model: component count != K");
  if (log_weights.size() != dims.K) {
    throw DimensionMismatch("model: log_weights size != K");
  }
  const double mass = log_weights.array().exp().sum();
  if (std::abs(mass - 1.0) > 1e-10) {
    throw ConfigError("model: exp(log_weights) sums to " + std::to_string(mass));
  }
  for (int k = 0; k < K(); ++k) {
    const auto& comp = components[static_cast<std::size_t>(k)];
    if (comp.c_t.size() != dims.L_t || comp.c_w.size() != dims.L_w ||
        comp.Gamma_t.rows() != dims.L_t || comp.Gamma_t.cols() != dims.L_t ||
        comp.Gamma_w.rows() != dims.L_w || comp.Gamma_w.cols() != dims.L_w ||
        comp.A_t.rows() != dims.D || comp.A_t.cols() != dims.L_t ||
        comp.A_w.rows() != dims.D || comp.A_w.cols() != dims.L_w ||
        comp.b.size() != dims.D) {
      throw DimensionMismatch("model: component " + std::to_string(k) +
                              " does not conform to dims");
    }
    if (!(comp.sigma2 > 0.0)) {
      throw DegenerateCovariance("model: sigma2 <= 0 in component " +
                                     std::to_string(k),
                                 k);
    }
    if (dims.L_t > 0) cholesky_lower(comp.Gamma_t, k);
    if (dims.L_w > 0) cholesky_lower(comp.Gamma_w, k);
  }
}

double log_lik_y_t_given_z(const InverseModel& model, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& t, int k) {
  if (k < 0 || k >= model.K()) throw ConfigError("component index out of range");
  const auto& comp = model.components[static_cast<std::size_t>(k)];
  Eigen::VectorXd y_mean = comp.b;
  if (comp.A_t.cols() > 0) y_mean += comp.A_t * t;
  if (comp.A_w.cols() > 0) y_mean += comp.A_w * comp.c_w;
  double value;
  if (comp.A_w.cols() > 0) {
    value = log_gaussian(y, y_mean, comp.marginal_y_cov());
  } else {
    value = log_gaussian_iso(y, y_mean, comp.sigma2);
  }
  if (comp.c_t.size() > 0) value += log_gaussian(t, comp.c_t, comp.Gamma_t);
  return value;
}

LikelihoodCache::LikelihoodCache(const InverseModel& model) : model_(&model) {
  const int K = model.K();
  y_given_t_.reserve(static_cast<std::size_t>(K));
  t_marginal_.reserve(static_cast<std::size_t>(K));
  y_offset_.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& comp = model.components[static_cast<std::size_t>(k)];
    y_given_t_.emplace_back(Eigen::VectorXd::Zero(comp.b.size()),
                            comp.marginal_y_cov(), k);
    if (comp.c_t.size() > 0) {
      t_marginal_.emplace_back(comp.c_t, comp.Gamma_t, k);
    } else {
      t_marginal_.emplace_back();
    }
    Eigen::VectorXd offset = comp.b;
    if (comp.A_w.cols() > 0) offset += comp.A_w * comp.c_w;
    y_offset_.push_back(std::move(offset));
  }
}

double LikelihoodCache::log_lik(const Eigen::VectorXd& y,
                                const Eigen::VectorXd& t, int k) const {
  const auto& comp = model_->components[static_cast<std::size_t>(k)];
  Eigen::VectorXd residual = y - y_offset_[static_cast<std::size_t>(k)];
  if (comp.A_t.cols() > 0) residual -= comp.A_t * t;
  double value = y_given_t_[static_cast<std::size_t>(k)].log_density_residual(residual);
  if (comp.c_t.size() > 0) {
    value += t_marginal_[static_cast<std::size_t>(k)](t);
  }
  return value;
}

Eigen::MatrixXd LikelihoodCache::log_lik_matrix(const Eigen::MatrixXd& Y,
                                                const Eigen::MatrixXd& T,
                                                int threads) const {
  const auto n = Y.rows();
  const int K = model_->K();
  Eigen::MatrixXd out(n, K);
  parallel_chunks(n, threads, [&](std::int64_t begin, std::int64_t end, int) {
    for (std::int64_t i = begin; i < end; ++i) {
      const Eigen::VectorXd y = Y.row(i);
      const Eigen::VectorXd t = T.row(i);
      for (int k = 0; k < K; ++k) out(i, k) = log_lik(y, t, k);
    }
  });
  return out;
}

double observed_log_lik(const InverseModel& model, const Eigen::MatrixXd& Y,
                        const Eigen::MatrixXd& T, int threads) {
  const LikelihoodCache cache(model);
  const Eigen::MatrixXd loglik = cache.log_lik_matrix(Y, T, threads);
  double total = 0.0;
  for (Eigen::Index i = 0; i < loglik.rows(); ++i) {
    total += log_sum_exp(model.log_weights + loglik.row(i).transpose());
  }
  return total;
}

// ---------------------------------------------------------------------------
// Archive
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kModelMagic = "GLLIMTXT";  // 8 bytes
constexpr int kModelVersion = 1;

void append_values(std::string& out, const char* label,
                   const Eigen::Ref<const Eigen::VectorXd>& v) {
  out += label;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out += ' ';
    out += format_g17(v[i]);
  }
  out += '\n';
}

void append_matrix(std::string& out, const char* label, const Eigen::MatrixXd& m) {
  out += label;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out += ' ';
      out += format_g17(m(r, c));
    }
  }
  out += '\n';
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word(const char* what) {
    std::string tok;
    if (!(in_ >> tok)) throw ParseError(std::string("archive truncated at ") + what);
    return tok;
  }

  void expect(const char* label) {
    const auto tok = word(label);
    if (tok != label) {
      throw ParseError("archive: expected '" + std::string(label) + "', got '" +
                       tok + "'");
    }
  }

  double number(const char* what) {
    return parse_double(word(what), 0, 0);
  }

  std::int64_t integer(const char* what) {
    const auto tok = word(what);
    try {
      return std::stoll(tok);
    } catch (const std::exception&) {
      throw ParseError("archive: bad integer '" + tok + "' for " + what);
    }
  }

  Eigen::VectorXd vector(const char* label, Eigen::Index size) {
    expect(label);
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = number(label);
    return v;
  }

  Eigen::MatrixXd matrix(const char* label, Eigen::Index rows, Eigen::Index cols) {
    expect(label);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(label);
    }
    return m;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_model(const std::string& path, const ModelArchive& archive) {
  const auto& model = archive.model;
  model.validate();
  std::string out;
  out += kModelMagic;
  out += ' ';
  out += std::to_string(kModelVersion);
  out += '\n';
  out += "dims " + std::to_string(model.dims.D) + ' ' +
         std::to_string(model.dims.L_t) + ' ' + std::to_string(model.dims.L_w) +
         ' ' + std::to_string(model.dims.K) + ' ' + std::to_string(model.dims.N) +
         '\n';
  append_values(out, "log_weights", model.log_weights);
  append_values(out, "alpha", archive.field.alpha.size() > 0
                                  ? archive.field.alpha
                                  : Eigen::VectorXd::Zero(model.dims.K));
  out += "beta " + format_g17(archive.field.beta) + '\n';
  for (int k = 0; k < model.K(); ++k) {
    const auto& comp = model.components[static_cast<std::size_t>(k)];
    out += "component " + std::to_string(k) + '\n';
    append_values(out, "c_t", comp.c_t);
    append_values(out, "c_w", comp.c_w);
    append_matrix(out, "Gamma_t", comp.Gamma_t);
    append_matrix(out, "Gamma_w", comp.Gamma_w);
    append_matrix(out, "A_t", comp.A_t);
    append_matrix(out, "A_w", comp.A_w);
    append_values(out, "b", comp.b);
    out += "sigma2 " + format_g17(comp.sigma2) + '\n';
  }
  out += "normalizer ";
  out += archive.normalizer ? '1' : '0';
  out += '\n';
  if (archive.normalizer) {
    append_values(out, "y_mean", archive.normalizer->y_mean);
    append_values(out, "y_std", archive.normalizer->y_std);
    append_values(out, "t_mean", archive.normalizer->t_mean);
    append_values(out, "t_std", archive.normalizer->t_std);
  }
  out += "end\n";
  atomic_write_file(path, out);
}

ModelArchive load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model: " + path);
  TokenReader rd(in);
  if (rd.word("magic") != kModelMagic) {
    throw ParseError("not a model archive: " + path);
  }
  const auto version = rd.integer("version");
  if (version != kModelVersion) {
    throw ParseError("unsupported model version " + std::to_string(version));
  }
  ModelArchive archive;
  auto& model = archive.model;
  rd.expect("dims");
  model.dims.D = static_cast<int>(rd.integer("D"));
  model.dims.L_t = static_cast<int>(rd.integer("L_t"));
  model.dims.L_w = static_cast<int>(rd.integer("L_w"));
  model.dims.K = static_cast<int>(rd.integer("K"));
  model.dims.N = rd.integer("N");
  model.log_weights = rd.vector("log_weights", model.dims.K);
  archive.field.alpha = rd.vector("alpha", model.dims.K);
  rd.expect("beta");
  archive.field.beta = rd.number("beta");
  model.components.resize(static_cast<std::size_t>(model.dims.K));
  for (int k = 0; k < model.dims.K; ++k) {
    rd.expect("component");
    const auto idx = rd.integer("component index");
    if (idx != k) throw ParseError("archive: components out of order");
    auto& comp = model.components[static_cast<std::size_t>(k)];
    comp.c_t = rd.vector("c_t", model.dims.L_t);
    comp.c_w = rd.vector("c_w", model.dims.L_w);
    comp.Gamma_t = rd.matrix("Gamma_t", model.dims.L_t, model.dims.L_t);
    comp.Gamma_w = rd.matrix("Gamma_w", model.dims.L_w, model.dims.L_w);
    comp.A_t = rd.matrix("A_t", model.dims.D, model.dims.L_t);
    comp.A_w = rd.matrix("A_w", model.dims.D, model.dims.L_w);
    comp.b = rd.vector("b", model.dims.D);
    rd.expect("sigma2");
    comp.sigma2 = rd.number("sigma2");
  }
  rd.expect("normalizer");
  if (rd.integer("normalizer flag") != 0) {
    Normalizer nz;
    nz.y_mean = rd.vector("y_mean", model.dims.D);
    nz.y_std = rd.vector("y_std", model.dims.D);
    nz.t_mean = rd.vector("t_mean", model.dims.L_t);
    nz.t_std = rd.vector("t_std", model.dims.L_t);
    archive.normalizer = std::move(nz);
  }
  rd.expect("end");
  model.validate();
  return archive;
}

}  // namespace gllim
