// gllim command line tool: train / predict / select / synth / bench.
//
// Exit codes: 0 ok, 2 usage or configuration, 3 numeric failure, 4 I/O.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gllim/dataset.hpp"
#include "gllim/forward.hpp"
#include "gllim/io_util.hpp"
#include "gllim/metrics.hpp"
#include "gllim/model.hpp"
#include "gllim/potts.hpp"
#include "gllim/selection.hpp"
#include "gllim/synth.hpp"
#include "gllim/types.hpp"
#include "gllim/vem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct GlobalOptions {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir = ".";
  std::string log_level = "warn";
};

/// Run provenance written next to every output set.
class Manifest {
 public:
  Manifest(const std::string& command, const GlobalOptions& global, int argc,
           char** argv)
      : start_(std::chrono::steady_clock::now()) {
    j_["command"] = command;
    j_["library_version"] = kVersion;
    j_["seed"] = global.seed;
    j_["threads"] = global.threads;
    std::vector<std::string> args(argv, argv + argc);
    j_["argv"] = args;
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }

  void input(const std::string& path) {
    j_["inputs"][path] = gllim::file_fingerprint(path);
  }
  void output(const std::string& path) { j_["outputs"].push_back(path); }
  void note(const std::string& key, const json& value) { j_[key] = value; }

  void write(const fs::path& out_dir) {
    j_["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    gllim::atomic_write_file((out_dir / "manifest.json").string(), j_.dump(2));
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

fs::path ensure_out_dir(const GlobalOptions& global) {
  fs::path dir(global.out_dir);
  fs::create_directories(dir);
  return dir;
}

gllim::TrainConfig make_train_config(int K, int L_w, const std::string& beta,
                                     int max_iter, double tol, int restarts,
                                     const std::string& covariance,
                                     const GlobalOptions& global) {
  gllim::TrainConfig cfg;
  cfg.K = K;
  cfg.L_w = L_w;
  cfg.max_iter = max_iter;
  cfg.rel_tol = tol;
  cfg.n_restarts = restarts;
  cfg.rng_seed = global.seed;
  cfg.threads = global.threads;
  if (beta == "estimated" || beta == "estimate") {
    cfg.beta_mode = gllim::BetaMode::estimated;
  } else {
    cfg.beta_mode = gllim::BetaMode::fixed;
    try {
      cfg.beta_value = std::stod(beta);
    } catch (const std::exception&) {
      throw gllim::ConfigError("--beta expects a number or 'estimated', got '" +
                               beta + "'");
    }
    if (cfg.beta_value < 0.0) throw gllim::ConfigError("--beta must be >= 0");
  }
  if (covariance == "isotropic") {
    cfg.covariance_mode = gllim::CovarianceMode::isotropic;
  } else if (covariance == "equal") {
    cfg.covariance_mode = gllim::CovarianceMode::isotropic_equal;
  } else {
    throw gllim::ConfigError("--covariance must be 'isotropic' or 'equal'");
  }
  return cfg;
}

std::optional<gllim::NeighborGraph> load_graph_options(
    const std::string& graph_path, const std::string& lattice, int connectivity,
    std::int64_t expected_sites) {
  if (!graph_path.empty() && !lattice.empty()) {
    throw gllim::ConfigError("--graph and --lattice are mutually exclusive");
  }
  if (!graph_path.empty()) {
    auto g = gllim::NeighborGraph::from_edge_list(graph_path);
    g.validate();
    if (expected_sites > 0 && g.n_sites() != expected_sites) {
      throw gllim::ConfigError("graph has " + std::to_string(g.n_sites()) +
                               " sites, data has " +
                               std::to_string(expected_sites));
    }
    return g;
  }
  if (!lattice.empty()) {
    const auto x = lattice.find('x');
    if (x == std::string::npos) {
      throw gllim::ConfigError("--lattice expects HxW, got '" + lattice + "'");
    }
    const int h = std::stoi(lattice.substr(0, x));
    const int w = std::stoi(lattice.substr(x + 1));
    auto g = gllim::NeighborGraph::lattice(h, w, connectivity);
    if (expected_sites > 0 && g.n_sites() != expected_sites) {
      throw gllim::ConfigError("lattice has " + std::to_string(g.n_sites()) +
                               " sites, data has " +
                               std::to_string(expected_sites));
    }
    return g;
  }
  return std::nullopt;
}

std::string matrix_map_csv(const Eigen::VectorXd& column, int height, int width) {
  std::string out;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (c) out += ',';
      out += gllim::format_g17(column[static_cast<Eigen::Index>(r) * width + c]);
    }
    out += '\n';
  }
  return out;
}

std::string labels_csv(const gllim::MeanFieldPosterior& q, int height, int width) {
  std::string out;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (c) out += ',';
      int argmax = 0;
      q.row(static_cast<Eigen::Index>(r) * width + c).maxCoeff(&argmax);
      out += std::to_string(argmax);
    }
    out += '\n';
  }
  return out;
}

std::string psi_json(const gllim::PottsField& field, bool converged, int sweeps) {
  json j;
  std::vector<double> alpha(field.alpha.data(), field.alpha.data() + field.alpha.size());
  j["alpha"] = alpha;
  j["beta"] = field.beta;
  j["converged"] = converged;
  j["sweeps"] = sweeps;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const GlobalOptions& global, Manifest& manifest,
              const std::string& data_path, int K, int L_w,
              const std::string& beta, const std::string& graph_path,
              const std::string& lattice, int connectivity, int max_iter,
              double tol, int restarts, const std::string& covariance,
              bool normalize, std::string model_name) {
  const auto out_dir = ensure_out_dir(global);
  manifest.input(data_path);

  auto ds = gllim::load_dataset_auto(data_path);
  const auto cfg = make_train_config(K, L_w, beta, max_iter, tol, restarts,
                                     covariance, global);
  const auto graph =
      load_graph_options(graph_path, lattice, connectivity, ds.n());
  if (cfg.beta_mode == gllim::BetaMode::estimated && !graph) {
    throw gllim::ConfigError("--beta estimated requires --graph or --lattice");
  }
  if (cfg.beta_mode == gllim::BetaMode::fixed && cfg.beta_value != 0.0 && !graph) {
    throw gllim::ConfigError("--beta > 0 requires --graph or --lattice");
  }

  std::optional<gllim::Normalizer> nz;
  if (normalize) {
    nz = gllim::fit_normalizer(ds);
    ds = nz->apply(ds);
  }

  const auto report =
      gllim::train(ds.Y, ds.T, graph ? &*graph : nullptr, cfg);

  gllim::ModelArchive archive;
  archive.model = report.model;
  archive.field = report.field;
  archive.normalizer = nz;
  const auto model_path = (out_dir / model_name).string();
  gllim::save_model(model_path, archive);
  manifest.output(model_path);

  const auto report_path = (out_dir / "report.json").string();
  gllim::atomic_write_file(report_path, report.to_json());
  manifest.output(report_path);
  manifest.note("final_objective", report.objective_trace.back());
  manifest.note("iterations", report.iterations);

  std::printf("trained K=%d L_w=%d: objective %.6f after %d iterations (restart %d)\n",
              K, L_w, report.objective_trace.back(), report.iterations,
              report.restart_index);
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const GlobalOptions& global, Manifest& manifest,
                const std::string& model_path, const std::string& data_path,
                bool spatial, int connectivity, const std::string& beta,
                const std::string& alpha, const std::string& clamp) {
  const auto out_dir = ensure_out_dir(global);
  manifest.input(model_path);
  manifest.input(data_path);

  const auto archive = gllim::load_model(model_path);
  const auto fm = gllim::to_forward(archive.model);
  const int l_t = archive.model.dims.L_t;
  const int l_total = archive.model.dims.L();

  // Observations: an image container or a plain spectra table.
  gllim::SpectralImage image;
  bool is_image = true;
  try {
    image = gllim::load_image(data_path);
  } catch (const gllim::ParseError&) {
    is_image = false;
  }
  if (!is_image) {
    const auto ds = gllim::load_dataset_auto(data_path);
    image.height = static_cast<int>(ds.n());
    image.width = 1;
    image.cube = ds.Y;
  }
  if (image.cube.cols() != archive.model.dims.D) {
    throw gllim::ConfigError("data dimension " + std::to_string(image.cube.cols()) +
                             " does not match model D=" +
                             std::to_string(archive.model.dims.D));
  }

  Eigen::MatrixXd cube = image.cube;
  if (archive.normalizer) cube = archive.normalizer->apply_y(cube);
  gllim::SpectralImage working = image;
  working.cube = cube;

  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> bounds;
  if (!clamp.empty()) {
    const auto colon = clamp.find(':');
    if (colon == std::string::npos) {
      throw gllim::ConfigError("--clamp expects lo:hi, got '" + clamp + "'");
    }
    const double lo = std::stod(clamp.substr(0, colon));
    const double hi = std::stod(clamp.substr(colon + 1));
    bounds = std::make_pair(Eigen::VectorXd::Constant(l_t, lo),
                            Eigen::VectorXd::Constant(l_t, hi));
  }

  Eigen::MatrixXd x_hat;
  gllim::PottsField field;
  gllim::MeanFieldPosterior q;
  bool converged = true;
  int sweeps = 0;

  if (spatial) {
    const auto graph =
        gllim::NeighborGraph::lattice(image.height, image.width, connectivity);
    gllim::SpatialPredictOptions opts;
    opts.threads = global.threads;
    if (beta == "estimate" || beta == "estimated") {
      opts.estimate_beta = true;
    } else if (beta.rfind("fixed:", 0) == 0) {
      opts.estimate_beta = false;
      opts.beta_value = std::stod(beta.substr(6));
    } else {
      throw gllim::ConfigError("--beta expects 'estimate' or 'fixed:<v>', got '" +
                               beta + "'");
    }
    // alpha default: re-estimate, except under a hard beta=0 where the run
    // must reduce to the per-pixel predictor.
    std::string alpha_mode = alpha;
    if (alpha_mode.empty()) {
      alpha_mode = (!opts.estimate_beta && opts.beta_value == 0.0) ? "fixed"
                                                                   : "estimate";
    }
    if (alpha_mode == "estimate") {
      opts.alpha_mode = gllim::AlphaPredictMode::estimate;
    } else if (alpha_mode == "fixed") {
      opts.alpha_mode = gllim::AlphaPredictMode::fixed_log_weights;
    } else {
      throw gllim::ConfigError("--alpha expects 'estimate' or 'fixed'");
    }
    auto result = gllim::predict_spatial(fm, working, graph, opts);
    x_hat = std::move(result.x_hat);
    field = result.field;
    q = std::move(result.q);
    converged = result.converged;
    sweeps = result.sweeps;
  } else {
    x_hat = gllim::predict(fm, working.cube, global.threads);
    q.resize(working.cube.rows(), fm.K());
    for (Eigen::Index i = 0; i < working.cube.rows(); ++i) {
      q.row(i) = gllim::forward_density(fm, working.cube.row(i))
                     .weights.transpose();
    }
    field.alpha = fm.log_weights();
    field.beta = 0.0;
  }

  // Back to original units, then clamp the observed block.
  if (archive.normalizer && l_t > 0) {
    x_hat.leftCols(l_t) = archive.normalizer->invert_t(x_hat.leftCols(l_t));
  }
  if (bounds) {
    for (Eigen::Index i = 0; i < x_hat.rows(); ++i) {
      x_hat.row(i) =
          gllim::clamp_proportions(x_hat.row(i).transpose(), bounds, l_t)
              .transpose();
    }
  }

  for (int c = 0; c < l_total; ++c) {
    const std::string name = c < l_t ? "param_" + std::to_string(c + 1)
                                     : "latent_" + std::to_string(c - l_t + 1);
    const auto path = (out_dir / (name + ".csv")).string();
    gllim::atomic_write_file(
        path, matrix_map_csv(x_hat.col(c), image.height, image.width));
    manifest.output(path);
  }
  const auto labels_path = (out_dir / "labels.csv").string();
  gllim::atomic_write_file(labels_path, labels_csv(q, image.height, image.width));
  manifest.output(labels_path);
  const auto psi_path = (out_dir / "psi.json").string();
  gllim::atomic_write_file(psi_path, psi_json(field, converged, sweeps));
  manifest.output(psi_path);
  manifest.note("spatial", spatial);
  manifest.note("beta", field.beta);

  std::printf("predicted %lld sites (%s); beta=%.6g\n",
              static_cast<long long>(x_hat.rows()),
              spatial ? "spatial" : "per-pixel", field.beta);
  return 0;
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

int cmd_select(const GlobalOptions& global, Manifest& manifest,
               const std::string& data_path, int K, const std::string& lw_range,
               int max_iter, double tol, int restarts, bool normalize) {
  const auto out_dir = ensure_out_dir(global);
  manifest.input(data_path);
  auto ds = gllim::load_dataset_auto(data_path);
  if (normalize) ds = gllim::fit_normalizer(ds).apply(ds);

  const auto colon = lw_range.find(':');
  std::vector<int> range;
  if (colon == std::string::npos) {
    range.push_back(std::stoi(lw_range));
  } else {
    const int lo = std::stoi(lw_range.substr(0, colon));
    const int hi = std::stoi(lw_range.substr(colon + 1));
    if (lo > hi) throw gllim::ConfigError("--lw-range expects lo:hi with lo <= hi");
    for (int lw = lo; lw <= hi; ++lw) range.push_back(lw);
  }

  auto cfg = make_train_config(K, 0, "0", max_iter, tol, restarts, "equal", global);
  const auto result = gllim::select_lw(ds.Y, ds.T, cfg, range, global.threads);

  const auto bic_path = (out_dir / "bic.csv").string();
  gllim::atomic_write_file(bic_path, gllim::bic_records_csv(result.records));
  manifest.output(bic_path);
  manifest.note("selected_L_w", result.best_L_w);

  std::printf("selected L_w = %d\n", result.best_L_w);
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const GlobalOptions& global, Manifest& manifest, int D, int L_t,
              int L_w, int K, double separation, double noise_std,
              std::int64_t n_samples, const std::string& data_out,
              const std::string& image_out, int height, int width,
              const std::string& regions, const std::string& snr) {
  const auto out_dir = ensure_out_dir(global);
  std::mt19937_64 rng(global.seed);

  gllim::Dims dims{D, L_t, L_w, K, std::max<std::int64_t>(n_samples, 1)};
  gllim::GeneratorOptions gen;
  gen.separation = separation;
  gen.noise_std = noise_std;
  const auto model = gllim::generate_synthetic_model(rng, dims, gen);
  const auto data = gllim::sample_dataset(model, n_samples, rng);
  gllim::SpectralDataset ds{data.Y, data.T, {}};

  if (!data_out.empty()) {
    const auto path = (out_dir / data_out).string();
    const auto format = path.size() > 4 && path.substr(path.size() - 4) == ".csv"
                            ? gllim::DatasetFormat::csv
                            : gllim::DatasetFormat::packed_binary;
    gllim::save_dataset(path, ds, format);
    manifest.output(path);
  }

  if (!image_out.empty()) {
    const auto x = regions.find('x');
    if (x == std::string::npos) {
      throw gllim::ConfigError("--regions expects RxC, got '" + regions + "'");
    }
    gllim::ImageLayout layout;
    layout.height = height;
    layout.width = width;
    layout.region_rows = std::stoi(regions.substr(0, x));
    layout.region_cols = std::stoi(regions.substr(x + 1));
    layout.snr_db = (snr == "inf") ? std::numeric_limits<double>::infinity()
                                   : std::stod(snr);
    const auto generated = gllim::generate_image(ds, layout, rng);
    const auto path = (out_dir / image_out).string();
    gllim::save_image(path, generated.image);
    manifest.output(path);
  }

  std::printf("synthesized: %lld samples%s\n", static_cast<long long>(n_samples),
              image_out.empty() ? "" : ", one image");
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const GlobalOptions& global, Manifest& manifest, int n_images,
              int height, int width, const std::string& regions, double snr_db,
              std::int64_t train_n, int D, int L_t, int K,
              double separation, double noise_std, int max_iter, int restarts,
              const std::string& beta) {
  const auto out_dir = ensure_out_dir(global);
  std::mt19937_64 rng(global.seed);

  gllim::Dims dims{D, L_t, 0, K, train_n};
  gllim::GeneratorOptions gen;
  gen.separation = separation;
  gen.noise_std = noise_std;
  const auto truth = gllim::generate_synthetic_model(rng, dims, gen);
  const auto train_data = gllim::sample_dataset(truth, train_n, rng);

  gllim::TrainConfig cfg;
  cfg.K = K;
  cfg.L_w = 0;
  cfg.max_iter = max_iter;
  cfg.n_restarts = restarts;
  cfg.rng_seed = global.seed;
  cfg.threads = global.threads;
  const auto report = gllim::train(train_data.Y, train_data.T, nullptr, cfg);
  const auto fm = gllim::to_forward(report.model);

  const auto x = regions.find('x');
  if (x == std::string::npos) {
    throw gllim::ConfigError("--regions expects RxC");
  }
  gllim::ImageLayout layout;
  layout.height = height;
  layout.width = width;
  layout.region_rows = std::stoi(regions.substr(0, x));
  layout.region_cols = std::stoi(regions.substr(x + 1));
  layout.snr_db = snr_db;

  gllim::SpatialPredictOptions mrf_opts;
  mrf_opts.threads = global.threads;
  if (beta == "estimate" || beta == "estimated") {
    mrf_opts.estimate_beta = true;
  } else if (beta.rfind("fixed:", 0) == 0) {
    mrf_opts.estimate_beta = false;
    mrf_opts.beta_value = std::stod(beta.substr(6));
  } else {
    throw gllim::ConfigError("--beta expects 'estimate' or 'fixed:<v>'");
  }

  const auto graph = gllim::NeighborGraph::lattice(height, width, 8);

  std::string results = "image,method";
  for (int c = 0; c < L_t; ++c) results += ",nrmse_" + std::to_string(c + 1);
  results += ",beta\n";

  Eigen::MatrixXd plain_err(n_images, L_t), mrf_err(n_images, L_t);
  std::vector<double> betas;
  for (int img_idx = 0; img_idx < n_images; ++img_idx) {
    // Fresh spectra per image, outside the training draw.
    const auto pool = gllim::sample_dataset(truth, 4000, rng);
    gllim::SpectralDataset pool_ds{pool.Y, pool.T, {}};
    const auto generated = gllim::generate_image(pool_ds, layout, rng);
    const auto& image = generated.image;

    const Eigen::MatrixXd plain = gllim::predict(fm, image.cube, global.threads);
    const auto spatial = gllim::predict_spatial(fm, image, graph, mrf_opts);
    betas.push_back(spatial.field.beta);

    results += std::to_string(img_idx) + ",plain";
    for (int c = 0; c < L_t; ++c) {
      plain_err(img_idx, c) = gllim::nrmse(plain.col(c), image.truth.col(c));
      results += ',' + gllim::format_g17(plain_err(img_idx, c));
    }
    results += ",0\n" + std::to_string(img_idx) + ",mrf";
    for (int c = 0; c < L_t; ++c) {
      mrf_err(img_idx, c) = gllim::nrmse(spatial.x_hat.col(c), image.truth.col(c));
      results += ',' + gllim::format_g17(mrf_err(img_idx, c));
    }
    results += ',' + gllim::format_g17(spatial.field.beta) + '\n';
  }

  const auto results_path = (out_dir / "results.csv").string();
  gllim::atomic_write_file(results_path, results);
  manifest.output(results_path);

  json tt;
  tt["n_images"] = n_images;
  tt["estimated_betas"] = betas;
  tt["parameters"] = json::array();
  for (int c = 0; c < L_t; ++c) {
    const auto test = gllim::paired_ttest(plain_err.col(c), mrf_err.col(c));
    json entry;
    entry["parameter"] = c + 1;
    entry["mean_nrmse_plain"] = plain_err.col(c).mean();
    entry["mean_nrmse_mrf"] = mrf_err.col(c).mean();
    entry["t"] = test.t;
    entry["p"] = test.p;
    tt["parameters"].push_back(entry);
    std::printf("param %d: plain %.4f vs mrf %.4f (t=%.3f, p=%.3g)\n", c + 1,
                plain_err.col(c).mean(), mrf_err.col(c).mean(), test.t, test.p);
  }
  const auto tt_path = (out_dir / "ttest.json").string();
  gllim::atomic_write_file(tt_path, tt.dump(2));
  manifest.output(tt_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Locally-linear Gaussian mixture regression with a Potts-MRF "
               "spatial prior"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config");
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "RNG seed")->capture_default_str();
  app.add_option("--threads", global.threads,
                 "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--out-dir", global.out_dir, "output directory")
      ->capture_default_str();
  app.add_option("--log-level", global.log_level,
                 "debug|info|warn|error|off")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "fit a model on paired data");
  std::string tr_data, tr_beta = "0", tr_graph, tr_lattice, tr_cov = "isotropic";
  std::string tr_model_name = "model.gllim";
  int tr_K = 5, tr_Lw = 0, tr_max_iter = 200, tr_restarts = 5, tr_conn = 8;
  double tr_tol = 1e-6;
  bool tr_normalize = true;
  train->add_option("--data", tr_data, "dataset (csv or packed binary)")
      ->required();
  train->add_option("--K", tr_K, "mixture components")->capture_default_str();
  train->add_option("--Lw", tr_Lw, "latent response dimension")
      ->capture_default_str();
  train->add_option("--beta", tr_beta, "MRF interaction: a number or 'estimated'")
      ->capture_default_str();
  train->add_option("--graph", tr_graph, "edge list file (0-based 'u v' lines)");
  train->add_option("--lattice", tr_lattice, "HxW lattice over the samples");
  train->add_option("--connectivity", tr_conn, "lattice connectivity (4|8)")
      ->capture_default_str();
  train->add_option("--max-iter", tr_max_iter, "EM iteration cap")
      ->capture_default_str();
  train->add_option("--tol", tr_tol, "relative objective tolerance")
      ->capture_default_str();
  train->add_option("--restarts", tr_restarts, "random restarts")
      ->capture_default_str();
  train->add_option("--covariance", tr_cov, "isotropic|equal")
      ->capture_default_str();
  train->add_flag("--normalize,!--no-normalize", tr_normalize,
                  "standardize training data (stored in the model)");
  train->add_option("--model-out", tr_model_name, "model file name")
      ->capture_default_str();

  // predict
  auto* predict = app.add_subcommand("predict", "apply a trained model");
  std::string pr_model, pr_data, pr_beta = "estimate", pr_alpha, pr_clamp;
  bool pr_spatial = false;
  int pr_conn = 8;
  predict->add_option("--model", pr_model, "model archive")->required();
  predict->add_option("--data", pr_data, "image container or spectra table")
      ->required();
  predict->add_flag("--spatial", pr_spatial, "spatially regularized prediction");
  predict->add_option("--connectivity", pr_conn, "lattice connectivity (4|8)")
      ->capture_default_str();
  predict->add_option("--beta", pr_beta, "'estimate' or 'fixed:<v>'")
      ->capture_default_str();
  predict->add_option("--alpha", pr_alpha,
                      "'estimate' or 'fixed' (default: estimate, fixed when "
                      "--beta fixed:0)");
  predict->add_option("--clamp", pr_clamp, "bounds lo:hi for observed outputs");

  // select
  auto* select = app.add_subcommand("select", "choose the latent dimension by BIC");
  std::string se_data, se_range = "0:5";
  int se_K = 5, se_max_iter = 100, se_restarts = 2;
  double se_tol = 1e-6;
  bool se_normalize = true;
  select->add_option("--data", se_data, "dataset")->required();
  select->add_option("--K", se_K, "mixture components")->capture_default_str();
  select->add_option("--lw-range", se_range, "lo:hi or a single value")
      ->capture_default_str();
  select->add_option("--max-iter", se_max_iter, "EM iteration cap")
      ->capture_default_str();
  select->add_option("--tol", se_tol, "relative objective tolerance")
      ->capture_default_str();
  select->add_option("--restarts", se_restarts, "random restarts")
      ->capture_default_str();
  select->add_flag("--normalize,!--no-normalize", se_normalize,
                   "standardize before fitting");

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic data");
  int sy_D = 20, sy_Lt = 3, sy_Lw = 0, sy_K = 5, sy_height = 400, sy_width = 300;
  double sy_sep = 3.0, sy_noise = 0.1;
  std::int64_t sy_n = 10000;
  std::string sy_data_out, sy_image_out, sy_regions = "4x3", sy_snr = "6";
  synth->add_option("--D", sy_D, "spectral dimension")->capture_default_str();
  synth->add_option("--Lt", sy_Lt, "observed response dimension")
      ->capture_default_str();
  synth->add_option("--Lw", sy_Lw, "latent response dimension")
      ->capture_default_str();
  synth->add_option("--K", sy_K, "generator components")->capture_default_str();
  synth->add_option("--separation", sy_sep, "component separation")
      ->capture_default_str();
  synth->add_option("--noise-std", sy_noise, "generator noise std")
      ->capture_default_str();
  synth->add_option("--N", sy_n, "sample count")->capture_default_str();
  synth->add_option("--data-out", sy_data_out,
                    "dataset file name (.csv or packed binary)");
  synth->add_option("--image-out", sy_image_out, "image container file name");
  synth->add_option("--height", sy_height, "image height")->capture_default_str();
  synth->add_option("--width", sy_width, "image width")->capture_default_str();
  synth->add_option("--regions", sy_regions, "region grid RxC")
      ->capture_default_str();
  synth->add_option("--snr", sy_snr, "SNR in dB, or 'inf'")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand(
      "bench", "synthetic spatial benchmark: plain vs MRF prediction");
  int be_images = 50, be_height = 100, be_width = 100, be_D = 20, be_Lt = 3,
      be_K = 5, be_max_iter = 100, be_restarts = 2;
  double be_snr = 6.0, be_sep = 3.0, be_noise = 0.1;
  std::int64_t be_train_n = 10000;
  std::string be_regions = "4x3", be_beta = "estimate";
  bench->add_option("--images", be_images, "number of test images")
      ->capture_default_str();
  bench->add_option("--height", be_height, "image height")->capture_default_str();
  bench->add_option("--width", be_width, "image width")->capture_default_str();
  bench->add_option("--regions", be_regions, "region grid RxC")
      ->capture_default_str();
  bench->add_option("--snr", be_snr, "image SNR in dB")->capture_default_str();
  bench->add_option("--train-N", be_train_n, "training sample count")
      ->capture_default_str();
  bench->add_option("--D", be_D, "spectral dimension")->capture_default_str();
  bench->add_option("--Lt", be_Lt, "observed response dimension")
      ->capture_default_str();
  bench->add_option("--K", be_K, "components")->capture_default_str();
  bench->add_option("--separation", be_sep, "component separation")
      ->capture_default_str();
  bench->add_option("--noise-std", be_noise, "generator noise std")
      ->capture_default_str();
  bench->add_option("--max-iter", be_max_iter, "EM iteration cap")
      ->capture_default_str();
  bench->add_option("--restarts", be_restarts, "random restarts")
      ->capture_default_str();
  bench->add_option("--beta", be_beta, "'estimate' or 'fixed:<v>'")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    gllim::logging::level() = gllim::logging::parse_level(global.log_level);
    const std::string command = app.get_subcommands().front()->get_name();
    Manifest manifest(command, global, argc, argv);
    int rc = 0;
    if (train->parsed()) {
      rc = cmd_train(global, manifest, tr_data, tr_K, tr_Lw, tr_beta, tr_graph,
                     tr_lattice, tr_conn, tr_max_iter, tr_tol, tr_restarts,
                     tr_cov, tr_normalize, tr_model_name);
    } else if (predict->parsed()) {
      rc = cmd_predict(global, manifest, pr_model, pr_data, pr_spatial, pr_conn,
                       pr_beta, pr_alpha, pr_clamp);
    } else if (select->parsed()) {
      rc = cmd_select(global, manifest, se_data, se_K, se_range, se_max_iter,
                      se_tol, se_restarts, se_normalize);
    } else if (synth->parsed()) {
      rc = cmd_synth(global, manifest, sy_D, sy_Lt, sy_Lw, sy_K, sy_sep,
                     sy_noise, sy_n, sy_data_out, sy_image_out, sy_height,
                     sy_width, sy_regions, sy_snr);
    } else if (bench->parsed()) {
      rc = cmd_bench(global, manifest, be_images, be_height, be_width,
                     be_regions, be_snr, be_train_n, be_D, be_Lt, be_K, be_sep,
                     be_noise, be_max_iter, be_restarts, be_beta);
    }
    manifest.write(ensure_out_dir(global));
    return rc;
  } catch (const gllim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const gllim::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const gllim::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
