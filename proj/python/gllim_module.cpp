#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <random>

#include "gllim/dataset.hpp"
#include "gllim/forward.hpp"
#include "gllim/metrics.hpp"
#include "gllim/model.hpp"
#include "gllim/potts.hpp"
#include "gllim/selection.hpp"
#include "gllim/synth.hpp"
#include "gllim/types.hpp"
#include "gllim/vem.hpp"

namespace py = pybind11;
using namespace gllim;

namespace {

TrainConfig make_config(int K, int L_w, int max_iter, double rel_tol,
                        int n_restarts, std::uint64_t seed,
                        const std::string& beta, const std::string& covariance,
                        int threads) {
  TrainConfig cfg;
  cfg.K = K;
  cfg.L_w = L_w;
  cfg.max_iter = max_iter;
  cfg.rel_tol = rel_tol;
  cfg.n_restarts = n_restarts;
  cfg.rng_seed = seed;
  cfg.threads = threads;
  if (beta == "estimated" || beta == "estimate") {
    cfg.beta_mode = BetaMode::estimated;
  } else {
    cfg.beta_mode = BetaMode::fixed;
    cfg.beta_value = std::stod(beta);
  }
  if (covariance == "equal") {
    cfg.covariance_mode = CovarianceMode::isotropic_equal;
  } else if (covariance == "isotropic") {
    cfg.covariance_mode = CovarianceMode::isotropic;
  } else {
    throw ConfigError("covariance must be 'isotropic' or 'equal'");
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Locally-linear Gaussian mixture regression with a Potts-MRF "
            "spatial prior";

  py::register_exception<Error>(m, "GllimError");

  py::class_<Dims>(m, "Dims")
      .def(py::init([](int D, int L_t, int L_w, int K, std::int64_t N) {
             Dims d{D, L_t, L_w, K, N};
             d.validate();
             return d;
           }),
           py::arg("D"), py::arg("L_t"), py::arg("L_w"), py::arg("K"),
           py::arg("N") = 1)
      .def_readonly("D", &Dims::D)
      .def_readonly("L_t", &Dims::L_t)
      .def_readonly("L_w", &Dims::L_w)
      .def_readonly("K", &Dims::K)
      .def_property_readonly("L", &Dims::L);

  py::class_<Component>(m, "Component")
      .def_readonly("c_t", &Component::c_t)
      .def_readonly("c_w", &Component::c_w)
      .def_readonly("Gamma_t", &Component::Gamma_t)
      .def_readonly("Gamma_w", &Component::Gamma_w)
      .def_readonly("A_t", &Component::A_t)
      .def_readonly("A_w", &Component::A_w)
      .def_readonly("b", &Component::b)
      .def_readonly("sigma2", &Component::sigma2);

  py::class_<InverseModel>(m, "InverseModel")
      .def_property_readonly("dims", [](const InverseModel& im) { return im.dims; })
      .def_property_readonly("K", &InverseModel::K)
      .def_readonly("log_weights", &InverseModel::log_weights)
      .def("component",
           [](const InverseModel& im, int k) {
             if (k < 0 || k >= im.K()) throw ConfigError("component index");
             return im.components[static_cast<std::size_t>(k)];
           })
      .def("log_lik", &observed_log_lik, py::arg("Y"), py::arg("T"),
           py::arg("threads") = 0);

  py::class_<PottsField>(m, "PottsField")
      .def(py::init([](Eigen::VectorXd alpha, double beta) {
             PottsField f{std::move(alpha), beta};
             f.validate();
             return f;
           }),
           py::arg("alpha"), py::arg("beta"))
      .def_readwrite("alpha", &PottsField::alpha)
      .def_readwrite("beta", &PottsField::beta);

  py::class_<NeighborGraph>(m, "NeighborGraph")
      .def(py::init<std::int64_t>(), py::arg("n_sites"))
      .def_static("lattice", &NeighborGraph::lattice, py::arg("height"),
                  py::arg("width"), py::arg("connectivity") = 8)
      .def_static("from_edge_list", &NeighborGraph::from_edge_list)
      .def("add_edge", &NeighborGraph::add_edge)
      .def_property_readonly("n_sites", &NeighborGraph::n_sites)
      .def_property_readonly("n_edges", &NeighborGraph::n_edges);

  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("objective_trace", &TrainReport::objective_trace)
      .def_readonly("model", &TrainReport::model)
      .def_readonly("field", &TrainReport::field)
      .def_readonly("q", &TrainReport::q)
      .def_readonly("iterations", &TrainReport::iterations)
      .def_readonly("restart_index", &TrainReport::restart_index)
      .def("to_json", &TrainReport::to_json);

  m.def(
      "train",
      [](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T, int K, int L_w,
         int max_iter, double rel_tol, int n_restarts, std::uint64_t seed,
         const std::string& beta, const std::string& covariance,
         const NeighborGraph* graph, int threads) {
        const auto cfg = make_config(K, L_w, max_iter, rel_tol, n_restarts,
                                     seed, beta, covariance, threads);
        return train(Y, T, graph, cfg);
      },
      py::arg("Y"), py::arg("T"), py::arg("K"), py::arg("L_w") = 0,
      py::arg("max_iter") = 200, py::arg("rel_tol") = 1e-6,
      py::arg("n_restarts") = 5, py::arg("seed") = 0, py::arg("beta") = "0",
      py::arg("covariance") = "isotropic", py::arg("graph") = nullptr,
      py::arg("threads") = 0,
      "Fit the mixture by (variational) EM and return the report.");

  py::class_<ForwardModel>(m, "ForwardModel")
      .def_property_readonly("K", &ForwardModel::K)
      .def_property_readonly("log_weights", &ForwardModel::log_weights);

  m.def("to_forward", &to_forward, py::arg("model"),
        "Closed-form inverse-to-forward parameter conversion.");
  m.def(
      "predict",
      [](const ForwardModel& fm, const Eigen::MatrixXd& Y, int threads) {
        return predict(fm, Y, threads);
      },
      py::arg("fm"), py::arg("Y"), py::arg("threads") = 0,
      "Posterior-mean responses, one row per observation.");
  m.def(
      "forward_density",
      [](const ForwardModel& fm, const Eigen::VectorXd& y) {
        const auto mix = forward_density(fm, y);
        return py::make_tuple(mix.weights, mix.means);
      },
      py::arg("fm"), py::arg("y"),
      "Mixture weights and conditional means of p(x | y).");

  py::class_<SpatialPredictResult>(m, "SpatialPredictResult")
      .def_readonly("x_hat", &SpatialPredictResult::x_hat)
      .def_readonly("field", &SpatialPredictResult::field)
      .def_readonly("q", &SpatialPredictResult::q)
      .def_readonly("sweeps", &SpatialPredictResult::sweeps)
      .def_readonly("converged", &SpatialPredictResult::converged);

  m.def(
      "predict_spatial",
      [](const ForwardModel& fm, const Eigen::MatrixXd& cube, int height,
         int width, int connectivity, const std::string& beta,
         const std::string& alpha, double q_tol, int max_sweeps, int threads) {
        SpectralImage image;
        image.height = height;
        image.width = width;
        image.cube = cube;
        const auto graph = NeighborGraph::lattice(height, width, connectivity);
        SpatialPredictOptions opts;
        if (beta == "estimate" || beta == "estimated") {
          opts.estimate_beta = true;
        } else {
          opts.estimate_beta = false;
          opts.beta_value = std::stod(beta);
        }
        opts.alpha_mode = alpha == "fixed" ? AlphaPredictMode::fixed_log_weights
                                           : AlphaPredictMode::estimate;
        opts.q_tol = q_tol;
        opts.max_sweeps = max_sweeps;
        opts.threads = threads;
        return predict_spatial(fm, image, graph, opts);
      },
      py::arg("fm"), py::arg("cube"), py::arg("height"), py::arg("width"),
      py::arg("connectivity") = 8, py::arg("beta") = "estimate",
      py::arg("alpha") = "estimate", py::arg("q_tol") = 1e-5,
      py::arg("max_sweeps") = 200, py::arg("threads") = 0,
      "Spatially regularized prediction over a raster-ordered cube.");

  m.def("mean_field_prior", &mean_field_prior, py::arg("q"), py::arg("field"),
        py::arg("graph"));
  m.def("psi_objective", &psi_objective, py::arg("q"), py::arg("field"),
        py::arg("graph"));
  m.def("psi_gradient", &psi_gradient, py::arg("q"), py::arg("field"),
        py::arg("graph"));
  m.def(
      "estimate_psi",
      [](const MeanFieldPosterior& q, const NeighborGraph& graph,
         PottsField init, double beta_max, double grad_tol, int max_iter) {
        PsiEstimateOptions opts;
        opts.beta_max = beta_max;
        opts.grad_tol = grad_tol;
        opts.max_iter = max_iter;
        return estimate_psi(q, graph, std::move(init), opts);
      },
      py::arg("q"), py::arg("graph"), py::arg("init"),
      py::arg("beta_max") = 100.0, py::arg("grad_tol") = 1e-6,
      py::arg("max_iter") = 500);
  m.def(
      "potts_energy",
      [](const std::vector<int>& labels, const PottsField& field,
         const NeighborGraph& graph) {
        return potts_energy(labels, field, graph);
      },
      py::arg("labels"), py::arg("field"), py::arg("graph"));

  py::class_<BicRecord>(m, "BicRecord")
      .def_readonly("L_w", &BicRecord::L_w)
      .def_readonly("dof", &BicRecord::dof)
      .def_readonly("loglik", &BicRecord::loglik)
      .def_readonly("bic", &BicRecord::bic);

  m.def(
      "dof",
      [](const Dims& dims, const std::string& mode) {
        return dof(dims, mode == "isotropic" ? CovarianceMode::isotropic
                                             : CovarianceMode::isotropic_equal);
      },
      py::arg("dims"), py::arg("mode") = "equal");
  m.def("bic", &bic, py::arg("model"), py::arg("Y"), py::arg("T"),
        py::arg("threads") = 0);
  m.def(
      "select_lw",
      [](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T, int K,
         const std::vector<int>& lw_range, int max_iter, double rel_tol,
         int n_restarts, std::uint64_t seed, int workers) {
        const auto cfg = make_config(K, 0, max_iter, rel_tol, n_restarts, seed,
                                     "0", "equal", 0);
        const auto result = select_lw(Y, T, cfg, lw_range, workers);
        return py::make_tuple(result.best_L_w, result.records);
      },
      py::arg("Y"), py::arg("T"), py::arg("K"), py::arg("lw_range"),
      py::arg("max_iter") = 100, py::arg("rel_tol") = 1e-6,
      py::arg("n_restarts") = 2, py::arg("seed") = 0, py::arg("workers") = 0,
      "BIC sweep over candidate latent dimensions; returns (best, records).");

  m.def("nrmse", &nrmse, py::arg("t_hat"), py::arg("t"));
  m.def(
      "paired_ttest",
      [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const auto r = paired_ttest(a, b);
        return py::make_tuple(r.t, r.p);
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "generate_synthetic_model",
      [](const Dims& dims, std::uint64_t seed, double separation,
         double noise_std, double latent_scale) {
        std::mt19937_64 rng(seed);
        GeneratorOptions opts;
        opts.separation = separation;
        opts.noise_std = noise_std;
        opts.latent_scale = latent_scale;
        return generate_synthetic_model(rng, dims, opts);
      },
      py::arg("dims"), py::arg("seed") = 0, py::arg("separation") = 3.0,
      py::arg("noise_std") = 0.1, py::arg("latent_scale") = 1.0);
  m.def(
      "sample_dataset",
      [](const InverseModel& model, std::int64_t n, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const auto data = sample_dataset(model, n, rng);
        return py::make_tuple(data.Y, data.T, data.W, data.labels);
      },
      py::arg("model"), py::arg("n"), py::arg("seed") = 0,
      "Draws (Y, T, W, labels) from a generator model.");
  m.def(
      "generate_image",
      [](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T, int height,
         int width, int region_rows, int region_cols, double snr_db,
         int n_neighbors, std::uint64_t seed) {
        SpectralDataset ds{Y, T, {}};
        ImageLayout layout;
        layout.height = height;
        layout.width = width;
        layout.region_rows = region_rows;
        layout.region_cols = region_cols;
        layout.snr_db = snr_db;
        layout.n_neighbors = n_neighbors;
        std::mt19937_64 rng(seed);
        const auto generated = generate_image(ds, layout, rng);
        return py::make_tuple(generated.image.cube, generated.image.truth,
                              generated.clean_cube);
      },
      py::arg("Y"), py::arg("T"), py::arg("height") = 400,
      py::arg("width") = 300, py::arg("region_rows") = 4,
      py::arg("region_cols") = 3, py::arg("snr_db") = 6.0,
      py::arg("n_neighbors") = 15, py::arg("seed") = 0,
      "Region-structured synthetic image; returns (cube, truth, clean_cube).");

  m.def(
      "crossval_protocol",
      [](std::int64_t n, std::int64_t train_size, int n_splits,
         std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const auto splits = crossval_protocol(n, train_size, n_splits, rng);
        py::list out;
        for (const auto& split : splits) {
          out.append(py::make_tuple(split.train_idx, split.test_idx));
        }
        return out;
      },
      py::arg("n"), py::arg("train_size"), py::arg("n_splits") = 20,
      py::arg("seed") = 0,
      "Seeded disjoint train/test index splits of [0, n).");

  m.def("save_model",
        [](const std::string& path, const InverseModel& model,
           const PottsField& field) {
          save_model(path, ModelArchive{model, field, std::nullopt});
        },
        py::arg("path"), py::arg("model"), py::arg("field"));
  m.def("load_model", [](const std::string& path) {
    const auto archive = load_model(path);
    return py::make_tuple(archive.model, archive.field);
  });

  m.attr("__version__") = "0.1.0";
}
