#include "gllim/selection.hpp"

#include <cmath>
#include <future>

#include "gllim/io_util.hpp"
#include "gllim/parallel.hpp"

namespace gllim {

std::int64_t dof(const Dims& dims, CovarianceMode mode) {
  dims.validate();
  const std::int64_t K = dims.K;
  const std::int64_t D = dims.D;
  const std::int64_t L_t = dims.L_t;
  const std::int64_t L_w = dims.L_w;
  std::int64_t count = K * (D * (L_w + L_t + 1) + L_t * (L_t + 3) / 2 + 1);
  if (mode == CovarianceMode::isotropic) count += K - 1;
  return count;
}

BicRecord bic(const InverseModel& model, const Eigen::MatrixXd& Y,
              const Eigen::MatrixXd& T, int threads) {
  model.validate();
  bool shared_sigma = true;
  for (const auto& comp : model.components) {
    if (comp.sigma2 != model.components.front().sigma2) {
      shared_sigma = false;
      break;
    }
  }
  BicRecord rec;
  rec.L_w = model.dims.L_w;
  rec.dof = dof(model.dims, shared_sigma ? CovarianceMode::isotropic_equal
                                         : CovarianceMode::isotropic);
  rec.loglik = observed_log_lik(model, Y, T, threads);
  rec.bic = -2.0 * rec.loglik +
            static_cast<double>(rec.dof) * std::log(static_cast<double>(Y.rows()));
  return rec;
}

SelectionResult select_lw(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& T,
                          const TrainConfig& base_cfg,
                          const std::vector<int>& lw_range, int workers) {
  if (lw_range.empty()) throw ConfigError("select_lw: empty L_w range");

  const int slots = std::min<int>(resolve_threads(workers),
                                  static_cast<int>(lw_range.size()));

  auto fit_one = [&](int lw) -> BicRecord {
    TrainConfig cfg = base_cfg;
    cfg.L_w = lw;
    cfg.beta_mode = BetaMode::fixed;
    cfg.beta_value = 0.0;
    const TrainReport report = train(Y, T, nullptr, cfg);
    BicRecord rec = bic(report.model, Y, T, cfg.threads);
    rec.seed = cfg.rng_seed;
    return rec;
  };

  // Bounded fan-out: launch at most `slots` fits at a time, keep L_w order.
  std::vector<BicRecord> records;
  std::vector<int> attempted;
  std::size_t next = 0;
  std::vector<std::pair<int, std::future<BicRecord>>> in_flight;
  while (next < lw_range.size() || !in_flight.empty()) {
    while (next < lw_range.size() &&
           static_cast<int>(in_flight.size()) < std::max(1, slots)) {
      const int lw = lw_range[next++];
      in_flight.emplace_back(
          lw, std::async(std::launch::async, fit_one, lw));
    }
    auto& [lw, fut] = in_flight.front();
    try {
      records.push_back(fut.get());
    } catch (const Error& e) {
      logging::warn("select_lw: fit for L_w=" + std::to_string(lw) +
                    " failed: " + e.what());
    }
    in_flight.erase(in_flight.begin());
  }

  if (records.empty()) {
    throw NumericError("select_lw: every candidate fit failed");
  }
  std::sort(records.begin(), records.end(),
            [](const BicRecord& a, const BicRecord& b) { return a.L_w < b.L_w; });

  SelectionResult result;
  result.records = records;
  result.best_L_w = records.front().L_w;
  double best = records.front().bic;
  for (const auto& rec : records) {
    if (rec.bic < best) {  // strict: ties keep the smaller L_w
      best = rec.bic;
      result.best_L_w = rec.L_w;
    }
  }
  return result;
}

std::string bic_records_csv(const std::vector<BicRecord>& records) {
  std::string out = "L_w,dof,loglik,bic\n";
  for (const auto& rec : records) {
    out += std::to_string(rec.L_w) + ',' + std::to_string(rec.dof) + ',' +
           format_g17(rec.loglik) + ',' + format_g17(rec.bic) + '\n';
  }
  return out;
}

}  // namespace gllim
