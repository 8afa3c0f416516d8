#pragma once

// Monte-Carlo head-to-head of several filters on simulated data.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "robust_filter/filters.hpp"
#include "robust_filter/sim.hpp"

namespace robust_filter {

struct CompareScenario {
  StateSpaceModel model;
  WeightConfig weights;
  LossParams loss;
  std::optional<LinearConstraintSet> constraints;
  Eigen::VectorXd x0;      ///< true initial state
  Eigen::VectorXd x0_bar;  ///< filters' initial estimate
  int horizon = 100;
  NoiseSpec noise;         ///< run i uses seed noise.seed + i
  std::vector<FilterKind> kinds;
  int runs = 1;
};

struct CompareRow {
  FilterKind kind;
  int run = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd rmse;
  int rejected_steps = 0;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<RunReport> reports;  ///< one per run

  /// RMSE per state averaged over runs.
  [[nodiscard]] Eigen::VectorXd mean_rmse(FilterKind kind) const {
    Eigen::VectorXd acc;
    int count = 0;
    for (const auto& row : rows) {
      if (row.kind != kind) continue;
      acc = count == 0 ? row.rmse : Eigen::VectorXd(acc + row.rmse);
      ++count;
    }
    detail::require_param(count > 0, "filter kind not part of the comparison");
    return acc / count;
  }

  /// Number of runs in which `a` has mean-over-states RMSE <= that of `b`.
  [[nodiscard]] int runs_not_worse(FilterKind a, FilterKind b) const {
    std::map<int, double> ra, rb;
    for (const auto& row : rows) {
      if (row.kind == a) ra[row.run] = row.rmse.mean();
      if (row.kind == b) rb[row.run] = row.rmse.mean();
    }
    int wins = 0;
    for (const auto& [run, value] : ra)
      if (rb.count(run) && value <= rb.at(run)) ++wins;
    return wins;
  }
};

namespace detail {

inline std::vector<double> residual_loss_trace(const StateSpaceModel& model,
                                               const WeightConfig& weights,
                                               const LossParams& loss,
                                               const std::vector<Eigen::VectorXd>& measurements,
                                               const std::vector<Eigen::VectorXd>& estimates) {
  LossParams lp = loss;
  LossKind kind = LossKind::kHuber;
  if (weights.r.size() == model.m()) {
    lp.r = weights.r;
  } else if (weights.R.rows() == model.m() && weights.R.isDiagonal(0.0)) {
    lp.r = weights.R.diagonal();
    kind = LossKind::kQuadratic;
  } else {
    return {};
  }
  std::vector<double> trace;
  trace.reserve(estimates.size());
  for (std::size_t k = 0; k < estimates.size(); ++k)
    trace.push_back(eval_stacked_loss(measurements[k] - model.C() * estimates[k], lp, kind));
  return trace;
}

}  // namespace detail

[[nodiscard]] inline CompareResult compare(const CompareScenario& scenario) {
  detail::require_param(scenario.runs >= 1, "compare needs at least one run");
  detail::require_param(!scenario.kinds.empty(), "compare needs at least one filter kind");
  RunOptions options;
  options.on_reject = OnReject::kHold;

  CompareResult result;
  for (int run = 0; run < scenario.runs; ++run) {
    NoiseSpec noise = scenario.noise;
    noise.seed = scenario.noise.seed + static_cast<std::uint64_t>(run);
    const Simulation sim = simulate(scenario.model, scenario.x0, scenario.horizon, noise);

    RunReport report;
    report.outlier_steps = sim.outlier_steps;
    for (FilterKind kind : scenario.kinds) {
      // The ε-quadratic variants share ε with the Huber ones but never a cap.
      LossParams loss = scenario.loss;
      if (!uses_huber_weights(kind)) loss.kappa = all_infinite(scenario.model.m());
      const Trajectory traj = robust_filter::run(kind, scenario.model, scenario.weights, loss,
                                                 scenario.constraints,
                                                 scenario.x0_bar, sim.measurements, options);
      std::vector<Eigen::VectorXd> est;
      est.reserve(traj.states.size());
      for (const auto& s : traj.states) est.push_back(s.x_hat);

      CompareRow row{kind, run, noise.seed, rmse(sim.states, est),
                     static_cast<int>(traj.rejected_steps.size())};
      const std::string name(to_string(kind));
      report.loss_traces[name] = detail::residual_loss_trace(
          scenario.model, scenario.weights, loss, sim.measurements, est);
      report.estimates[name] = std::move(est);
      result.rows.push_back(std::move(row));
    }
    result.reports.push_back(std::move(report));
  }
  return result;
}

}  // namespace robust_filter
