#pragma once

// The four subcommands behind the robust-filter executable. Each reads a
// RunConfig, writes its CSV files plus summary.json into the output
// directory, and reports failures through the exit code.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "robust_filter/batch_smoother.hpp"
#include "robust_filter/cli/config.hpp"
#include "robust_filter/cli/csv.hpp"
#include "robust_filter/compare.hpp"
#include "robust_filter/filters.hpp"
#include "robust_filter/sim.hpp"

namespace robust_filter::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitIngestion = 3,
  kExitSolver = 4,
  kExitSimulation = 5,
};

struct Invocation {
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> batch_cap;
};

/// Value of ROBUST_FILTER_BATCH_CAP, if set.
[[nodiscard]] inline std::optional<int> batch_cap_from_env() {
  const char* raw = std::getenv("ROBUST_FILTER_BATCH_CAP");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (*end != '\0' || v < 1 || v > 100000)
    throw ConfigError("ROBUST_FILTER_BATCH_CAP", "expected a positive integer, got '" +
                                                     std::string(raw) + "'");
  return static_cast<int>(v);
}

namespace detail {

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<Eigen::VectorXd> measurements_for(const RunConfig& cfg) {
  if (!cfg.measurements) throw ConfigError("measurements", "missing field");
  return read_measurements(*cfg.measurements, cfg.model_ref().m());
}

inline const SimulationConfig& simulation_for(const RunConfig& cfg) {
  if (!cfg.simulation) throw ConfigError("simulation", "missing section");
  return *cfg.simulation;
}

}  // namespace detail

inline int cmd_simulate(const RunConfig& cfg, const Invocation& inv, std::ostream& log) {
  SimulationConfig sc = detail::simulation_for(cfg);
  if (inv.seed) sc.noise.seed = *inv.seed;
  const StateSpaceModel& model = cfg.model_ref();
  const Simulation sim = simulate(model, sc.x0, sc.horizon, sc.noise);

  CsvWriter ys(inv.out / "measurements.csv", [&] {
    auto h = numbered_columns("y", model.m());
    h.insert(h.begin(), "t");
    return h;
  }());
  CsvWriter xs(inv.out / "truth.csv", [&] {
    auto h = numbered_columns("x", model.n());
    h.insert(h.begin(), "t");
    return h;
  }());
  for (int k = 0; k < sc.horizon; ++k) {
    ys.step(k + 1, {&sim.measurements[k]});
    xs.step(k + 1, {&sim.states[k]});
  }
  detail::write_json(inv.out / "summary.json", {{"command", "simulate"},
                                                {"status", "ok"},
                                                {"horizon", sc.horizon},
                                                {"seed", sc.noise.seed},
                                                {"outlier_steps", sim.outlier_steps}});
  log << "simulated " << sc.horizon << " steps (" << sim.outlier_steps.size()
      << " with outliers)\n";
  return kExitOk;
}

inline int cmd_filter(const RunConfig& cfg, const Invocation& inv, std::ostream& log,
                      std::ostream& err) {
  const StateSpaceModel& model = cfg.model_ref();
  const auto ys = detail::measurements_for(cfg);
  RunOptions options;
  options.on_reject = OnReject::kHold;
  const Trajectory traj =
      run(cfg.filter, model, cfg.weights, cfg.loss, cfg.constraint_set(), cfg.x0_bar, ys, options);

  const Eigen::Index p = is_constrained(cfg.filter) && cfg.constraints ? cfg.constraints->p() : 0;
  CsvWriter est(inv.out / "estimates.csv", [&] {
    auto h = numbered_columns("xhat", model.n());
    h.insert(h.begin(), "t");
    return h;
  }());
  CsvWriter diag(inv.out / "diagnostics.csv", [&] {
    auto h = numbered_columns("theta", model.m());
    const auto xi = numbered_columns("xi", p);
    h.insert(h.end(), xi.begin(), xi.end());
    h.insert(h.begin(), "t");
    h.push_back("status");
    return h;
  }());
  for (const FilterState& s : traj.states) {
    est.step(s.step_index, {&s.x_hat});
    diag.step(s.step_index, {&s.last_theta, &s.last_xi}, {to_string(s.last_status)});
  }

  const bool ok = traj.all_accepted();
  detail::write_json(inv.out / "summary.json",
                     {{"command", "filter"},
                      {"filter", std::string(to_string(cfg.filter))},
                      {"status", ok ? "ok" : "rejected"},
                      {"steps", traj.states.size()},
                      {"rejected_steps", traj.rejected_steps},
                      {"final_estimate", detail::to_std(traj.states.back().x_hat)}});
  if (!ok) {
    err << "error: " << traj.rejected_steps.size() << " step(s) rejected, first at step "
        << traj.rejected_steps.front() << " ("
        << to_string(traj.states[traj.rejected_steps.front() - 1].last_status) << ")\n";
    return kExitSolver;
  }
  log << "filtered " << traj.states.size() << " steps with " << to_string(cfg.filter) << '\n';
  return kExitOk;
}

inline int cmd_smooth(const RunConfig& cfg, const Invocation& inv, std::ostream& log,
                      std::ostream& err) {
  const StateSpaceModel& model = cfg.model_ref();
  const BatchVariant variant = cfg.batch_variant();
  BatchProblem problem{model, cfg.weights, cfg.loss, detail::measurements_for(cfg), cfg.x0_bar,
                       std::nullopt};
  if (is_constrained(variant)) {
    if (!cfg.batch_constraints)
      throw ConfigError("batch_constraints", std::string("required for variant ") +
                                                 std::string(to_string(variant)));
    problem.constraints = cfg.batch_constraints;
  }
  SmootherOptions options;
  if (inv.batch_cap) options.horizon_cap = *inv.batch_cap;
  const BatchSolution sol = smooth(problem, variant, options);
  const PrimalAudit audit = primal_audit(problem, sol, variant, options.solver);

  // Row t = 0 carries the smoothed initial state.
  CsvWriter out(inv.out / "smoothed.csv", [&] {
    auto h = numbered_columns("xhat", model.n());
    h.insert(h.begin(), "t");
    return h;
  }());
  for (std::size_t k = 0; k < sol.x_hat.size(); ++k) out.step(static_cast<long>(k), {&sol.x_hat[k]});

  const bool ok = sol.status == SolveStatus::kConverged;
  detail::write_json(inv.out / "summary.json",
                     {{"command", "smooth"},
                      {"variant", std::string(to_string(variant))},
                      {"status", ok ? "ok" : to_string(sol.status)},
                      {"solver_status", to_string(sol.status)},
                      {"horizon", problem.horizon()},
                      {"dual_objective", sol.objective},
                      {"primal_objective", audit.objective},
                      {"duality_gap", audit.objective - sol.objective},
                      {"constraint_violation", audit.constraint_violation},
                      {"iterations", sol.iterations}});
  if (!ok) {
    err << "error: batch QP " << to_string(sol.status) << '\n';
    return kExitSolver;
  }
  log << "smoothed " << problem.horizon() << " steps (" << to_string(variant)
      << "), duality gap " << format_number(audit.objective - sol.objective) << '\n';
  return kExitOk;
}

inline int cmd_compare(const RunConfig& cfg, const Invocation& inv, std::ostream& log) {
  const SimulationConfig& sc = detail::simulation_for(cfg);
  const StateSpaceModel& model = cfg.model_ref();
  CompareScenario scenario{model,        cfg.weights, cfg.loss,  cfg.constraint_set(),
                           sc.x0,        cfg.x0_bar,  sc.horizon, sc.noise,
                           cfg.compare.filters, cfg.compare.runs};
  if (inv.seed) scenario.noise.seed = *inv.seed;
  const CompareResult res = compare(scenario);

  const auto rmse_cols = numbered_columns("rmse", model.n());
  std::vector<std::string> per_run_header{"run", "seed", "filter"};
  per_run_header.insert(per_run_header.end(), rmse_cols.begin(), rmse_cols.end());
  per_run_header.insert(per_run_header.end(), {"mean_rmse", "rejected_steps"});
  CsvWriter per_run(inv.out / "per_run.csv", per_run_header);
  for (const CompareRow& row : res.rows) {
    std::vector<std::string> cells{std::to_string(row.run), std::to_string(row.seed),
                                   std::string(to_string(row.kind))};
    for (Eigen::Index i = 0; i < row.rmse.size(); ++i) cells.push_back(format_number(row.rmse(i)));
    cells.push_back(format_number(row.rmse.mean()));
    cells.push_back(std::to_string(row.rejected_steps));
    per_run.row(cells);
  }

  std::vector<std::string> header{"filter"};
  header.insert(header.end(), rmse_cols.begin(), rmse_cols.end());
  header.insert(header.end(), {"mean_rmse", "runs_not_worse_than_kalman"});
  CsvWriter summary(inv.out / "summary.csv", header);
  const bool has_kalman =
      std::find(scenario.kinds.begin(), scenario.kinds.end(), FilterKind::kKalman) !=
      scenario.kinds.end();
  nlohmann::json rows = nlohmann::json::array();
  for (FilterKind kind : scenario.kinds) {
    const Eigen::VectorXd mean = res.mean_rmse(kind);
    std::vector<std::string> cells{std::string(to_string(kind))};
    for (Eigen::Index i = 0; i < mean.size(); ++i) cells.push_back(format_number(mean(i)));
    cells.push_back(format_number(mean.mean()));
    const int wins = has_kalman ? res.runs_not_worse(kind, FilterKind::kKalman) : -1;
    cells.push_back(has_kalman ? std::to_string(wins) : "");
    summary.row(cells);
    rows.push_back({{"filter", std::string(to_string(kind))},
                    {"mean_rmse", mean.mean()},
                    {"rmse", detail::to_std(mean)}});
    if (has_kalman) rows.back()["runs_not_worse_than_kalman"] = wins;
  }
  detail::write_json(inv.out / "summary.json", {{"command", "compare"},
                                                {"status", "ok"},
                                                {"runs", scenario.runs},
                                                {"base_seed", scenario.noise.seed},
                                                {"horizon", scenario.horizon},
                                                {"filters", rows}});
  log << "compared " << scenario.kinds.size() << " filters over " << scenario.runs << " runs\n";
  return kExitOk;
}

/// Runs one subcommand and maps failures to exit codes.
inline int execute(const Invocation& inv, std::ostream& log = std::cout,
                   std::ostream& err = std::cerr) {
  try {
    const RunConfig cfg = load_config(inv.config);
    std::filesystem::create_directories(inv.out);
    if (inv.command == "simulate") return cmd_simulate(cfg, inv, log);
    if (inv.command == "filter") return cmd_filter(cfg, inv, log, err);
    if (inv.command == "smooth") return cmd_smooth(cfg, inv, log, err);
    if (inv.command == "compare") return cmd_compare(cfg, inv, log);
    err << "error: unknown command '" << inv.command << "'\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestionError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kExitIngestion;
  } catch (const SimulationError& e) {
    err << "simulation error: " << e.what() << '\n';
    return kExitSimulation;
  } catch (const StepRejected& e) {
    err << "solver error: " << e.what() << '\n';
    return kExitSolver;
  } catch (const std::invalid_argument& e) {
    // Library validation of config-supplied data (dimensions, weights, caps).
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace robust_filter::cli
