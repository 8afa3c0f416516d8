#pragma once

// JSON run configuration.
//
// Matrices are objects {"rows": r, "cols": c, "data": [row-major values]};
// vectors are plain arrays. Kappa entries may be numbers or null (null, like
// an omitted "kappa", means no cap). Every parse error names the offending
// field, e.g. "model.A.rows: missing field".

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "robust_filter/batch_smoother.hpp"
#include "robust_filter/filters.hpp"
#include "robust_filter/losses.hpp"
#include "robust_filter/model.hpp"
#include "robust_filter/sim.hpp"

namespace robust_filter::cli {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what) {}
};

struct SimulationConfig {
  Eigen::VectorXd x0;
  int horizon = 0;
  NoiseSpec noise;
};

struct CompareConfig {
  int runs = 20;
  std::vector<FilterKind> filters;
};

struct RunConfig {
  std::filesystem::path source;  ///< config file, for resolving relative paths
  std::optional<StateSpaceModel> model;
  WeightConfig weights;
  LossParams loss;
  std::optional<ConstraintBlock> constraints;
  std::optional<BatchConstraints> batch_constraints;
  FilterKind filter = FilterKind::kEpsQuadratic;
  std::optional<BatchVariant> variant;
  Eigen::VectorXd x0_bar;
  std::optional<std::filesystem::path> measurements;
  std::optional<SimulationConfig> simulation;
  CompareConfig compare;

  [[nodiscard]] const StateSpaceModel& model_ref() const { return *model; }

  [[nodiscard]] std::optional<LinearConstraintSet> constraint_set() const {
    if (!constraints) return std::nullopt;
    return LinearConstraintSet{*constraints, {}};
  }

  /// Batch variant for `smooth`: explicit "variant", else the one matching
  /// the filter kind.
  [[nodiscard]] BatchVariant batch_variant() const {
    if (variant) return *variant;
    switch (filter) {
      case FilterKind::kEpsHuber:
        return BatchVariant::kP2;
      case FilterKind::kConstrainedEps:
        return BatchVariant::kP3;
      case FilterKind::kConstrainedHuber:
        return BatchVariant::kP4;
      default:
        return BatchVariant::kP1;
    }
  }
};

namespace detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& field(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(path, key), "missing field");
  return *it;
}

inline const json* optional_field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

inline long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<long>();
}

inline Eigen::VectorXd vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline Eigen::MatrixXd matrix(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected {rows, cols, data}");
  const long rows = integer(field(j, path, "rows"), join(path, "rows"));
  const long cols = integer(field(j, path, "cols"), join(path, "cols"));
  if (rows < 0 || cols < 0) throw ConfigError(path, "dimensions must be nonnegative");
  const Eigen::VectorXd data = vector(field(j, path, "data"), join(path, "data"));
  if (data.size() != rows * cols)
    throw ConfigError(join(path, "data"), "expected " + std::to_string(rows * cols) +
                                              " values for a " + std::to_string(rows) + "x" +
                                              std::to_string(cols) + " matrix, got " +
                                              std::to_string(data.size()));
  Eigen::MatrixXd M(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) M(r, c) = data(r * cols + c);
  return M;
}

inline CapVector caps(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers or null");
  CapVector out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (j[i].is_null()) {
      out.push_back(Cap::infinite());
      continue;
    }
    const double v = number(j[i], p);
    if (v <= 0.0) throw ConfigError(p, "kappa must be positive");
    out.push_back(Cap::finite(v));
  }
  return out;
}

inline NoiseSpec noise(const json& j, const std::string& path, const StateSpaceModel& model) {
  NoiseSpec s = NoiseSpec::zero(model);
  if (const json* f = optional_field(j, "process_std")) s.process_std = vector(*f, join(path, "process_std"));
  if (const json* f = optional_field(j, "measurement_std"))
    s.measurement_std = vector(*f, join(path, "measurement_std"));
  if (const json* f = optional_field(j, "measurement_bias"))
    s.measurement_bias = vector(*f, join(path, "measurement_bias"));
  if (const json* f = optional_field(j, "outlier_probability"))
    s.outlier_probability = number(*f, join(path, "outlier_probability"));
  if (const json* f = optional_field(j, "outlier_magnitude"))
    s.outlier_magnitude = number(*f, join(path, "outlier_magnitude"));
  return s;
}

}  // namespace detail

[[nodiscard]] inline RunConfig parse_config(const nlohmann::json& root,
                                            std::filesystem::path source = {}) {
  using namespace detail;
  RunConfig cfg;
  cfg.source = std::move(source);

  const json& m = field(root, "", "model");
  Eigen::MatrixXd A = matrix(field(m, "model", "A"), "model.A");
  Eigen::MatrixXd B = matrix(field(m, "model", "B"), "model.B");
  Eigen::MatrixXd C = matrix(field(m, "model", "C"), "model.C");
  try {
    cfg.model.emplace(std::move(A), std::move(B), std::move(C));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model", e.what());
  }
  const StateSpaceModel& model = *cfg.model;

  const json& w = field(root, "", "weights");
  cfg.weights.P = matrix(field(w, "weights", "P"), "weights.P");
  cfg.weights.Q = matrix(field(w, "weights", "Q"), "weights.Q");
  if (const json* f = optional_field(w, "R")) cfg.weights.R = matrix(*f, "weights.R");
  if (const json* f = optional_field(w, "r")) cfg.weights.r = vector(*f, "weights.r");

  if (const json* f = optional_field(root, "filter")) {
    if (!f->is_string()) throw ConfigError("filter", "expected a string");
    try {
      cfg.filter = parse_filter_kind(f->get<std::string>());
    } catch (const ParameterError& e) {
      throw ConfigError("filter", e.what());
    }
  }
  if (const json* f = optional_field(root, "variant")) {
    if (!f->is_string()) throw ConfigError("variant", "expected a string");
    try {
      cfg.variant = parse_batch_variant(f->get<std::string>());
    } catch (const ParameterError& e) {
      throw ConfigError("variant", e.what());
    }
  }

  if (const json* l = optional_field(root, "loss")) {
    cfg.loss.epsilon = vector(field(*l, "loss", "epsilon"), "loss.epsilon");
    if (const json* k = optional_field(*l, "kappa")) cfg.loss.kappa = caps(*k, "loss.kappa");
    else cfg.loss.kappa = all_infinite(cfg.loss.epsilon.size());
  } else {
    cfg.loss.epsilon = Eigen::VectorXd::Zero(model.m());
    cfg.loss.kappa = all_infinite(model.m());
  }
  if (cfg.loss.epsilon.size() != model.m())
    throw ConfigError("loss.epsilon", "expected " + std::to_string(model.m()) + " entries");
  if (cfg.loss.kappa.size() != static_cast<std::size_t>(model.m()))
    throw ConfigError("loss.kappa", "expected " + std::to_string(model.m()) + " entries");

  if (const json* c = optional_field(root, "constraints")) {
    ConstraintBlock block{matrix(field(*c, "constraints", "U"), "constraints.U"),
                          matrix(field(*c, "constraints", "V"), "constraints.V"),
                          vector(field(*c, "constraints", "a"), "constraints.a")};
    try {
      block.validate(model.n(), model.l());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("constraints", e.what());
    }
    cfg.constraints = std::move(block);
  }

  if (const json* c = optional_field(root, "batch_constraints")) {
    BatchConstraints bc;
    const json& U = field(*c, "batch_constraints", "U");
    const json& V = field(*c, "batch_constraints", "V");
    if (!U.is_array()) throw ConfigError("batch_constraints.U", "expected an array of matrices");
    if (!V.is_array()) throw ConfigError("batch_constraints.V", "expected an array of matrices");
    for (std::size_t k = 0; k < U.size(); ++k)
      bc.U.push_back(matrix(U[k], "batch_constraints.U[" + std::to_string(k) + "]"));
    for (std::size_t k = 0; k < V.size(); ++k)
      bc.V.push_back(matrix(V[k], "batch_constraints.V[" + std::to_string(k) + "]"));
    bc.a = vector(field(*c, "batch_constraints", "a"), "batch_constraints.a");
    cfg.batch_constraints = std::move(bc);
  }

  if (const json* f = optional_field(root, "x0_bar")) cfg.x0_bar = vector(*f, "x0_bar");
  else cfg.x0_bar = Eigen::VectorXd::Zero(model.n());
  if (cfg.x0_bar.size() != model.n())
    throw ConfigError("x0_bar", "expected " + std::to_string(model.n()) + " entries");

  if (const json* f = optional_field(root, "measurements")) {
    if (!f->is_string()) throw ConfigError("measurements", "expected a file path");
    std::filesystem::path p = f->get<std::string>();
    if (p.is_relative() && !cfg.source.empty()) p = cfg.source.parent_path() / p;
    cfg.measurements = std::move(p);
  }

  if (const json* s = optional_field(root, "simulation")) {
    SimulationConfig sim;
    sim.horizon = static_cast<int>(integer(field(*s, "simulation", "horizon"), "simulation.horizon"));
    if (sim.horizon < 1) throw ConfigError("simulation.horizon", "must be at least 1");
    if (const json* f = optional_field(*s, "x0")) sim.x0 = vector(*f, "simulation.x0");
    else sim.x0 = Eigen::VectorXd::Zero(model.n());
    if (sim.x0.size() != model.n())
      throw ConfigError("simulation.x0", "expected " + std::to_string(model.n()) + " entries");
    if (const json* f = optional_field(*s, "noise")) sim.noise = noise(*f, "simulation.noise", model);
    else sim.noise = NoiseSpec::zero(model);
    if (const json* f = optional_field(*s, "seed")) {
      const long seed = integer(*f, "simulation.seed");
      if (seed < 0) throw ConfigError("simulation.seed", "must be nonnegative");
      sim.noise.seed = static_cast<std::uint64_t>(seed);
    }
    try {
      sim.noise.validate(model);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("simulation.noise", e.what());
    }
    cfg.simulation = std::move(sim);
  }

  if (const json* c = optional_field(root, "compare")) {
    if (const json* f = optional_field(*c, "runs")) {
      cfg.compare.runs = static_cast<int>(integer(*f, "compare.runs"));
      if (cfg.compare.runs < 1) throw ConfigError("compare.runs", "must be at least 1");
    }
    if (const json* f = optional_field(*c, "filters")) {
      if (!f->is_array()) throw ConfigError("compare.filters", "expected an array of names");
      for (std::size_t i = 0; i < f->size(); ++i) {
        const std::string p = "compare.filters[" + std::to_string(i) + "]";
        if (!(*f)[i].is_string()) throw ConfigError(p, "expected a string");
        try {
          cfg.compare.filters.push_back(parse_filter_kind((*f)[i].get<std::string>()));
        } catch (const ParameterError& e) {
          throw ConfigError(p, e.what());
        }
      }
    }
  }
  if (cfg.compare.filters.empty()) cfg.compare.filters = {FilterKind::kKalman, cfg.filter};
  return cfg;
}

[[nodiscard]] inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", "invalid JSON in '" + path.string() + "': " + e.what());
  }
  return parse_config(root, path);
}

}  // namespace robust_filter::cli
