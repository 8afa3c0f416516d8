#pragma once

// Trajectory generation with bias and impulsive outliers, and RMSE scoring.
//
// Random stream (reproducible across platforms): std::mt19937_64 seeded with
// `seed`. Uniforms are u = (draw >> 11) * 2^-53 in [0, 1). Standard normals
// come from the Marsaglia polar method on 2u - 1 pairs; both outputs of a
// pair are used, the second cached for the next request.
//
// Per step k = 1..N the draws are consumed in this order:
//   1. l normals for w_{k-1}; x_k = A x_{k-1} + B diag(process_std) w
//   2. for each channel j: one normal for the measurement noise, one uniform
//      for outlier occurrence (u < outlier_probability), and, only when an
//      outlier occurs, one uniform for its sign (u < 0.5 gives +).
//   y_k = C x_k + bias + diag(measurement_std) v + outliers

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robust_filter/errors.hpp"
#include "robust_filter/model.hpp"

namespace robust_filter {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NoiseSpec {
  Eigen::VectorXd process_std;
  Eigen::VectorXd measurement_std;
  Eigen::VectorXd measurement_bias;
  double outlier_probability = 0.0;
  double outlier_magnitude = 0.0;
  std::uint64_t seed = 0;

  void validate(const StateSpaceModel& model) const {
    detail::require_dims(process_std.size() == model.l(), "noise.process_std must have l entries");
    detail::require_dims(measurement_std.size() == model.m(),
                         "noise.measurement_std must have m entries");
    detail::require_dims(measurement_bias.size() == model.m(),
                         "noise.measurement_bias must have m entries");
    detail::require_param((process_std.array() >= 0.0).all() &&
                              (measurement_std.array() >= 0.0).all(),
                          "noise standard deviations must be nonnegative");
    detail::require_param(outlier_probability >= 0.0 && outlier_probability <= 1.0,
                          "noise.outlier_probability must be in [0, 1]");
    detail::require_param(outlier_magnitude >= 0.0, "noise.outlier_magnitude must be >= 0");
  }

  static NoiseSpec zero(const StateSpaceModel& model, std::uint64_t seed = 0) {
    NoiseSpec s;
    s.process_std = Eigen::VectorXd::Zero(model.l());
    s.measurement_std = Eigen::VectorXd::Zero(model.m());
    s.measurement_bias = Eigen::VectorXd::Zero(model.m());
    s.seed = seed;
    return s;
  }
};

/// Seeded uniform / standard-normal source (see the header comment).
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Simulation {
  std::vector<Eigen::VectorXd> states;        ///< x_1..x_N
  std::vector<Eigen::VectorXd> measurements;  ///< y_1..y_N
  std::vector<int> outlier_steps;             ///< 1-based steps with any outlier
};

[[nodiscard]] inline Simulation simulate(const StateSpaceModel& model, const Eigen::VectorXd& x0,
                                         int horizon, const NoiseSpec& noise) {
  detail::require_param(horizon >= 1, "simulation horizon must be at least 1");
  detail::require_dims(x0.size() == model.n(), "x0 must have n entries");
  noise.validate(model);

  NoiseSource rng(noise.seed);
  Simulation out;
  out.states.reserve(static_cast<std::size_t>(horizon));
  out.measurements.reserve(static_cast<std::size_t>(horizon));
  Eigen::VectorXd x = x0;
  Eigen::VectorXd w(model.l());
  Eigen::VectorXd y(model.m());
  for (int k = 1; k <= horizon; ++k) {
    for (Eigen::Index i = 0; i < model.l(); ++i) w(i) = noise.process_std(i) * rng.normal();
    x = model.A() * x + model.B() * w;
    if (!x.allFinite() || x.norm() > 1e12)
      throw SimulationError("state norm exceeded 1e12 at step " + std::to_string(k) +
                            "; use a stable A or a shorter horizon");

    y = model.C() * x + noise.measurement_bias;
    bool outlier = false;
    for (Eigen::Index j = 0; j < model.m(); ++j) {
      y(j) += noise.measurement_std(j) * rng.normal();
      if (rng.uniform() < noise.outlier_probability) {
        y(j) += rng.uniform() < 0.5 ? noise.outlier_magnitude : -noise.outlier_magnitude;
        outlier = true;
      }
    }
    if (outlier) out.outlier_steps.push_back(k);
    out.states.push_back(x);
    out.measurements.push_back(y);
  }
  return out;
}

struct RunReport {
  Eigen::VectorXd rmse_per_state;
  std::vector<int> outlier_steps;
  /// Per-step estimates of each scored filter, keyed by filter name.
  std::map<std::string, std::vector<Eigen::VectorXd>> estimates;
  /// Per-step stacked loss of y_k - C x̂_k, keyed by filter name.
  std::map<std::string, std::vector<double>> loss_traces;

  [[nodiscard]] double mean_rmse() const { return rmse_per_state.mean(); }
};

[[nodiscard]] inline Eigen::VectorXd rmse(const std::vector<Eigen::VectorXd>& truth,
                                          const std::vector<Eigen::VectorXd>& estimates) {
  detail::require_dims(truth.size() == estimates.size(),
                       "truth and estimate sequences differ in length");
  detail::require_param(!truth.empty(), "cannot score an empty trajectory");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(truth.front().size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    detail::require_dims(estimates[k].size() == acc.size() && truth[k].size() == acc.size(),
                         "state dimension mismatch at step " + std::to_string(k + 1));
    acc += (estimates[k] - truth[k]).cwiseAbs2();
  }
  return (acc / static_cast<double>(truth.size())).cwiseSqrt();
}

[[nodiscard]] inline RunReport score(const std::vector<Eigen::VectorXd>& truth,
                                     const std::vector<Eigen::VectorXd>& estimates) {
  RunReport report;
  report.rmse_per_state = rmse(truth, estimates);
  report.estimates.emplace("estimate", estimates);
  return report;
}

}  // namespace robust_filter
