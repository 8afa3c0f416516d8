#pragma once

// ε-insensitive quadratic and ε-insensitive Huber losses.
//
//   quadratic: 0                              |z| <= ε
//              ½ r (|z| - ε)²                 otherwise
//   huber:     0                              |z| <= ε
//              ½ r (|z| - ε)²                 ε < |z| < ε + κ/r
//              κ (|z| - ε - κ/r) + κ²/(2r)    |z| >= ε + κ/r
//
// Both are continuous, even, and nondecreasing in |z|. An infinite cap turns
// the Huber loss into the quadratic one.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robust_filter/errors.hpp"

namespace robust_filter {

/// Huber cap κ for one channel: either a positive finite value or unbounded.
class Cap {
 public:
  constexpr Cap() noexcept = default;

  static constexpr Cap infinite() noexcept { return Cap{}; }

  static Cap finite(double value) {
    detail::require_param(std::isfinite(value) && value > 0.0,
                          "kappa must be positive and finite (use Cap::infinite())");
    Cap c;
    c.value_ = value;
    return c;
  }

  [[nodiscard]] bool is_finite() const noexcept { return value_.has_value(); }

  [[nodiscard]] double value() const {
    if (!value_) throw ParameterError("value() on an infinite cap");
    return *value_;
  }

  /// Numeric bound for clipping; +inf when unbounded.
  [[nodiscard]] double bound() const noexcept {
    return value_ ? *value_ : std::numeric_limits<double>::infinity();
  }

  friend bool operator==(const Cap&, const Cap&) = default;

 private:
  std::optional<double> value_;
};

using CapVector = std::vector<Cap>;

inline CapVector all_infinite(Eigen::Index m) {
  return CapVector(static_cast<std::size_t>(m), Cap::infinite());
}

inline CapVector finite_caps(const Eigen::VectorXd& values) {
  CapVector out;
  out.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index j = 0; j < values.size(); ++j) out.push_back(Cap::finite(values(j)));
  return out;
}

/// Per-channel loss parameters. `r` is only needed for loss evaluation; the
/// filters take their Huber weights from WeightConfig::r.
struct LossParams {
  Eigen::VectorXd epsilon;
  CapVector kappa;
  Eigen::VectorXd r;

  [[nodiscard]] Eigen::Index channels() const noexcept { return epsilon.size(); }

  [[nodiscard]] bool all_caps_infinite() const noexcept {
    for (const auto& k : kappa)
      if (k.is_finite()) return false;
    return true;
  }

  /// Checks sizes against `m` channels and the sign constraints. A zero
  /// epsilon is accepted: it is the plain quadratic / Huber limit.
  void validate(Eigen::Index m) const {
    detail::require_dims(epsilon.size() == m,
                         "loss.epsilon has " + std::to_string(epsilon.size()) +
                             " entries, expected " + std::to_string(m));
    detail::require_dims(static_cast<Eigen::Index>(kappa.size()) == m,
                         "loss.kappa has " + std::to_string(kappa.size()) +
                             " entries, expected " + std::to_string(m));
    detail::require_param((epsilon.array() >= 0.0).all() && epsilon.allFinite(),
                          "loss.epsilon must be nonnegative and finite");
    if (r.size() != 0) {
      detail::require_dims(r.size() == m, "loss.r has wrong length");
      detail::require_param((r.array() > 0.0).all() && r.allFinite(),
                            "loss.r must be positive");
    }
  }

  /// Quadratic-to-linear switch point ε + κ/r of channel j (+inf if uncapped).
  [[nodiscard]] double switch_point(Eigen::Index j) const {
    const auto& k = kappa[static_cast<std::size_t>(j)];
    if (!k.is_finite()) return std::numeric_limits<double>::infinity();
    return epsilon(j) + k.value() / r(j);
  }
};

enum class LossKind { kQuadratic, kHuber };

namespace detail {

inline void check_scalar_loss_params(double r, double epsilon) {
  require_param(std::isfinite(r) && r > 0.0, "loss weight r must be positive");
  require_param(std::isfinite(epsilon) && epsilon >= 0.0,
                "loss epsilon must be nonnegative");
}

}  // namespace detail

[[nodiscard]] inline double eval_eps_quadratic(double z, double r, double epsilon) {
  detail::check_scalar_loss_params(r, epsilon);
  const double excess = std::abs(z) - epsilon;
  if (excess <= 0.0) return 0.0;
  return 0.5 * r * excess * excess;
}

[[nodiscard]] inline double eval_eps_huber(double z, double r, double epsilon, Cap kappa) {
  detail::check_scalar_loss_params(r, epsilon);
  const double a = std::abs(z);
  if (a <= epsilon) return 0.0;
  if (!kappa.is_finite()) return eval_eps_quadratic(z, r, epsilon);
  const double k = kappa.value();
  const double knee = epsilon + k / r;
  if (a < knee) {
    const double excess = a - epsilon;
    return 0.5 * r * excess * excess;
  }
  return k * (a - knee) + k * k / (2.0 * r);
}

[[nodiscard]] inline double eval_eps_huber(double z, double r, double epsilon, double kappa) {
  return eval_eps_huber(z, r, epsilon, Cap::finite(kappa));
}

/// Sum of per-channel losses of `residuals`; requires params.r.
[[nodiscard]] inline double eval_stacked_loss(const Eigen::Ref<const Eigen::VectorXd>& residuals,
                                              const LossParams& params, LossKind kind) {
  const Eigen::Index m = residuals.size();
  params.validate(m);
  detail::require_dims(params.r.size() == m, "loss.r is required for loss evaluation");
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (kind == LossKind::kQuadratic)
      total += eval_eps_quadratic(residuals(j), params.r(j), params.epsilon(j));
    else
      total += eval_eps_huber(residuals(j), params.r(j), params.epsilon(j),
                              params.kappa[static_cast<std::size_t>(j)]);
  }
  return total;
}

}  // namespace robust_filter
