#pragma once

// Dual quadratic program solved at every filter step (and, stacked over a
// horizon, by the batch smoother).
//
// The dual variables are z = (θ ∈ R^m, ξ ∈ R^p). The maximization
//
//   max  -½ z'Sz - ε'ζ + θ'b_θ - ξ'b_ξ
//   s.t. ζ >= θ, ζ >= -θ, |θ| <= κ, ξ >= 0
//
// has ζ = |θ| at any optimum, so it is solved as the minimization
//
//   min  ½ z'Sz + ε'|θ| - θ'b_θ + ξ'b_ξ   s.t. |θ| <= κ, ξ >= 0
//
// by cyclic coordinate descent: each θ_j update is a soft-threshold by ε_j
// followed by a clip to [-κ_j, κ_j]; each ξ_i update is a nonnegative Newton
// step. After every sweep the current active set is polished with one
// reduced linear solve, accepted only if it stays on the same face and does
// not raise the objective.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robust_filter/errors.hpp"
#include "robust_filter/losses.hpp"

namespace robust_filter {

class InnovationProblem {
 public:
  /// `quad` is symmetrized on construction. Its θ-block must be positive
  /// definite; the ξ-block only needs to be positive semidefinite.
  InnovationProblem(Eigen::MatrixXd quad, Eigen::VectorXd lin_theta, Eigen::VectorXd lin_xi,
                    Eigen::VectorXd epsilon, CapVector kappa)
      : quad_(std::move(quad)),
        lin_theta_(std::move(lin_theta)),
        lin_xi_(std::move(lin_xi)),
        epsilon_(std::move(epsilon)),
        kappa_(std::move(kappa)) {
    const Eigen::Index m = lin_theta_.size();
    const Eigen::Index p = lin_xi_.size();
    detail::require_dims(quad_.rows() == m + p && quad_.cols() == m + p,
                         "innovation quad must be (m+p)x(m+p) = " + std::to_string(m + p) +
                             ", got " + std::to_string(quad_.rows()) + "x" +
                             std::to_string(quad_.cols()));
    detail::require_dims(epsilon_.size() == m, "innovation epsilon must have m entries");
    detail::require_dims(static_cast<Eigen::Index>(kappa_.size()) == m,
                         "innovation kappa must have m entries");
    detail::require_param((epsilon_.array() >= 0.0).all() && epsilon_.allFinite(),
                          "innovation epsilon must be nonnegative");
    detail::require_param(quad_.allFinite() && lin_theta_.allFinite() && lin_xi_.allFinite(),
                          "innovation problem data must be finite");

    const double scale = std::max(1.0, quad_.cwiseAbs().maxCoeff());
    detail::require_param((quad_ - quad_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
                          "innovation quad is not symmetric");
    quad_ = (0.5 * (quad_ + quad_.transpose())).eval();

    if (m > 0) {
      Eigen::LLT<Eigen::MatrixXd> llt(quad_.topLeftCorner(m, m));
      detail::require_param(llt.info() == Eigen::Success,
                            "theta block of innovation quad is not positive definite");
    }
  }

  [[nodiscard]] Eigen::Index m() const noexcept { return lin_theta_.size(); }
  [[nodiscard]] Eigen::Index p() const noexcept { return lin_xi_.size(); }
  [[nodiscard]] const Eigen::MatrixXd& quad() const noexcept { return quad_; }
  [[nodiscard]] const Eigen::VectorXd& lin_theta() const noexcept { return lin_theta_; }
  [[nodiscard]] const Eigen::VectorXd& lin_xi() const noexcept { return lin_xi_; }
  [[nodiscard]] const Eigen::VectorXd& epsilon() const noexcept { return epsilon_; }
  [[nodiscard]] const CapVector& kappa() const noexcept { return kappa_; }

  /// Linear coefficient of the minimization form, ½z'Sz - c'z: c = (b_θ, -b_ξ).
  [[nodiscard]] Eigen::VectorXd linear_term() const {
    Eigen::VectorXd c(m() + p());
    c << lin_theta_, -lin_xi_;
    return c;
  }

 private:
  Eigen::MatrixXd quad_;
  Eigen::VectorXd lin_theta_;
  Eigen::VectorXd lin_xi_;
  Eigen::VectorXd epsilon_;
  CapVector kappa_;
};

enum class SolveStatus { kConverged, kMaxIter, kUnbounded };

inline const char* to_string(SolveStatus s) noexcept {
  switch (s) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kMaxIter:
      return "max_iter";
    case SolveStatus::kUnbounded:
      return "unbounded";
  }
  return "unknown";
}

struct InnovationSolution {
  Eigen::VectorXd theta;
  Eigen::VectorXd xi;
  /// Value of the concave (maximization) objective at (theta, xi).
  double objective = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::kMaxIter;
  /// Minimization-form objective after each sweep; filled on request.
  std::vector<double> trace;

  [[nodiscard]] Eigen::VectorXd stacked() const {
    Eigen::VectorXd z(theta.size() + xi.size());
    z << theta, xi;
    return z;
  }
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 10'000;
  std::optional<Eigen::VectorXd> initial;
  bool record_trace = false;
  /// Reduced-system solve on the current active set after each sweep.
  bool polish = true;
};

/// Concave objective -½z'Sz - ε'|θ| + θ'b_θ - ξ'b_ξ.
[[nodiscard]] inline double dual_objective(const InnovationProblem& problem,
                                           const Eigen::Ref<const Eigen::VectorXd>& theta,
                                           const Eigen::Ref<const Eigen::VectorXd>& xi) {
  detail::require_dims(theta.size() == problem.m() && xi.size() == problem.p(),
                       "candidate dimensions do not match innovation problem");
  Eigen::VectorXd z(theta.size() + xi.size());
  z << theta, xi;
  return -0.5 * z.dot(problem.quad() * z) - problem.epsilon().dot(theta.cwiseAbs()) +
         theta.dot(problem.lin_theta()) - xi.dot(problem.lin_xi());
}

namespace detail {

inline constexpr double kZeroCurvature = 1e-14;

// Bound-membership test used by the KKT audit; clipped iterates land exactly
// on the bound, the slack covers candidates assembled by hand.
inline bool at_bound(double v, double bound) {
  return std::isfinite(bound) && v >= bound - 1e-12 * std::max(1.0, bound);
}

inline double kkt_from_gradient(const InnovationProblem& problem, const Eigen::VectorXd& z,
                                const Eigen::VectorXd& grad) {
  const Eigen::Index m = problem.m();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double t = z(j);
    const double g = grad(j);
    const double eps = problem.epsilon()(j);
    const double bound = problem.kappa()[static_cast<std::size_t>(j)].bound();
    double r = 0.0;
    if (std::abs(t) > bound) {
      r = std::abs(t) - bound;
    } else if (t == 0.0) {
      r = std::max(0.0, std::abs(g) - eps);
    } else if (t > 0.0 && at_bound(t, bound)) {
      r = std::max(0.0, g + eps);
    } else if (t < 0.0 && at_bound(-t, bound)) {
      r = std::max(0.0, -(g - eps));
    } else {
      r = std::abs(g + (t > 0.0 ? eps : -eps));
    }
    worst = std::max(worst, r);
  }
  for (Eigen::Index i = m; i < z.size(); ++i) {
    const double r = z(i) < 0.0 ? -z(i) : (z(i) == 0.0 ? std::max(0.0, -grad(i))
                                                         : std::abs(grad(i)));
    worst = std::max(worst, r);
  }
  return worst;
}

inline double min_form_objective(const InnovationProblem& problem, const Eigen::VectorXd& z) {
  const Eigen::Index m = problem.m();
  return 0.5 * z.dot(problem.quad() * z) - z.dot(problem.linear_term()) +
         problem.epsilon().dot(z.head(m).cwiseAbs());
}

// One reduced Newton solve on the face defined by the sign pattern of z.
// Returns true and updates z when the face minimizer is admissible and not
// worse than the current point.
inline bool polish_face(const InnovationProblem& problem, const std::vector<bool>& fixed_zero,
                        Eigen::VectorXd& z) {
  const Eigen::Index m = problem.m();
  const Eigen::Index dim = z.size();
  const Eigen::MatrixXd& S = problem.quad();
  const Eigen::VectorXd c = problem.linear_term();

  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (z(i) == 0.0 || fixed_zero[static_cast<std::size_t>(i)]) continue;
    if (i < m && at_bound(std::abs(z(i)), problem.kappa()[static_cast<std::size_t>(i)].bound()))
      continue;
    free_idx.push_back(i);
  }
  if (free_idx.empty()) return false;

  const auto nf = static_cast<Eigen::Index>(free_idx.size());
  Eigen::MatrixXd S_ff(nf, nf);
  Eigen::VectorXd rhs(nf);
  for (Eigen::Index a = 0; a < nf; ++a) {
    const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
    double r = c(i);
    if (i < m) r -= z(i) > 0.0 ? problem.epsilon()(i) : -problem.epsilon()(i);
    for (Eigen::Index k = 0; k < dim; ++k) {
      if (std::find(free_idx.begin(), free_idx.end(), k) != free_idx.end()) continue;
      r -= S(i, k) * z(k);
    }
    rhs(a) = r;
    for (Eigen::Index b = 0; b < nf; ++b) S_ff(a, b) = S(i, free_idx[static_cast<std::size_t>(b)]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(S_ff);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd sol = ldlt.solve(rhs);
  if (!sol.allFinite() || (S_ff * sol - rhs).cwiseAbs().maxCoeff() >
                              1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff()))
    return false;

  Eigen::VectorXd candidate = z;
  for (Eigen::Index a = 0; a < nf; ++a) {
    const Eigen::Index i = free_idx[static_cast<std::size_t>(a)];
    const double v = sol(a);
    if (i < m) {
      if ((z(i) > 0.0) != (v > 0.0) || v == 0.0) return false;
      if (std::abs(v) > problem.kappa()[static_cast<std::size_t>(i)].bound()) return false;
    } else if (v <= 0.0) {
      return false;
    }
    candidate(i) = v;
  }
  if (min_form_objective(problem, candidate) > min_form_objective(problem, z)) return false;
  z = std::move(candidate);
  return true;
}

// True when d is a feasible direction of recession with negative slope, which
// certifies that the minimization form is unbounded below: S d ≈ 0, ξ does not
// decrease, capped θ coordinates do not move, and the linear part decreases.
inline bool is_unbounded_ray(const InnovationProblem& problem, const Eigen::VectorXd& d) {
  const double size = d.cwiseAbs().maxCoeff();
  if (!(size > 0.0) || !d.allFinite()) return false;
  const Eigen::VectorXd u = d / size;
  const Eigen::Index m = problem.m();
  if ((u.tail(problem.p()).array() < -1e-12).any()) return false;
  for (Eigen::Index j = 0; j < m; ++j)
    if (problem.kappa()[static_cast<std::size_t>(j)].is_finite() && std::abs(u(j)) > 1e-12)
      return false;
  const double s_scale = std::max(problem.quad().cwiseAbs().maxCoeff(), 1e-300);
  if ((problem.quad() * u).cwiseAbs().maxCoeff() > 1e-8 * s_scale) return false;
  const Eigen::VectorXd c = problem.linear_term();
  const double slope = problem.epsilon().dot(u.head(m).cwiseAbs()) - c.dot(u);
  const double c_scale = c.cwiseAbs().maxCoeff() + problem.epsilon().cwiseAbs().sum();
  return slope < -1e-8 * c_scale;
}

}  // namespace detail

/// Max-norm violation of the subgradient KKT conditions of the minimization
/// form at `candidate`. Zero exactly at an optimum.
[[nodiscard]] inline double kkt_residual(const InnovationProblem& problem,
                                         const InnovationSolution& candidate) {
  detail::require_dims(candidate.theta.size() == problem.m() && candidate.xi.size() == problem.p(),
                       "candidate dimensions do not match innovation problem");
  const Eigen::VectorXd z = candidate.stacked();
  const Eigen::VectorXd grad = problem.quad() * z - problem.linear_term();
  return detail::kkt_from_gradient(problem, z, grad);
}

[[nodiscard]] inline InnovationSolution solve(const InnovationProblem& problem,
                                              const SolveOptions& options = {}) {
  detail::require_param(options.tol > 0.0, "solver tolerance must be positive");
  detail::require_param(options.max_iter > 0, "solver max_iter must be positive");
  const Eigen::Index m = problem.m();
  const Eigen::Index dim = m + problem.p();
  const Eigen::MatrixXd& S = problem.quad();
  const Eigen::VectorXd c = problem.linear_term();

  std::vector<double> bound(static_cast<std::size_t>(dim), std::numeric_limits<double>::infinity());
  for (Eigen::Index j = 0; j < m; ++j)
    bound[static_cast<std::size_t>(j)] = problem.kappa()[static_cast<std::size_t>(j)].bound();

  InnovationSolution out;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
  if (options.initial) {
    detail::require_dims(options.initial->size() == dim, "initial point has wrong dimension");
    z = *options.initial;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double b = bound[static_cast<std::size_t>(i)];
      z(i) = i < m ? std::clamp(z(i), -b, b) : std::max(0.0, z(i));
    }
  }

  // Flat ξ directions: the row is zero (S is PSD), so the coordinate only sees
  // its own linear term.
  std::vector<bool> fixed_zero(static_cast<std::size_t>(dim), false);
  for (Eigen::Index i = m; i < dim; ++i) {
    if (S(i, i) > detail::kZeroCurvature) continue;
    fixed_zero[static_cast<std::size_t>(i)] = true;
    z(i) = 0.0;
    if (problem.lin_xi()(i - m) < 0.0) out.status = SolveStatus::kUnbounded;
  }

  auto finish = [&](SolveStatus status, int iterations) {
    out.theta = z.head(m);
    out.xi = z.tail(problem.p());
    out.objective = dual_objective(problem, out.theta, out.xi);
    out.iterations = iterations;
    out.status = status;
    return out;
  };
  if (out.status == SolveStatus::kUnbounded) return finish(SolveStatus::kUnbounded, 0);

  Eigen::VectorXd grad = S * z - c;
  if (detail::kkt_from_gradient(problem, z, grad) <= options.tol)
    return finish(SolveStatus::kConverged, 0);

  // Iterates drifting along a recession ray are caught by comparing against a
  // checkpoint every few sweeps.
  constexpr int kRayCheckEvery = 16;
  Eigen::VectorXd checkpoint = z;
  for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (fixed_zero[static_cast<std::size_t>(i)]) continue;
      const double old = z(i);
      const double curv = S(i, i);
      // Minimizer along coordinate i of ½curv·t² - pull·t (+ ε|t| for θ).
      const double pull = curv * old - grad(i);
      double next = 0.0;
      if (i < m) {
        const double eps = problem.epsilon()(i);
        const double shrunk = std::copysign(std::max(0.0, std::abs(pull) - eps), pull);
        const double b = bound[static_cast<std::size_t>(i)];
        next = std::clamp(shrunk / curv, -b, b);
      } else {
        next = std::max(0.0, pull / curv);
      }
      if (next != old) {
        grad.noalias() += S.col(i) * (next - old);
        z(i) = next;
      }
    }
    if (options.polish) detail::polish_face(problem, fixed_zero, z);
    if (!z.allFinite() || z.cwiseAbs().maxCoeff() > 1e150)
      return finish(SolveStatus::kUnbounded, sweep);
    grad = S * z - c;
    if (options.record_trace) out.trace.push_back(detail::min_form_objective(problem, z));
    if (detail::kkt_from_gradient(problem, z, grad) <= options.tol)
      return finish(SolveStatus::kConverged, sweep);
    if (sweep % kRayCheckEvery == 0) {
      if (detail::is_unbounded_ray(problem, z - checkpoint))
        return finish(SolveStatus::kUnbounded, sweep);
      checkpoint = z;
    }
  }
  return finish(SolveStatus::kMaxIter, options.max_iter);
}

}  // namespace robust_filter
