#pragma once

// Fixed-interval smoothers for the four estimation problems
//
//   P1  ε-quadratic loss          P3  ε-quadratic loss + linear constraints
//   P2  ε-Huber loss              P4  ε-Huber loss + linear constraints
//
// over a horizon of N measurements. The dual QP is assembled densely:
//
//   F   (Nm x Nl)  block (i, j) = C A^{i-j} B for j <= i, else 0
//   O   (Nm x n)   block i = C A^{i+1}
//   Y   (Nm)       block i = y_{i+1} - C A^{i+1} x̄_0
//   G   (Nl x p)   block j = Σ_{k>j} B'A'^{k-1-j} U_k'
//   V   (p x Nl)   [V_0 ... V_{N-1}]
//   H   (Nm+p x n) [O; -Σ U_i A^i]
//   T = [F; -(G'+V)] Q_inv [F; -(G'+V)]' + blockdiag(W_inv, 0) + H P⁻¹ H'
//
// and the primal trajectory is recovered from the adjoint recursion
//   λ_N = 0,  λ_{k-1} = A'λ_k + C'θ_k - U_k'ξ,
//   x̂_0 = x̄_0 + P⁻¹A'λ_0,  ŵ_k = Q⁻¹(B'λ_k - V_k'ξ),  x̂_{k+1} = A x̂_k + B ŵ_k.
//
// The objective carries ½ on every term for all four variants (the argmin is
// unaffected by the overall scale). This path is dense and meant for small N.

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "robust_filter/errors.hpp"
#include "robust_filter/innovation_qp.hpp"
#include "robust_filter/losses.hpp"
#include "robust_filter/model.hpp"

namespace robust_filter {

enum class BatchVariant { kP1, kP2, kP3, kP4 };

inline constexpr std::string_view to_string(BatchVariant v) noexcept {
  switch (v) {
    case BatchVariant::kP1:
      return "P1";
    case BatchVariant::kP2:
      return "P2";
    case BatchVariant::kP3:
      return "P3";
    case BatchVariant::kP4:
      return "P4";
  }
  return "unknown";
}

inline BatchVariant parse_batch_variant(std::string_view name) {
  for (auto v : {BatchVariant::kP1, BatchVariant::kP2, BatchVariant::kP3, BatchVariant::kP4})
    if (name == to_string(v)) return v;
  throw ParameterError("unknown batch variant '" + std::string(name) + "'");
}

[[nodiscard]] constexpr bool is_huber(BatchVariant v) noexcept {
  return v == BatchVariant::kP2 || v == BatchVariant::kP4;
}

[[nodiscard]] constexpr bool is_constrained(BatchVariant v) noexcept {
  return v == BatchVariant::kP3 || v == BatchVariant::kP4;
}

/// Σ_{k=1..N} U_k x_k + Σ_{k=0..N-1} V_k w_k <= a.
struct BatchConstraints {
  std::vector<Eigen::MatrixXd> U;  ///< U_1..U_N, each p x n
  std::vector<Eigen::MatrixXd> V;  ///< V_0..V_{N-1}, each p x l
  Eigen::VectorXd a;

  [[nodiscard]] Eigen::Index p() const noexcept { return a.size(); }
};

struct BatchProblem {
  StateSpaceModel model;
  WeightConfig weights;
  LossParams loss;
  std::vector<Eigen::VectorXd> measurements;  ///< y_1..y_N
  Eigen::VectorXd x0_bar;
  std::optional<BatchConstraints> constraints;

  [[nodiscard]] int horizon() const noexcept { return static_cast<int>(measurements.size()); }

  [[nodiscard]] Eigen::Index p(BatchVariant variant) const noexcept {
    return is_constrained(variant) && constraints ? constraints->p() : 0;
  }

  void validate(BatchVariant variant) const {
    const Eigen::Index n = model.n(), l = model.l(), m = model.m();
    detail::require_param(horizon() >= 1, "batch horizon must be at least 1");
    detail::require_dims(x0_bar.size() == n, "x0_bar must have n entries");
    for (const auto& y : measurements) detail::require_dims(y.size() == m, "measurement size != m");
    weights.validate(model, !is_huber(variant), is_huber(variant));
    loss.validate(m);
    if (!is_huber(variant))
      detail::require_param(loss.all_caps_infinite(), "P1/P3 require infinite kappa");
    if (is_constrained(variant) && constraints) {
      const auto N = static_cast<std::size_t>(horizon());
      detail::require_dims(constraints->U.size() == N && constraints->V.size() == N,
                           "constraint blocks must span exactly N steps");
      for (std::size_t k = 0; k < N; ++k) {
        detail::require_dims(constraints->U[k].rows() == constraints->p() &&
                                 constraints->U[k].cols() == n,
                             "constraint U_k must be p x n");
        detail::require_dims(constraints->V[k].rows() == constraints->p() &&
                                 constraints->V[k].cols() == l,
                             "constraint V_k must be p x l");
      }
    }
  }
};

struct BatchOperators {
  Eigen::MatrixXd F;
  Eigen::MatrixXd O;
  Eigen::VectorXd Y;
  Eigen::MatrixXd Q_inv;  ///< blockdiag(Q⁻¹), Nl x Nl
  Eigen::MatrixXd W_inv;  ///< blockdiag(R⁻¹) or blockdiag(diag(1/r)), Nm x Nm
  Eigen::MatrixXd P_inv;
  Eigen::MatrixXd G;      ///< Nl x p
  Eigen::MatrixXd V;      ///< p x Nl
  Eigen::MatrixXd H;      ///< (Nm+p) x n
  Eigen::VectorXd lin_xi; ///< a - Σ U_i A^i x̄_0
};

struct BatchSolution {
  std::vector<Eigen::VectorXd> x_hat;      ///< x̂_0..x̂_N
  std::vector<Eigen::VectorXd> w_hat;      ///< ŵ_0..ŵ_{N-1}
  std::vector<Eigen::VectorXd> theta_hat;  ///< θ̂_1..θ̂_N
  Eigen::VectorXd xi_hat;
  std::vector<Eigen::VectorXd> lambda;     ///< λ_0..λ_N
  double objective = 0.0;                  ///< dual objective at the optimum
  SolveStatus status = SolveStatus::kConverged;
  int iterations = 0;
};

struct SmootherOptions {
  int horizon_cap = 50;
  SolveOptions solver;
};

class BatchCapExceeded : public ParameterError {
 public:
  BatchCapExceeded(int horizon, int cap)
      : ParameterError("horizon exceeds batch cap (" + std::to_string(horizon) + " > " +
                       std::to_string(cap) + ")") {}
};

[[nodiscard]] inline BatchOperators batch_operators(const BatchProblem& problem,
                                                    BatchVariant variant) {
  problem.validate(variant);
  const auto& A = problem.model.A();
  const auto& B = problem.model.B();
  const auto& C = problem.model.C();
  const Eigen::Index n = problem.model.n(), l = problem.model.l(), m = problem.model.m();
  const int N = problem.horizon();
  const Eigen::Index p = problem.p(variant);

  std::vector<Eigen::MatrixXd> Apow(static_cast<std::size_t>(N) + 1);
  Apow[0] = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= N; ++k) Apow[k] = A * Apow[k - 1];

  BatchOperators ops;
  ops.F = Eigen::MatrixXd::Zero(N * m, N * l);
  ops.O.resize(N * m, n);
  ops.Y.resize(N * m);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j <= i; ++j) ops.F.block(i * m, j * l, m, l) = C * Apow[i - j] * B;
    ops.O.middleRows(i * m, m) = C * Apow[i + 1];
    ops.Y.segment(i * m, m) = problem.measurements[i] - C * Apow[i + 1] * problem.x0_bar;
  }

  const Eigen::MatrixXd Q_inv = detail::spd_inverse(problem.weights.Q, "weights.Q");
  const Eigen::MatrixXd W_inv =
      is_huber(variant) ? Eigen::MatrixXd(problem.weights.r.cwiseInverse().asDiagonal())
                        : detail::spd_inverse(problem.weights.R, "weights.R");
  ops.Q_inv = Eigen::MatrixXd::Zero(N * l, N * l);
  ops.W_inv = Eigen::MatrixXd::Zero(N * m, N * m);
  for (int k = 0; k < N; ++k) {
    ops.Q_inv.block(k * l, k * l, l, l) = Q_inv;
    ops.W_inv.block(k * m, k * m, m, m) = W_inv;
  }
  ops.P_inv = detail::spd_inverse(problem.weights.P, "weights.P");

  ops.G = Eigen::MatrixXd::Zero(N * l, p);
  ops.V = Eigen::MatrixXd::Zero(p, N * l);
  ops.H.resize(N * m + p, n);
  ops.H.topRows(N * m) = ops.O;
  ops.lin_xi = Eigen::VectorXd::Zero(p);
  if (p > 0) {
    const auto& bc = *problem.constraints;
    Eigen::MatrixXd sum_UA = Eigen::MatrixXd::Zero(p, n);
    for (int k = 1; k <= N; ++k) sum_UA += bc.U[k - 1] * Apow[k];
    for (int j = 0; j < N; ++j) {
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(l, p);
      for (int k = j + 1; k <= N; ++k)
        block += B.transpose() * Apow[k - 1 - j].transpose() * bc.U[k - 1].transpose();
      ops.G.middleRows(j * l, l) = block;
      ops.V.middleCols(j * l, l) = bc.V[j];
    }
    ops.H.bottomRows(p) = -sum_UA;
    ops.lin_xi = bc.a - sum_UA * problem.x0_bar;
  }
  return ops;
}

/// Dual QP of the chosen variant over the whole horizon.
[[nodiscard]] inline InnovationProblem assemble(const BatchProblem& problem, BatchVariant variant,
                                                const SmootherOptions& options = {}) {
  if (problem.horizon() > options.horizon_cap)
    throw BatchCapExceeded(problem.horizon(), options.horizon_cap);
  const BatchOperators ops = batch_operators(problem, variant);
  const int N = problem.horizon();
  const Eigen::Index m = problem.model.m();
  const Eigen::Index p = problem.p(variant);

  Eigen::MatrixXd J(N * m + p, ops.F.cols());
  J.topRows(N * m) = ops.F;
  J.bottomRows(p) = -(ops.G.transpose() + ops.V);
  Eigen::MatrixXd T = J * ops.Q_inv * J.transpose();
  T.topLeftCorner(N * m, N * m) += ops.W_inv;
  T += ops.H * ops.P_inv * ops.H.transpose();

  Eigen::VectorXd eps_stack(N * m);
  CapVector kappa_stack;
  kappa_stack.reserve(static_cast<std::size_t>(N * m));
  for (int k = 0; k < N; ++k) {
    eps_stack.segment(k * m, m) = problem.loss.epsilon;
    for (Eigen::Index j = 0; j < m; ++j)
      kappa_stack.push_back(is_huber(variant) ? problem.loss.kappa[static_cast<std::size_t>(j)]
                                              : Cap::infinite());
  }
  return {std::move(T), ops.Y, ops.lin_xi, std::move(eps_stack), std::move(kappa_stack)};
}

[[nodiscard]] inline BatchSolution smooth(const BatchProblem& problem, BatchVariant variant,
                                          const SmootherOptions& options = {}) {
  const InnovationProblem qp = assemble(problem, variant, options);
  const InnovationSolution sol = solve(qp, options.solver);

  const auto& A = problem.model.A();
  const auto& B = problem.model.B();
  const auto& C = problem.model.C();
  const Eigen::Index n = problem.model.n(), m = problem.model.m();
  const int N = problem.horizon();
  const Eigen::Index p = problem.p(variant);
  const Eigen::MatrixXd P_inv = detail::spd_inverse(problem.weights.P, "weights.P");
  const Eigen::MatrixXd Q_inv = detail::spd_inverse(problem.weights.Q, "weights.Q");

  BatchSolution out;
  out.status = sol.status;
  out.iterations = sol.iterations;
  out.objective = sol.objective;
  out.xi_hat = sol.xi;
  for (int k = 0; k < N; ++k) out.theta_hat.push_back(sol.theta.segment(k * m, m));

  out.lambda.assign(static_cast<std::size_t>(N) + 1, Eigen::VectorXd::Zero(n));
  for (int k = N; k >= 1; --k) {
    Eigen::VectorXd prev = A.transpose() * out.lambda[k] + C.transpose() * out.theta_hat[k - 1];
    if (p > 0) prev -= problem.constraints->U[k - 1].transpose() * sol.xi;
    out.lambda[k - 1] = std::move(prev);
  }

  out.x_hat.push_back(problem.x0_bar + P_inv * (A.transpose() * out.lambda[0]));
  for (int k = 0; k < N; ++k) {
    Eigen::VectorXd drive = B.transpose() * out.lambda[k];
    if (p > 0) drive -= problem.constraints->V[k].transpose() * sol.xi;
    out.w_hat.push_back(Q_inv * drive);
    out.x_hat.push_back(A * out.x_hat[k] + B * out.w_hat[k]);
  }
  return out;
}

namespace detail {

// min over |η| <= ε of ½(e - η)'R(e - η).
inline double eps_insensitive_quadratic_form(const Eigen::VectorXd& e, const Eigen::MatrixXd& R,
                                             const Eigen::VectorXd& epsilon,
                                             const SolveOptions& solver) {
  std::vector<Eigen::Index> box;
  for (Eigen::Index j = 0; j < e.size(); ++j)
    if (epsilon(j) > 0.0) box.push_back(j);
  const double full = 0.5 * e.dot(R * e);
  if (box.empty()) return full;

  const auto nb = static_cast<Eigen::Index>(box.size());
  Eigen::MatrixXd R_bb(nb, nb);
  Eigen::VectorXd pull(nb);
  CapVector caps;
  const Eigen::VectorXd Re = R * e;
  for (Eigen::Index a = 0; a < nb; ++a) {
    pull(a) = Re(box[a]);
    caps.push_back(Cap::finite(epsilon(box[a])));
    for (Eigen::Index b = 0; b < nb; ++b) R_bb(a, b) = R(box[a], box[b]);
  }
  const InnovationProblem inner(R_bb, pull, Eigen::VectorXd(0), Eigen::VectorXd::Zero(nb),
                                std::move(caps));
  const InnovationSolution eta = solve(inner, solver);
  return full - eta.objective;
}

}  // namespace detail

struct PrimalAudit {
  double objective = 0.0;
  /// max_i (Σ U_k x̂_k + Σ V_k ŵ_k - a)_i, clipped at 0.
  double constraint_violation = 0.0;
  /// max-norm of x̂_{k+1} - A x̂_k - B ŵ_k over the horizon.
  double dynamics_residual = 0.0;
};

/// Primal cost ½(x̂_0-x̄_0)'P(x̂_0-x̄_0) + ½Σŵ'Qŵ + Σ loss(y_k - C x̂_k) of a
/// trajectory, plus its feasibility residuals.
[[nodiscard]] inline PrimalAudit primal_audit(const BatchProblem& problem,
                                              const BatchSolution& solution,
                                              BatchVariant variant,
                                              const SolveOptions& solver = {}) {
  problem.validate(variant);
  const int N = problem.horizon();
  detail::require_dims(static_cast<int>(solution.x_hat.size()) == N + 1 &&
                           static_cast<int>(solution.w_hat.size()) == N,
                       "solution trajectory length does not match horizon");
  const auto& A = problem.model.A();
  const auto& B = problem.model.B();
  const auto& C = problem.model.C();
  const auto& W = problem.weights;

  PrimalAudit audit;
  const Eigen::VectorXd d0 = solution.x_hat[0] - problem.x0_bar;
  double cost = 0.5 * d0.dot(W.P * d0);
  for (int k = 0; k < N; ++k) {
    cost += 0.5 * solution.w_hat[k].dot(W.Q * solution.w_hat[k]);
    audit.dynamics_residual =
        std::max(audit.dynamics_residual,
                 (solution.x_hat[k + 1] - A * solution.x_hat[k] - B * solution.w_hat[k])
                     .cwiseAbs()
                     .maxCoeff());
  }
  for (int k = 1; k <= N; ++k) {
    const Eigen::VectorXd e = problem.measurements[k - 1] - C * solution.x_hat[k];
    if (is_huber(variant)) {
      LossParams lp = problem.loss;
      lp.r = W.r;
      cost += eval_stacked_loss(e, lp, LossKind::kHuber);
    } else if (W.R.isDiagonal(0.0)) {
      LossParams lp = problem.loss;
      lp.r = W.R.diagonal();
      cost += eval_stacked_loss(e, lp, LossKind::kQuadratic);
    } else {
      cost += detail::eps_insensitive_quadratic_form(e, W.R, problem.loss.epsilon, solver);
    }
  }
  audit.objective = cost;

  const Eigen::Index p = problem.p(variant);
  if (p > 0) {
    const auto& bc = *problem.constraints;
    Eigen::VectorXd lhs = -bc.a;
    for (int k = 1; k <= N; ++k) lhs += bc.U[k - 1] * solution.x_hat[k];
    for (int k = 0; k < N; ++k) lhs += bc.V[k] * solution.w_hat[k];
    audit.constraint_violation = std::max(0.0, lhs.maxCoeff());
  }
  return audit;
}

[[nodiscard]] inline double primal_objective(const BatchProblem& problem,
                                             const BatchSolution& solution, BatchVariant variant) {
  return primal_audit(problem, solution, variant).objective;
}

/// primal - dual; nonnegative up to rounding, zero at the optimum.
[[nodiscard]] inline double duality_gap(const BatchProblem& problem, const BatchSolution& solution,
                                        BatchVariant variant) {
  return primal_objective(problem, solution, variant) - solution.objective;
}

}  // namespace robust_filter
