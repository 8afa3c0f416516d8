#pragma once

// Recursive ε-insensitive estimators and the Kalman baseline.
//
// Every robust step has the same shape as a Kalman update,
//
//   x̂_{k+1} = A x̂_k + (A P⁻¹A' + B Q⁻¹B')(C'θ̂ - U'ξ̂) - B Q⁻¹V'ξ̂,
//
// except that the transformed innovation θ̂ (and the constraint multiplier ξ̂)
// come from a small dual QP instead of a linear solve. The step QP matrix is
//
//   S = [CB; -(UB+V)] Q⁻¹ [CB; -(UB+V)]' + blockdiag(W⁻¹, 0) + [CA; -UA] P⁻¹ [CA; -UA]'
//
// with W = R (ε-quadratic) or W = diag(r) (ε-Huber). Without constraint rows
// it reduces to C B Q⁻¹B'C' + W⁻¹ + C A P⁻¹A'C'.

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "robust_filter/errors.hpp"
#include "robust_filter/innovation_qp.hpp"
#include "robust_filter/losses.hpp"
#include "robust_filter/model.hpp"

namespace robust_filter {

enum class FilterKind { kEpsQuadratic, kEpsHuber, kConstrainedEps, kConstrainedHuber, kKalman };

inline constexpr std::string_view to_string(FilterKind kind) noexcept {
  switch (kind) {
    case FilterKind::kEpsQuadratic:
      return "eps_quadratic";
    case FilterKind::kEpsHuber:
      return "eps_huber";
    case FilterKind::kConstrainedEps:
      return "constrained_eps";
    case FilterKind::kConstrainedHuber:
      return "constrained_huber";
    case FilterKind::kKalman:
      return "kalman";
  }
  return "unknown";
}

inline FilterKind parse_filter_kind(std::string_view name) {
  for (auto k : {FilterKind::kEpsQuadratic, FilterKind::kEpsHuber, FilterKind::kConstrainedEps,
                 FilterKind::kConstrainedHuber, FilterKind::kKalman})
    if (name == to_string(k)) return k;
  throw ParameterError("unknown filter kind '" + std::string(name) + "'");
}

[[nodiscard]] constexpr bool uses_huber_weights(FilterKind kind) noexcept {
  return kind == FilterKind::kEpsHuber || kind == FilterKind::kConstrainedHuber;
}

[[nodiscard]] constexpr bool is_constrained(FilterKind kind) noexcept {
  return kind == FilterKind::kConstrainedEps || kind == FilterKind::kConstrainedHuber;
}

struct FilterState {
  /// Estimate of x_k given y_1..y_k.
  Eigen::VectorXd x_hat;
  int step_index = 0;
  Eigen::VectorXd last_theta;
  Eigen::VectorXd last_xi;
  /// A-posteriori re-estimate of the previous state after the last measurement.
  Eigen::VectorXd last_posterior;
  /// Disturbance estimate ŵ of the last step.
  Eigen::VectorXd last_disturbance;
  SolveStatus last_status = SolveStatus::kConverged;
  int last_iterations = 0;

  static FilterState initial(Eigen::VectorXd x0_bar) {
    FilterState s;
    s.x_hat = std::move(x0_bar);
    s.last_posterior = s.x_hat;
    return s;
  }
};

/// A step whose QP did not converge. The input state is left untouched.
class StepRejected : public std::runtime_error {
 public:
  StepRejected(int step, SolveStatus status, const std::string& detail)
      : std::runtime_error("step " + std::to_string(step) + " rejected (" + to_string(status) +
                           "): " + detail),
        step_(step),
        status_(status) {}

  [[nodiscard]] int step() const noexcept { return step_; }
  [[nodiscard]] SolveStatus status() const noexcept { return status_; }

 private:
  int step_;
  SolveStatus status_;
};

struct FilterOptions {
  SolveOptions solver;
};

namespace detail {

// Shared by every variant so that an empty constraint block reproduces the
// unconstrained matrix bit for bit.
inline Eigen::MatrixXd assemble_step_quad(const Eigen::MatrixXd& CA, const Eigen::MatrixXd& CB,
                                          const Eigen::MatrixXd& UA, const Eigen::MatrixXd& UBV,
                                          const Eigen::MatrixXd& W_inv,
                                          const Eigen::MatrixXd& P_inv,
                                          const Eigen::MatrixXd& Q_inv) {
  const Eigen::Index m = CA.rows();
  const Eigen::Index p = UA.rows();
  Eigen::MatrixXd J(m + p, CB.cols());
  J << CB, -UBV;
  Eigen::MatrixXd H(m + p, CA.cols());
  H << CA, -UA;
  Eigen::MatrixXd S = J * Q_inv * J.transpose();
  S.topLeftCorner(m, m) += W_inv;
  S += H * P_inv * H.transpose();
  return S;
}

}  // namespace detail

/// One estimator with its per-run matrices precomputed. Immutable after
/// construction; `step` may be called concurrently on distinct states.
class RecursiveFilter {
 public:
  RecursiveFilter(FilterKind kind, StateSpaceModel model, WeightConfig weights, LossParams loss,
                  std::optional<LinearConstraintSet> constraints = std::nullopt,
                  FilterOptions options = {})
      : kind_(kind),
        model_(std::move(model)),
        weights_(std::move(weights)),
        loss_(std::move(loss)),
        constraints_(std::move(constraints)),
        options_(std::move(options)) {
    const bool huber = uses_huber_weights(kind_);
    weights_.validate(model_, !huber, huber);
    if (kind_ != FilterKind::kKalman) {
      loss_.validate(model_.m());
      if (kind_ == FilterKind::kEpsQuadratic || kind_ == FilterKind::kConstrainedEps)
        detail::require_param(loss_.all_caps_infinite(),
                              std::string(to_string(kind_)) + " requires infinite kappa");
    }
    if (is_constrained(kind_)) {
      detail::require_param(constraints_.has_value(),
                            std::string(to_string(kind_)) + " requires a constraint set");
      if (!constraints_->time_varying()) constraints_->constant.validate(model_.n(), model_.l());
    } else {
      constraints_.reset();
    }

    const auto& A = model_.A();
    const auto& B = model_.B();
    const auto& C = model_.C();
    P_inv_ = detail::spd_inverse(weights_.P, "weights.P");
    Q_inv_ = detail::spd_inverse(weights_.Q, "weights.Q");
    W_inv_ = huber ? Eigen::MatrixXd(weights_.r.cwiseInverse().asDiagonal())
                   : detail::spd_inverse(weights_.R, "weights.R");
    CA_ = C * A;
    CB_ = C * B;
    predictor_ = A * P_inv_ * A.transpose() + B * Q_inv_ * B.transpose();
    gain_ = predictor_ * C.transpose();
    quad_ = detail::assemble_step_quad(CA_, CB_, Eigen::MatrixXd(0, model_.n()),
                                       Eigen::MatrixXd(0, model_.l()), W_inv_, P_inv_, Q_inv_);
    if (constraints_ && !constraints_->time_varying())
      constrained_quad_ = quad_for(constraints_->constant);
  }

  [[nodiscard]] FilterKind kind() const noexcept { return kind_; }
  [[nodiscard]] const StateSpaceModel& model() const noexcept { return model_; }
  /// C B Q⁻¹B'C' + W⁻¹ + C A P⁻¹A'C'.
  [[nodiscard]] const Eigen::MatrixXd& innovation_matrix() const noexcept { return quad_; }
  /// (A P⁻¹A' + B Q⁻¹B') C'.
  [[nodiscard]] const Eigen::MatrixXd& gain() const noexcept { return gain_; }
  [[nodiscard]] const Eigen::MatrixXd& predictor() const noexcept { return predictor_; }

  /// Constraint rows that apply when estimating step `step` (1-based).
  [[nodiscard]] ConstraintBlock constraints_at(int step) const {
    if (!constraints_) return ConstraintBlock::empty(model_.n(), model_.l());
    ConstraintBlock block = constraints_->at(step);
    block.validate(model_.n(), model_.l());
    return block;
  }

  /// The step QP for measurement `y_next` given the prior `state`.
  [[nodiscard]] InnovationProblem innovation_problem(const FilterState& state,
                                                     const Eigen::VectorXd& y_next,
                                                     const ConstraintBlock& block) const {
    check_inputs(state, y_next);
    Eigen::VectorXd lin_theta = y_next - CA_ * state.x_hat;
    CapVector kappa = uses_huber_weights(kind_) ? loss_.kappa : all_infinite(model_.m());
    if (block.p() == 0)
      return {quad_, std::move(lin_theta), Eigen::VectorXd(0), loss_.epsilon, std::move(kappa)};
    const Eigen::MatrixXd UA = block.U * model_.A();
    Eigen::VectorXd lin_xi = block.a - UA * state.x_hat;
    Eigen::MatrixXd S = constrained_quad_ && !constraints_->time_varying() ? *constrained_quad_
                                                                           : quad_for(block);
    return {std::move(S), std::move(lin_theta), std::move(lin_xi), loss_.epsilon,
            std::move(kappa)};
  }

  [[nodiscard]] FilterState step(const FilterState& state, const Eigen::VectorXd& y_next) const {
    const int step = state.step_index + 1;
    if (kind_ == FilterKind::kKalman) return kalman_step(state, y_next);

    const ConstraintBlock block = constraints_at(step);
    const InnovationProblem problem = innovation_problem(state, y_next, block);
    const InnovationSolution sol = solve(problem, options_.solver);
    if (sol.status != SolveStatus::kConverged) {
      throw StepRejected(step, sol.status,
                         sol.status == SolveStatus::kUnbounded
                             ? "constraint geometry is infeasible or degenerate"
                             : "innovation QP did not reach tolerance");
    }

    const auto& A = model_.A();
    const auto& B = model_.B();
    const Eigen::VectorXd lambda = model_.C().transpose() * sol.theta - block.U.transpose() * sol.xi;
    const Eigen::VectorXd v_xi = block.V.transpose() * sol.xi;

    FilterState next;
    next.step_index = step;
    next.x_hat = A * state.x_hat + predictor_ * lambda - B * (Q_inv_ * v_xi);
    next.last_posterior = state.x_hat + P_inv_ * (A.transpose() * lambda);
    next.last_disturbance = Q_inv_ * (B.transpose() * lambda - v_xi);
    next.last_theta = sol.theta;
    next.last_xi = sol.xi;
    next.last_status = sol.status;
    next.last_iterations = sol.iterations;
    if (!next.x_hat.allFinite())
      throw StepRejected(step, SolveStatus::kUnbounded, "non-finite state estimate");
    return next;
  }

 private:
  void check_inputs(const FilterState& state, const Eigen::VectorXd& y_next) const {
    detail::require_dims(state.x_hat.size() == model_.n(), "state estimate must have n entries");
    detail::require_dims(y_next.size() == model_.m(), "measurement must have m entries");
    detail::require_param(y_next.allFinite(), "measurement must be finite");
  }

  [[nodiscard]] Eigen::MatrixXd quad_for(const ConstraintBlock& block) const {
    const Eigen::MatrixXd UA = block.U * model_.A();
    const Eigen::MatrixXd UBV = block.U * model_.B() + block.V;
    return detail::assemble_step_quad(CA_, CB_, UA, UBV, W_inv_, P_inv_, Q_inv_);
  }

  [[nodiscard]] FilterState kalman_step(const FilterState& state,
                                        const Eigen::VectorXd& y_next) const {
    check_inputs(state, y_next);
    const Eigen::VectorXd innovation = y_next - CA_ * state.x_hat;
    const Eigen::VectorXd theta = quad_.llt().solve(innovation);
    const Eigen::VectorXd lambda = model_.C().transpose() * theta;

    FilterState next;
    next.step_index = state.step_index + 1;
    next.x_hat = model_.A() * state.x_hat + gain_ * theta;
    next.last_posterior = state.x_hat + P_inv_ * (model_.A().transpose() * lambda);
    next.last_disturbance = Q_inv_ * (model_.B().transpose() * lambda);
    next.last_theta = theta;
    next.last_xi = Eigen::VectorXd(0);
    return next;
  }

  FilterKind kind_;
  StateSpaceModel model_;
  WeightConfig weights_;
  LossParams loss_;
  std::optional<LinearConstraintSet> constraints_;
  FilterOptions options_;

  Eigen::MatrixXd P_inv_, Q_inv_, W_inv_;
  Eigen::MatrixXd CA_, CB_;
  Eigen::MatrixXd predictor_, gain_;
  Eigen::MatrixXd quad_;
  std::optional<Eigen::MatrixXd> constrained_quad_;
};

// Single-step entry points. Each builds the per-run matrices, so prefer a
// RecursiveFilter (or run()) for sequences.

inline FilterState step_eps_quadratic(const FilterState& state, const Eigen::VectorXd& y_next,
                                      const StateSpaceModel& model, const WeightConfig& weights,
                                      const LossParams& loss) {
  return RecursiveFilter(FilterKind::kEpsQuadratic, model, weights, loss).step(state, y_next);
}

inline FilterState step_eps_huber(const FilterState& state, const Eigen::VectorXd& y_next,
                                  const StateSpaceModel& model, const WeightConfig& weights,
                                  const LossParams& loss) {
  return RecursiveFilter(FilterKind::kEpsHuber, model, weights, loss).step(state, y_next);
}

inline FilterState step_constrained_eps(const FilterState& state, const Eigen::VectorXd& y_next,
                                        const StateSpaceModel& model,
                                        const WeightConfig& weights, const LossParams& loss,
                                        const LinearConstraintSet& constraints) {
  return RecursiveFilter(FilterKind::kConstrainedEps, model, weights, loss, constraints)
      .step(state, y_next);
}

inline FilterState step_constrained_huber(const FilterState& state, const Eigen::VectorXd& y_next,
                                          const StateSpaceModel& model,
                                          const WeightConfig& weights, const LossParams& loss,
                                          const LinearConstraintSet& constraints) {
  return RecursiveFilter(FilterKind::kConstrainedHuber, model, weights, loss, constraints)
      .step(state, y_next);
}

inline FilterState step_kalman(const FilterState& state, const Eigen::VectorXd& y_next,
                               const StateSpaceModel& model, const WeightConfig& weights) {
  return RecursiveFilter(FilterKind::kKalman, model, weights, LossParams{}).step(state, y_next);
}

enum class OnReject {
  kThrow,  ///< propagate StepRejected
  kHold,   ///< keep the previous estimate, record the status, continue
};

struct RunOptions {
  FilterOptions filter;
  OnReject on_reject = OnReject::kThrow;
};

struct Trajectory {
  /// One entry per measurement; states[k-1] holds x̂_k.
  std::vector<FilterState> states;
  std::vector<int> rejected_steps;

  [[nodiscard]] bool all_accepted() const noexcept { return rejected_steps.empty(); }
};

inline Trajectory run(FilterKind kind, const StateSpaceModel& model, const WeightConfig& weights,
                      const LossParams& loss, const std::optional<LinearConstraintSet>& constraints,
                      const Eigen::VectorXd& x0_bar,
                      const std::vector<Eigen::VectorXd>& measurements,
                      const RunOptions& options = {}) {
  detail::require_param(!measurements.empty(), "measurement sequence is empty");
  detail::require_dims(x0_bar.size() == model.n(), "x0_bar must have n entries");
  const RecursiveFilter filter(kind, model, weights, loss, constraints, options.filter);

  Trajectory out;
  out.states.reserve(measurements.size());
  FilterState state = FilterState::initial(x0_bar);
  for (const auto& y : measurements) {
    try {
      state = filter.step(state, y);
    } catch (const StepRejected& e) {
      if (options.on_reject == OnReject::kThrow) throw;
      out.rejected_steps.push_back(e.step());
      state.step_index = e.step();
      state.last_status = e.status();
      state.last_theta = Eigen::VectorXd::Constant(model.m(), std::numeric_limits<double>::quiet_NaN());
      state.last_xi = Eigen::VectorXd::Constant(filter.constraints_at(e.step()).p(),
                                                std::numeric_limits<double>::quiet_NaN());
    }
    out.states.push_back(state);
  }
  return out;
}

/// P for which P⁻¹ is the stationary filtered-error covariance of a Kalman
/// filter with noise covariances Q⁻¹ and R⁻¹. Obtained by iterating
///   S = A Π A' + B Q⁻¹B',  Π ← S - S C'(C S C' + R⁻¹)⁻¹ C S
/// from Π = B Q⁻¹B' + I. The filters keep P fixed; this is only a way to pick
/// one that matches the Kalman analogy.
inline Eigen::MatrixXd steady_state_weight(const StateSpaceModel& model,
                                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                           double tol = 1e-12, int max_iter = 100'000) {
  const Eigen::MatrixXd Q_inv = detail::spd_inverse(Q, "weights.Q");
  const Eigen::MatrixXd R_inv = detail::spd_inverse(R, "weights.R");
  const auto& A = model.A();
  const auto& C = model.C();
  const Eigen::MatrixXd BQB = model.B() * Q_inv * model.B().transpose();
  Eigen::MatrixXd Pi = BQB + Eigen::MatrixXd::Identity(model.n(), model.n());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd S = A * Pi * A.transpose() + BQB;
    const Eigen::MatrixXd innov = C * S * C.transpose() + R_inv;
    Eigen::MatrixXd next = S - S * C.transpose() * innov.llt().solve(C * S);
    next = 0.5 * (next + next.transpose());
    const double change = (next - Pi).cwiseAbs().maxCoeff();
    Pi = std::move(next);
    if (change <= tol * std::max(1.0, Pi.cwiseAbs().maxCoeff())) {
      return detail::spd_inverse(Pi, "stationary error covariance");
    }
  }
  throw ParameterError("steady-state weight iteration did not converge (is (A, C) detectable?)");
}

}  // namespace robust_filter
