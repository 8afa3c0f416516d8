#pragma once

// Linear system x_{k+1} = A x_k + B w_k, y_k = C x_k + v_k, the weighting
// matrices of the estimation objective, and per-step linear inequality
// constraints U x_{k+1} + V w_k <= a.

#include <algorithm>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "robust_filter/errors.hpp"

namespace robust_filter {

class StateSpaceModel {
 public:
  StateSpaceModel(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C)
      : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)) {
    detail::require_dims(A_.rows() == A_.cols() && A_.rows() > 0, "A must be square and nonempty");
    detail::require_dims(B_.rows() == A_.rows() && B_.cols() > 0, "B must be n x l with l > 0");
    detail::require_dims(C_.cols() == A_.rows() && C_.rows() > 0, "C must be m x n with m > 0");
    detail::require_param(A_.allFinite() && B_.allFinite() && C_.allFinite(),
                          "model matrices must be finite");
  }

  [[nodiscard]] Eigen::Index n() const noexcept { return A_.rows(); }
  [[nodiscard]] Eigen::Index l() const noexcept { return B_.cols(); }
  [[nodiscard]] Eigen::Index m() const noexcept { return C_.rows(); }
  [[nodiscard]] const Eigen::MatrixXd& A() const noexcept { return A_; }
  [[nodiscard]] const Eigen::MatrixXd& B() const noexcept { return B_; }
  [[nodiscard]] const Eigen::MatrixXd& C() const noexcept { return C_; }

 private:
  Eigen::MatrixXd A_;
  Eigen::MatrixXd B_;
  Eigen::MatrixXd C_;
};

namespace detail {

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& M, const std::string& name) {
  require_param(M.rows() == M.cols(), name + " must be square");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  require_param((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
                name + " must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (M + M.transpose()));
  require_param(llt.info() == Eigen::Success, name + " must be positive definite");
  if (M.isDiagonal(0.0)) return Eigen::MatrixXd(M.diagonal().cwiseInverse().asDiagonal());
  return llt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
}

}  // namespace detail

/// Weights on initial-estimate error (P), disturbances (Q) and measurement
/// residuals (R for the ε-quadratic variants, diag(r) for the Huber ones).
/// Their inverses play the role of covariances in the Kalman analogy.
struct WeightConfig {
  Eigen::MatrixXd P;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::VectorXd r;

  void validate(const StateSpaceModel& model, bool need_R, bool need_r) const {
    detail::require_dims(P.rows() == model.n() && P.cols() == model.n(), "weights.P must be n x n");
    detail::require_dims(Q.rows() == model.l() && Q.cols() == model.l(), "weights.Q must be l x l");
    if (need_R)
      detail::require_dims(R.rows() == model.m() && R.cols() == model.m(),
                           "weights.R must be m x m");
    if (need_r) {
      detail::require_dims(r.size() == model.m(), "weights.r must have m entries");
      detail::require_param((r.array() > 0.0).all() && r.allFinite(),
                            "weights.r must be positive");
    }
  }
};

/// Constraint rows for one step: U x_{k+1} + V w_k <= a.
struct ConstraintBlock {
  Eigen::MatrixXd U;
  Eigen::MatrixXd V;
  Eigen::VectorXd a;

  [[nodiscard]] Eigen::Index p() const noexcept { return a.size(); }

  void validate(Eigen::Index n, Eigen::Index l) const {
    detail::require_dims(U.rows() == a.size() && V.rows() == a.size(),
                         "constraint U, V, a must have the same row count");
    detail::require_dims(U.cols() == n, "constraint U must have n columns");
    detail::require_dims(V.cols() == l, "constraint V must have l columns");
    detail::require_param(U.allFinite() && V.allFinite() && a.allFinite(),
                          "constraint data must be finite");
  }

  static ConstraintBlock empty(Eigen::Index n, Eigen::Index l) {
    return {Eigen::MatrixXd(0, n), Eigen::MatrixXd(0, l), Eigen::VectorXd(0)};
  }
};

/// Constant constraint rows, optionally replaced per step by `override_at`
/// (called with the 1-based index of the step being estimated).
struct LinearConstraintSet {
  ConstraintBlock constant;
  std::function<ConstraintBlock(int step)> override_at;

  [[nodiscard]] bool time_varying() const noexcept { return static_cast<bool>(override_at); }

  [[nodiscard]] ConstraintBlock at(int step) const {
    return override_at ? override_at(step) : constant;
  }
};

}  // namespace robust_filter
