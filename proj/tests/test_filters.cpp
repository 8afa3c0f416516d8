#include "robust_filter/filters.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "robust_filter/batch_smoother.hpp"

namespace robust_filter {
namespace {

using testing::random_matrix;
using testing::random_spd;
using testing::random_stable;
using testing::random_vector;

Eigen::MatrixXd mat1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }
Eigen::VectorXd vec1(double v) { return Eigen::VectorXd::Constant(1, v); }

StateSpaceModel scalar_model(double a = 1.0) { return {mat1(a), mat1(1.0), mat1(1.0)}; }

WeightConfig unit_weights() { return {mat1(1.0), mat1(1.0), mat1(1.0), vec1(1.0)}; }

LossParams scalar_loss(double eps, Cap kappa = Cap::infinite()) {
  return {vec1(eps), {kappa}, Eigen::VectorXd()};
}

LinearConstraintSet constant_set(Eigen::MatrixXd U, Eigen::MatrixXd V, Eigen::VectorXd a) {
  return {ConstraintBlock{std::move(U), std::move(V), std::move(a)}, {}};
}

const FilterState kOrigin = FilterState::initial(vec1(0.0));

TEST(Filters, ScalarDeadZoneAndShrinkage) {
  const auto model = scalar_model();
  const auto w = unit_weights();
  const auto loss = scalar_loss(1.0);
  RecursiveFilter f(FilterKind::kEpsQuadratic, model, w, loss);
  EXPECT_DOUBLE_EQ(f.innovation_matrix()(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(f.gain()(0, 0), 2.0);

  EXPECT_EQ(step_eps_quadratic(kOrigin, vec1(0.5), model, w, loss).x_hat(0), 0.0);
  const auto up = step_eps_quadratic(kOrigin, vec1(4.0), model, w, loss);
  EXPECT_NEAR(up.last_theta(0), 1.0, 1e-15);
  EXPECT_NEAR(up.x_hat(0), 2.0, 1e-14);
  EXPECT_NEAR(up.last_posterior(0), 1.0, 1e-14);
  EXPECT_NEAR(up.last_disturbance(0), 1.0, 1e-14);
  EXPECT_EQ(up.step_index, 1);
  EXPECT_NEAR(step_eps_quadratic(kOrigin, vec1(-4.0), model, w, loss).x_hat(0), -2.0, 1e-14);
}

TEST(Filters, HuberCapsOutlierImpact) {
  const auto model = scalar_model();
  const auto w = unit_weights();
  const auto out = step_eps_huber(kOrigin, vec1(100.0), model, w, scalar_loss(1.0, Cap::finite(3.0)));
  EXPECT_EQ(out.last_theta(0), 3.0);
  EXPECT_NEAR(out.x_hat(0), 6.0, 1e-14);
  EXPECT_EQ(step_eps_huber(kOrigin, vec1(-0.7), model, w, scalar_loss(1.0, Cap::finite(3.0))).x_hat(0),
            0.0);
}

TEST(Filters, KalmanScalarExamples) {
  const auto model = scalar_model();
  const auto w = unit_weights();
  EXPECT_NEAR(step_kalman(kOrigin, vec1(4.0), model, w).x_hat(0), 8.0 / 3.0, 1e-14);
  const FilterState at_two = FilterState::initial(vec1(2.0));
  EXPECT_EQ(step_kalman(at_two, vec1(2.0), scalar_model(1.0), w).x_hat(0), 2.0);
}

TEST(Filters, InfiniteCapHuberMatchesQuadraticWithDiagonalR) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const StateSpaceModel model(random_stable(3, rng), random_matrix(3, 2, rng),
                                random_matrix(2, 3, rng));
    Eigen::VectorXd r = (random_vector(2, rng).array().abs() + 0.5).matrix();
    WeightConfig w{random_spd(3, rng), random_spd(2, rng), r.asDiagonal().toDenseMatrix(), r};
    LossParams loss{(random_vector(2, rng).array().abs()).matrix(), all_infinite(2), {}};
    const FilterState s = FilterState::initial(random_vector(3, rng));
    const Eigen::VectorXd y = random_vector(2, rng, 5.0);
    const auto q = step_eps_quadratic(s, y, model, w, loss);
    const auto h = step_eps_huber(s, y, model, w, loss);
    EXPECT_EQ(q.x_hat, h.x_hat);

    const auto empty = constant_set(Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0));
    EXPECT_EQ(step_constrained_huber(s, y, model, w, loss, empty).x_hat, h.x_hat);
    const auto box = constant_set(random_matrix(1, 3, rng), random_matrix(1, 2, rng), vec1(0.1));
    EXPECT_LT((step_constrained_huber(s, y, model, w, loss, box).x_hat -
               step_constrained_eps(s, y, model, w, loss, box).x_hat)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(Filters, EmptyConstraintSetIsBitwiseUnconstrained) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const StateSpaceModel model(random_stable(2, rng), random_matrix(2, 2, rng),
                                random_matrix(2, 2, rng));
    WeightConfig w{random_spd(2, rng), random_spd(2, rng), random_spd(2, rng), {}};
    LossParams loss{(0.3 * random_vector(2, rng).array().abs()).matrix(), all_infinite(2), {}};
    const auto empty = constant_set(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0));
    const FilterState s = FilterState::initial(random_vector(2, rng));
    const Eigen::VectorXd y = random_vector(2, rng, 3.0);
    const auto plain = step_eps_quadratic(s, y, model, w, loss);
    const auto cons = step_constrained_eps(s, y, model, w, loss, empty);
    EXPECT_EQ(plain.x_hat, cons.x_hat);
    EXPECT_EQ(plain.last_theta, cons.last_theta);
    EXPECT_EQ(cons.last_xi.size(), 0);
  }
}

TEST(Filters, SlackConstraintHasZeroMultiplier) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const StateSpaceModel model(random_stable(2, rng), random_matrix(2, 1, rng),
                                random_matrix(1, 2, rng));
    WeightConfig w{random_spd(2, rng), random_spd(1, rng), random_spd(1, rng), {}};
    LossParams loss{vec1(0.2), all_infinite(1), {}};
    const auto loose = constant_set(random_matrix(2, 2, rng), random_matrix(2, 1, rng),
                                    Eigen::Vector2d(1e6, 1e6));
    const FilterState s = FilterState::initial(random_vector(2, rng));
    const Eigen::VectorXd y = random_vector(1, rng, 3.0);
    const auto cons = step_constrained_eps(s, y, model, w, loss, loose);
    EXPECT_TRUE(cons.last_xi.isZero(0.0));
    EXPECT_LT((cons.x_hat - step_eps_quadratic(s, y, model, w, loss).x_hat).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Filters, ScalarUpperBoundMatchesPrimalOracle) {
  const auto model = scalar_model();
  const auto w = unit_weights();
  const auto loss = scalar_loss(1.0);
  const auto cap = constant_set(mat1(1.0), mat1(0.0), vec1(0.0));
  const auto out = step_constrained_eps(kOrigin, vec1(4.0), model, w, loss, cap);
  EXPECT_LE(out.x_hat(0), 1e-8);
  EXPECT_NEAR(out.last_theta(0), 3.0, 1e-10);
  EXPECT_NEAR(out.last_xi(0), 3.0, 1e-10);

  BatchProblem pb{model, w, loss, {vec1(4.0)}, vec1(0.0),
                  BatchConstraints{{mat1(1.0)}, {mat1(0.0)}, vec1(0.0)}};
  const auto oracle = testing::primal_active_set(pb, true);
  EXPECT_NEAR(out.x_hat(0), oracle.x[1](0), 1e-9);
  EXPECT_NEAR(out.last_posterior(0), oracle.x[0](0), 1e-9);
  EXPECT_NEAR(out.last_disturbance(0), oracle.w[0](0), 1e-9);
}

TEST(Filters, ConstrainedMatchesPrimalOracleOnRandomInstances) {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const StateSpaceModel model(random_stable(2, rng), random_matrix(2, 2, rng),
                                random_matrix(1, 2, rng));
    WeightConfig w{random_spd(2, rng), random_spd(2, rng), random_spd(1, rng), {}};
    LossParams loss{vec1(0.3), all_infinite(1), {}};
    const Eigen::MatrixXd U = random_matrix(2, 2, rng);
    const Eigen::MatrixXd V = random_matrix(2, 2, rng);
    const Eigen::VectorXd a = random_vector(2, rng, 0.5);
    const Eigen::VectorXd x0 = random_vector(2, rng);
    const Eigen::VectorXd y = random_vector(1, rng, 4.0);
    const auto out = step_constrained_eps(FilterState::initial(x0), y, model, w, loss,
                                          constant_set(U, V, a));
    BatchProblem pb{model, w, loss, {y}, x0, BatchConstraints{{U}, {V}, a}};
    const auto oracle = testing::primal_active_set(pb, true);
    EXPECT_LT((out.x_hat - oracle.x[1]).cwiseAbs().maxCoeff(), 1e-7) << "trial " << trial;
    EXPECT_LT((out.last_disturbance - oracle.w[0]).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Filters, ConstraintSatisfiedByRecordedPrimal) {
  std::mt19937 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const StateSpaceModel model(random_stable(3, rng), random_matrix(3, 2, rng),
                                random_matrix(2, 3, rng));
    Eigen::VectorXd r = (random_vector(2, rng).array().abs() + 0.5).matrix();
    WeightConfig w{random_spd(3, rng), random_spd(2, rng), random_spd(2, rng), r};
    const bool huber = trial % 2 == 1;
    LossParams loss{(0.5 * random_vector(2, rng).array().abs()).matrix(),
                    huber ? finite_caps(Eigen::Vector2d(1.0, 2.0)) : all_infinite(2), {}};
    const Eigen::MatrixXd U = random_matrix(2, 3, rng);
    const Eigen::MatrixXd V = random_matrix(2, 2, rng);
    const Eigen::VectorXd a = random_vector(2, rng, 0.5);
    const FilterState s = FilterState::initial(random_vector(3, rng));
    const Eigen::VectorXd y = random_vector(2, rng, 10.0);
    const auto set = constant_set(U, V, a);
    const auto out = huber ? step_constrained_huber(s, y, model, w, loss, set)
                           : step_constrained_eps(s, y, model, w, loss, set);
    EXPECT_LE((U * out.x_hat + V * out.last_disturbance - a).maxCoeff(), 1e-6);
    // x̂_{k+1} = A x̂̂_k + B ŵ_k
    EXPECT_LT((out.x_hat - model.A() * out.last_posterior - model.B() * out.last_disturbance)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-9);
  }
}

TEST(Filters, KalmanReductionAtZeroEpsilon) {
  std::mt19937 rng(51);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + trial % 4, l = 1 + (trial / 4) % 4, m = 1 + (trial / 16) % 4;
    const StateSpaceModel model(random_stable(n, rng), random_matrix(n, l, rng),
                                random_matrix(m, n, rng));
    WeightConfig w{random_spd(n, rng), random_spd(l, rng), random_spd(m, rng), {}};
    LossParams loss{Eigen::VectorXd::Zero(m), all_infinite(m), {}};
    const FilterState s = FilterState::initial(random_vector(n, rng));
    const Eigen::VectorXd y = random_vector(m, rng, 3.0);
    const auto eps = step_eps_quadratic(s, y, model, w, loss);
    const auto kal = step_kalman(s, y, model, w);
    EXPECT_LT((eps.x_hat - kal.x_hat).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
  }
}

TEST(Filters, DeadZoneReturnsPrediction) {
  std::mt19937 rng(61);
  std::uniform_real_distribution<double> frac(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const StateSpaceModel model(random_stable(3, rng), random_matrix(3, 2, rng),
                                random_matrix(2, 3, rng));
    Eigen::VectorXd r = (random_vector(2, rng).array().abs() + 0.5).matrix();
    WeightConfig w{random_spd(3, rng), random_spd(2, rng), random_spd(2, rng), r};
    const Eigen::Vector2d eps(0.5, 0.8);
    const FilterState s = FilterState::initial(random_vector(3, rng));
    Eigen::VectorXd y = model.C() * model.A() * s.x_hat;
    y(0) += eps(0) * frac(rng);
    y(1) += eps(1) * frac(rng);
    const Eigen::VectorXd prior = model.A() * s.x_hat;
    EXPECT_EQ(step_eps_quadratic(s, y, model, w, {eps, all_infinite(2), {}}).x_hat, prior);
    EXPECT_EQ(step_eps_huber(s, y, model, w, {eps, finite_caps(Eigen::Vector2d(1, 1)), {}}).x_hat,
              prior);
    // A constraint that is slack at the prediction keeps the dead zone.
    const auto set = constant_set(Eigen::MatrixXd::Identity(3, 3), Eigen::MatrixXd::Zero(3, 2),
                                  prior.cwiseAbs() + Eigen::VectorXd::Ones(3));
    EXPECT_EQ(step_constrained_eps(s, y, model, w, {eps, all_infinite(2), {}}, set).x_hat, prior);
  }
}

TEST(Filters, BoundedOutlierInfluence) {
  std::mt19937 rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const StateSpaceModel model(random_stable(3, rng), random_matrix(3, 2, rng),
                                random_matrix(2, 3, rng));
    Eigen::VectorXd r = (random_vector(2, rng).array().abs() + 0.5).matrix();
    WeightConfig w{random_spd(3, rng), random_spd(2, rng), Eigen::MatrixXd(), r};
    const Eigen::Vector2d kappa(0.7, 1.3);
    LossParams loss{Eigen::Vector2d(0.1, 0.1), finite_caps(kappa), {}};
    const RecursiveFilter f(FilterKind::kEpsHuber, model, w, loss);
    const FilterState s = FilterState::initial(random_vector(3, rng));
    // Diagonal directions so every channel's innovation grows with the sweep.
    const Eigen::Vector2d dir(trial % 2 ? 1.0 : -1.0, trial % 3 ? 1.0 : -1.0);
    Eigen::VectorXd first;
    for (double mag : {1e2, 1e4, 1e6}) {
      const auto out = f.step(s, mag * dir);
      const Eigen::VectorXd inc = out.x_hat - model.A() * s.x_hat;
      EXPECT_EQ(out.last_theta.cwiseAbs(), Eigen::VectorXd(kappa));
      EXPECT_LE(inc.norm(), f.gain().norm() * kappa.norm() + 1e-9);
      if (first.size() == 0) first = inc;
      else EXPECT_LT((inc - first).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Filters, LargeCapReproducesQuadratic) {
  std::mt19937 rng(81);
  for (int trial = 0; trial < 100; ++trial) {
    const StateSpaceModel model(random_stable(2, rng), random_matrix(2, 2, rng),
                                random_matrix(2, 2, rng));
    Eigen::VectorXd r = (random_vector(2, rng).array().abs() + 0.5).matrix();
    WeightConfig w{random_spd(2, rng), random_spd(2, rng), r.asDiagonal().toDenseMatrix(), r};
    const Eigen::Vector2d eps(0.2, 0.4);
    const FilterState s = FilterState::initial(random_vector(2, rng));
    const Eigen::VectorXd y = random_vector(2, rng, 4.0);
    const auto q = step_eps_quadratic(s, y, model, w, {eps, all_infinite(2), {}});
    const Eigen::VectorXd cap = q.last_theta.cwiseAbs() * 1.01 + Eigen::VectorXd::Constant(2, 1e-6);
    const auto h = step_eps_huber(s, y, model, w, {eps, finite_caps(cap), {}});
    EXPECT_LT((q.x_hat - h.x_hat).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Filters, TimeVaryingConstraints) {
  const auto model = scalar_model();
  const auto w = unit_weights();
  LinearConstraintSet set;
  set.override_at = [](int step) {
    return ConstraintBlock{mat1(1.0), mat1(0.0), vec1(step == 2 ? 0.5 : 1e6)};
  };
  const auto traj = run(FilterKind::kConstrainedEps, model, w, scalar_loss(0.0), set, vec1(0.0),
                        {vec1(3.0), vec1(9.0), vec1(9.0)});
  ASSERT_TRUE(traj.all_accepted());
  EXPECT_EQ(traj.states[0].last_xi(0), 0.0);
  EXPECT_NEAR(traj.states[1].x_hat(0), 0.5, 1e-9);
  EXPECT_GT(traj.states[1].last_xi(0), 0.0);
  EXPECT_GT(traj.states[2].x_hat(0), 0.5);
}

// Three-case scalar formula, written out independently of the library.
double scalar_reference_step(double x, double y, double a, double p, double q, double r,
                             double eps) {
  const double pred = a * a / p + 1.0 / q;
  const double curv = pred + 1.0 / r;
  const double innov = y - a * x;
  double theta = 0.0;
  if (innov > eps) theta = (innov - eps) / curv;
  else if (innov < -eps) theta = (innov + eps) / curv;
  return a * x + pred * theta;
}

TEST(FilterRun, FiftyStepScalarReference) {
  std::mt19937 rng(91);
  std::uniform_real_distribution<double> u(0.2, 2.0), ys(-5.0, 5.0), as(-0.99, 0.99);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = as(rng), p = u(rng), q = u(rng), r = u(rng), eps = u(rng) - 0.2;
    std::vector<Eigen::VectorXd> ys_seq;
    for (int k = 0; k < 50; ++k) ys_seq.push_back(vec1(ys(rng)));
    const auto traj = run(FilterKind::kEpsQuadratic, StateSpaceModel(mat1(a), mat1(1), mat1(1)),
                          {mat1(p), mat1(q), mat1(r), {}}, scalar_loss(eps), std::nullopt,
                          vec1(0.3), ys_seq);
    double x = 0.3;
    for (int k = 0; k < 50; ++k) {
      x = scalar_reference_step(x, ys_seq[k](0), a, p, q, r, eps);
      EXPECT_NEAR(traj.states[k].x_hat(0), x, 1e-10);
    }
  }
}

TEST(FilterRun, InsideTubeFollowsPrediction) {
  const auto model = scalar_model(0.5);
  std::vector<Eigen::VectorXd> ys(10, vec1(0.3));
  const auto traj = run(FilterKind::kEpsQuadratic, model, unit_weights(), scalar_loss(1.0),
                        std::nullopt, vec1(0.0), ys);
  for (const auto& s : traj.states) EXPECT_EQ(s.x_hat(0), 0.0);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(traj.states[k].step_index, k + 1);
}

TEST(FilterRun, SingleMeasurementEqualsStep) {
  const auto traj = run(FilterKind::kEpsHuber, scalar_model(), unit_weights(),
                        scalar_loss(1.0, Cap::finite(3.0)), std::nullopt, vec1(0.0), {vec1(100.0)});
  ASSERT_EQ(traj.states.size(), 1u);
  EXPECT_EQ(traj.states[0].x_hat,
            step_eps_huber(kOrigin, vec1(100.0), scalar_model(), unit_weights(),
                           scalar_loss(1.0, Cap::finite(3.0)))
                .x_hat);
  EXPECT_THROW((void)run(FilterKind::kKalman, scalar_model(), unit_weights(), {}, std::nullopt,
                         vec1(0.0), {}),
               ParameterError);
}

TEST(FilterRun, InfeasibleConstraintsAreRejected) {
  const auto model = scalar_model();
  // x ≤ -1 and x ≥ 1 together.
  Eigen::MatrixXd U(2, 1);
  U << 1, -1;
  const auto bad = constant_set(U, Eigen::MatrixXd::Zero(2, 1), Eigen::Vector2d(-1, -1));
  try {
    (void)step_constrained_eps(kOrigin, vec1(0.0), model, unit_weights(), scalar_loss(0.1), bad);
    FAIL() << "expected rejection";
  } catch (const StepRejected& e) {
    EXPECT_EQ(e.step(), 1);
    EXPECT_EQ(e.status(), SolveStatus::kUnbounded);
    EXPECT_NE(std::string(e.what()).find("unbounded"), std::string::npos);
  }

  RunOptions hold;
  hold.on_reject = OnReject::kHold;
  const auto traj = run(FilterKind::kConstrainedEps, model, unit_weights(), scalar_loss(0.1), bad,
                        vec1(0.25), {vec1(1.0), vec1(2.0)}, hold);
  EXPECT_EQ(traj.rejected_steps, (std::vector<int>{1, 2}));
  EXPECT_EQ(traj.states[1].x_hat(0), 0.25);
  EXPECT_EQ(traj.states[1].step_index, 2);
  EXPECT_TRUE(std::isnan(traj.states[1].last_theta(0)));
  EXPECT_THROW((void)run(FilterKind::kConstrainedEps, model, unit_weights(), scalar_loss(0.1), bad,
                         vec1(0.25), {vec1(1.0)}),
               StepRejected);
}

TEST(Filters, ValidatesInputs) {
  const auto model = scalar_model();
  const auto w = unit_weights();
  EXPECT_THROW((void)step_eps_quadratic(kOrigin, Eigen::Vector2d(1, 1), model, w, scalar_loss(1.0)),
               DimensionError);
  EXPECT_THROW((void)step_eps_quadratic(kOrigin, vec1(1.0), model, w,
                                        scalar_loss(1.0, Cap::finite(2.0))),
               ParameterError);
  EXPECT_THROW(RecursiveFilter(FilterKind::kConstrainedEps, model, w, scalar_loss(1.0)),
               ParameterError);
  WeightConfig indefinite = w;
  indefinite.P = mat1(-1.0);
  EXPECT_THROW((void)step_kalman(kOrigin, vec1(1.0), model, indefinite), ParameterError);
  WeightConfig no_r = w;
  no_r.r = Eigen::VectorXd();
  EXPECT_THROW((void)step_eps_huber(kOrigin, vec1(1.0), model, no_r, scalar_loss(1.0)),
               DimensionError);
  EXPECT_EQ(parse_filter_kind("constrained_huber"), FilterKind::kConstrainedHuber);
  EXPECT_THROW((void)parse_filter_kind("ukf"), ParameterError);
}

TEST(SteadyState, ScalarGoldenRatio) {
  const Eigen::MatrixXd P = steady_state_weight(scalar_model(), mat1(1.0), mat1(1.0));
  EXPECT_NEAR(P(0, 0), (1.0 + std::sqrt(5.0)) / 2.0, 1e-10);
}

TEST(SteadyState, GainMatchesTextbookKalmanFilter) {
  std::mt19937 rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const StateSpaceModel model(random_stable(3, rng), random_matrix(3, 2, rng),
                                random_matrix(2, 3, rng));
    const Eigen::MatrixXd Q = random_spd(2, rng), R = random_spd(2, rng);
    const Eigen::MatrixXd P = steady_state_weight(model, Q, R);
    const RecursiveFilter f(FilterKind::kKalman, model, {P, Q, R, {}}, {});
    // Covariance recursion with noise covariances Q⁻¹, R⁻¹ run to convergence.
    const Eigen::MatrixXd W = model.B() * Q.inverse() * model.B().transpose();
    Eigen::MatrixXd Sigma = Eigen::MatrixXd::Identity(3, 3);
    Eigen::MatrixXd K;
    for (int it = 0; it < 5000; ++it) {
      const Eigen::MatrixXd S = model.A() * Sigma * model.A().transpose() + W;
      K = S * model.C().transpose() *
          (model.C() * S * model.C().transpose() + R.inverse()).inverse();
      Sigma = (Eigen::MatrixXd::Identity(3, 3) - K * model.C()) * S;
    }
    const Eigen::MatrixXd ours = f.gain() * f.innovation_matrix().inverse();
    EXPECT_LT((ours - K).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
  }
}

}  // namespace
}  // namespace robust_filter
