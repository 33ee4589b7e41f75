#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "diffcbf/errors.hpp"
#include "diffcbf/safety_filter.hpp"
#include "oracles.hpp"

using namespace diffcbf;

namespace {

CbfConstraintSet rows(const MatrixXd& A, const VectorXd& b) {
  CbfConstraintSet cs;
  cs.A = A;
  cs.b = b;
  cs.rows.resize(A.rows());
  return cs;
}

QpProblem random_qp(std::mt19937_64& rng, int m, int r) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd L(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) L(i, j) = g(rng);
  QpProblem qp;
  qp.P = L * L.transpose() + 0.1 * MatrixXd::Identity(m, m);
  qp.q = VectorXd::NullaryExpr(m, [&] { return g(rng); });
  qp.A = MatrixXd::NullaryExpr(r, m, [&] { return g(rng); });
  qp.b = VectorXd::NullaryExpr(r, [&] { return g(rng); });
  return qp;
}

KinematicChain planar_three_link() {
  std::vector<Joint> joints(3);
  joints[1].origin = Pose::spatial({0.5, 0, 0}, {1, 0, 0, 0});
  joints[2].origin = Pose::spatial({0.4, 0, 0}, {1, 0, 0, 0});
  joints[2].axis = Eigen::Vector3d::UnitY();
  return KinematicChain(joints);
}

KinematicChain seven_link() {
  std::vector<Joint> joints(7);
  const Eigen::Vector3d axes[7] = {{0, 0, 1}, {0, 1, 0}, {0, 0, 1}, {0, 1, 0},
                                   {0, 0, 1}, {0, 1, 0}, {0, 0, 1}};
  for (int i = 0; i < 7; ++i) {
    joints[i].axis = axes[i];
    if (i > 0) joints[i].origin = Pose::spatial({0, 0, 0.2}, {1, 0, 0, 0});
  }
  return KinematicChain(joints);
}

BodyAttachment tip(int link, double z) {
  BodyAttachment b;
  b.link = link;
  b.local_pose = Pose::spatial({0.1, 0, z}, {1, 0, 0, 0});
  return b;
}

}  // namespace

TEST(Qp, Unconstrained) {
  QpProblem qp;
  qp.P = MatrixXd::Identity(2, 2);
  qp.q = Eigen::Vector2d(-1, -2);
  qp.A.resize(0, 2);
  qp.b.resize(0);
  const auto r = solve_qp(qp);
  ASSERT_TRUE(r.optimal());
  EXPECT_LT((r.u - Eigen::Vector2d(1, 2)).norm(), 1e-12);
}

TEST(Qp, HalfspaceProjection) {
  const Eigen::Vector3d u_ref(1, -2, 0.5), a(0.3, 1.0, -0.4);
  const double b = 2.0;
  const VectorXd u = filter_control(u_ref, rows(a.transpose(), VectorXd::Constant(1, b)));
  const Eigen::Vector3d expect = u_ref + a * (b - a.dot(u_ref)) / a.squaredNorm();
  EXPECT_LT((u - expect).norm(), 1e-10);
}

TEST(Qp, FeasibleReferenceUnchanged) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const VectorXd u_ref = VectorXd::NullaryExpr(4, [&] { return g(rng); });
    MatrixXd A = MatrixXd::NullaryExpr(5, 4, [&] { return g(rng); });
    const VectorXd b = A * u_ref - VectorXd::Constant(5, 0.1);
    EXPECT_LE((filter_control(u_ref, rows(A, b)) - u_ref).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Qp, OpposedRowsInfeasible) {
  MatrixXd A(2, 2);
  A << 1, 1, -1, -1;
  const VectorXd b = Eigen::Vector2d(1, 1);
  try {
    filter_control(Eigen::Vector2d(0, 0), rows(A, b));
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError& e) {
    ASSERT_EQ(e.margins().size(), 2u);
    EXPECT_LT(std::min(e.margins()[0], e.margins()[1]), 0.0);
  }
  QpProblem qp;
  qp.P = MatrixXd::Identity(2, 2);
  qp.q = VectorXd::Zero(2);
  qp.A = A;
  qp.b = b;
  const auto r = solve_qp(qp);
  EXPECT_EQ(r.status, QpStatus::Infeasible);
  ASSERT_EQ(r.certificate.size(), 2);
  EXPECT_GE(r.certificate.minCoeff(), 0.0);
  EXPECT_LT((A.transpose() * r.certificate).norm(), 1e-8);
  EXPECT_GT(b.dot(r.certificate), 0.0);
}

TEST(Qp, MatchesEnumerationOracle) {
  std::mt19937_64 rng(100);
  int compared = 0;
  for (int seed = 0; seed < 200; ++seed) {
    const int m = 1 + seed % 4;
    const int r = 1 + (seed / 4) % 6;
    const QpProblem qp = random_qp(rng, m, r);
    const auto ref = oracle::enumerate_qp(qp.P, qp.q, qp.A, qp.b);
    const auto got = solve_qp(qp);
    if (!ref.feasible) {
      EXPECT_EQ(got.status, QpStatus::Infeasible) << "seed " << seed;
      continue;
    }
    ASSERT_TRUE(got.optimal()) << "seed " << seed << " " << to_string(got.status);
    // Scaled by the objective: some draws have |f*| ~ 1e5, where both
    // solutions agree only to rounding.
    EXPECT_LE(std::abs(got.objective - ref.objective) / std::max(1.0, std::abs(ref.objective)), 1e-7)
        << "seed " << seed;
    ++compared;
  }
  EXPECT_GT(compared, 100);
}

TEST(Qp, KktAndComplementarity) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const QpProblem qp = random_qp(rng, 4, 6);
    const auto r = solve_qp(qp);
    if (!r.optimal()) continue;
    EXPECT_LE(r.kkt_residual, 1e-8);
    EXPECT_GE(r.margins.minCoeff(), -1e-8);
    for (int k : r.active_set) EXPECT_LE(std::abs(r.margins[k]), 1e-8);
    EXPECT_GE(r.multipliers.minCoeff(), -1e-10);
  }
}

TEST(Qp, BoxBounds) {
  QpProblem qp;
  qp.P = MatrixXd::Identity(2, 2);
  qp.q = Eigen::Vector2d(-3, 3);
  qp.A.resize(0, 2);
  qp.b.resize(0);
  qp.lower = Eigen::Vector2d(-1, -1);
  qp.upper = Eigen::Vector2d(1, 1);
  const auto r = solve_qp(qp);
  ASSERT_TRUE(r.optimal());
  EXPECT_LT((r.u - Eigen::Vector2d(1, -1)).norm(), 1e-12);
}

TEST(Qp, RejectsIndefiniteP) {
  QpProblem qp;
  qp.P = Eigen::Vector2d(1, -1).asDiagonal();
  qp.q = VectorXd::Zero(2);
  qp.A.resize(0, 2);
  qp.b.resize(0);
  EXPECT_THROW(solve_qp(qp), ValidationError);
}

TEST(Filter, VariationalInequality) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const MatrixXd A = MatrixXd::NullaryExpr(4, 3, [&] { return g(rng); });
    const VectorXd b = VectorXd::NullaryExpr(4, [&] { return g(rng); });
    const VectorXd u_ref = VectorXd::NullaryExpr(3, [&] { return 2 * g(rng); });
    VectorXd u_safe;
    try {
      u_safe = filter_control(u_ref, rows(A, b));
    } catch (const InfeasibleError&) {
      continue;
    }
    int tested = 0;
    for (int s = 0; s < 2000 && tested < 50; ++s) {
      const VectorXd u = VectorXd::NullaryExpr(3, [&] { return 3 * g(rng); });
      if ((A * u - b).minCoeff() < 0) continue;
      ++tested;
      EXPECT_LE((u_safe - u_ref).dot(u_safe - u), 1e-8);
    }
  }
}

TEST(ResolvedRate, AtTargetGivesZero) {
  const auto chain = seven_link();
  const VectorXd theta = VectorXd::Constant(7, 0.3);
  const BodyAttachment ee = tip(6, 0.1);
  const Eigen::Vector3d p = chain.frame_pose(theta, ee.link, ee.local_pose).position();
  ArmControllerConfig cfg;
  cfg.epsilon = 0.0;
  const VectorXd u = resolved_rate_qp(chain, theta, ee, p, Eigen::Vector3d::Zero(), cfg, rows(MatrixXd(0, 7), VectorXd(0)));
  EXPECT_LT(u.norm(), 1e-8);
}

TEST(ResolvedRate, NullspaceLeavesTaskVelocity) {
  const auto chain = seven_link();
  const VectorXd theta = (VectorXd(7) << 0.1, 0.5, -0.2, 0.9, 0.3, -0.4, 0.2).finished();
  const BodyAttachment ee = tip(6, 0.1);
  const Eigen::Vector3d p_des(0.2, 0.1, 1.0);
  const auto none = rows(MatrixXd(0, 7), VectorXd(0));
  ArmControllerConfig c0, c1;
  c0.epsilon = 0.0;
  c1.epsilon = 0.5;
  c0.theta_nominal = c1.theta_nominal = VectorXd::Zero(7);
  const VectorXd u0 = resolved_rate_qp(chain, theta, ee, p_des, Eigen::Vector3d::Zero(), c0, none);
  const VectorXd u1 = resolved_rate_qp(chain, theta, ee, p_des, Eigen::Vector3d::Zero(), c1, none);
  const MatrixXd J = chain.geometric_jacobian(theta, ee.link, ee.local_pose).topRows(3);
  EXPECT_LT((J * u0 - J * u1).norm(), 1e-6);
  EXPECT_GT((u0 - u1).norm(), 1e-3);
  const Eigen::Vector3d v = c0.kp * (p_des - chain.frame_pose(theta, ee.link, ee.local_pose).position());
  EXPECT_LT((J * u0 - v).norm(), 1e-6);
}

TEST(ResolvedRate, SquareJacobianIgnoresCentering) {
  const auto chain = planar_three_link();
  const VectorXd theta = (VectorXd(3) << 0.3, 0.8, -0.6).finished();
  BodyAttachment ee;
  ee.link = 2;
  ee.local_pose = Pose::spatial({0.3, 0, 0.05}, {1, 0, 0, 0});
  const MatrixXd J = chain.geometric_jacobian(theta, ee.link, ee.local_pose).topRows(3);
  ASSERT_GT(Eigen::JacobiSVD<MatrixXd>(J).singularValues().minCoeff(), 1e-3);
  const Eigen::Vector3d p_des(0.5, 0.4, 0.1);
  const auto none = rows(MatrixXd(0, 3), VectorXd(0));
  ArmControllerConfig c0, c1;
  c0.epsilon = 0.0;
  c1.epsilon = 5.0;
  c1.theta_nominal = VectorXd::Constant(3, 1.0);
  const VectorXd u0 = resolved_rate_qp(chain, theta, ee, p_des, Eigen::Vector3d::Zero(), c0, none);
  const VectorXd u1 = resolved_rate_qp(chain, theta, ee, p_des, Eigen::Vector3d::Zero(), c1, none);
  EXPECT_LT((u0 - u1).norm(), 1e-6);
}

TEST(Unicycle, PerformanceExamples) {
  const UnicycleGains gains;
  const auto u = unicycle_performance({0, 0, 0}, {5, 3}, gains);
  EXPECT_NEAR(u[0], 0.5 * std::sqrt(34.0), 1e-12);
  EXPECT_NEAR(u[1], 2.0 * std::atan2(3, 5), 1e-12);
  EXPECT_NEAR(unicycle_performance({5, 3, 1.0}, {5, 3}, gains)[0], 0.0, 1e-15);
  EXPECT_NEAR(unicycle_performance({0, 0, 0}, {-1, 0}, gains)[1], 2.0 * M_PI, 1e-12);
  EXPECT_NEAR(wrap_angle(-M_PI), M_PI, 1e-15);
  EXPECT_NEAR(wrap_angle(3 * M_PI / 2), -M_PI / 2, 1e-15);
}
