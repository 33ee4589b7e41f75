#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "diffcbf/socp.hpp"

using namespace diffcbf;

namespace {

ConeLayout layout(std::initializer_list<ConeLayout::Block> blocks) {
  ConeLayout k;
  k.blocks = blocks;
  return k;
}

VectorXd interior_point(const ConeLayout& k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd x(k.size());
  int off = 0;
  for (const auto& b : k.blocks) {
    if (b.kind == ConeKind::Orthant) {
      for (int i = 0; i < b.size; ++i) x[off + i] = 0.1 + std::abs(u(rng));
    } else {
      for (int i = 1; i < b.size; ++i) x[off + i] = u(rng);
      x[off] = x.segment(off + 1, b.size - 1).norm() + 0.1 + std::abs(u(rng));
    }
    off += b.size;
  }
  return x;
}

}  // namespace

TEST(ConeOps, LayoutDegree) {
  const auto k = layout({{ConeKind::Orthant, 3}, {ConeKind::SecondOrder, 4}});
  EXPECT_EQ(k.size(), 7);
  EXPECT_EQ(k.degree(), 4);
}

TEST(ConeOps, JordanProductAndDivision) {
  const auto k = layout({{ConeKind::Orthant, 2}, {ConeKind::SecondOrder, 3}});
  std::mt19937_64 rng(1);
  const VectorXd u = interior_point(k, rng), v = interior_point(k, rng);
  const VectorXd w = cone_ops::jordan_product(k, u, v);
  // Orthant: elementwise. SOC: (u'v, u0 v1 + v0 u1).
  EXPECT_NEAR(w[0], u[0] * v[0], 1e-15);
  EXPECT_NEAR(w[2], u.segment(2, 3).dot(v.segment(2, 3)), 1e-14);
  EXPECT_NEAR(w[3], u[2] * v[3] + v[2] * u[3], 1e-14);
  EXPECT_LT((cone_ops::jordan_divide(k, u, w) - v).norm(), 1e-12);
}

TEST(ConeOps, MinEigenvalueAndMaxStep) {
  const auto k = layout({{ConeKind::Orthant, 1}, {ConeKind::SecondOrder, 3}});
  VectorXd x(4);
  x << 2.0, 3.0, 1.0, 0.0;
  EXPECT_NEAR(cone_ops::min_eigenvalue(k, x), 2.0, 1e-15);
  VectorXd dx(4);
  dx << 0.0, -1.0, 0.0, 0.0;  // SOC eigenvalue 3 - t - 1 hits zero at t = 2
  EXPECT_NEAR(cone_ops::max_step(k, x, dx), 2.0, 1e-12);
}

TEST(ConeOps, NtScalingMapsDualToPrimal) {
  const auto k = layout({{ConeKind::Orthant, 3}, {ConeKind::SecondOrder, 4}, {ConeKind::SecondOrder, 3}});
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const VectorXd s = interior_point(k, rng), z = interior_point(k, rng);
    MatrixXd w, w_inv;
    cone_ops::nt_scaling(k, s, z, w, w_inv);
    EXPECT_LT((w * z - w_inv * s).norm(), 1e-12 * (1 + s.norm()));
    EXPECT_LT((w * w_inv - MatrixXd::Identity(k.size(), k.size())).norm(), 1e-12);
    EXPECT_LT((w - w.transpose()).norm(), 1e-14);
  }
}

TEST(Socp, LinearProgram) {
  // min x + y  s.t. x >= 1, y >= 2, x + y >= 4
  MatrixXd G(3, 2);
  G << -1, 0, 0, -1, -1, -1;
  VectorXd h(3);
  h << -1, -2, -4;
  VectorXd c(2);
  c << 1, 1;
  const auto r = solve_socp(G, h, c, layout({{ConeKind::Orthant, 3}}));
  ASSERT_EQ(r.status, SocpStatus::Optimal);
  EXPECT_NEAR(c.dot(r.x), 4.0, 1e-8);
  EXPECT_NEAR(-h.dot(r.z), 4.0, 1e-8);  // strong duality
  EXPECT_LT((G.transpose() * r.z + c).norm(), 1e-8);
}

TEST(Socp, SecondOrderCone) {
  // max x + y on the unit disk.
  MatrixXd G(3, 2);
  G << 0, 0, -1, 0, 0, -1;
  VectorXd h(3);
  h << 1, 0, 0;
  VectorXd c(2);
  c << -1, -1;
  const auto r = solve_socp(G, h, c, layout({{ConeKind::SecondOrder, 3}}));
  ASSERT_EQ(r.status, SocpStatus::Optimal);
  EXPECT_NEAR(r.x[0], 1 / std::sqrt(2.0), 1e-8);
  EXPECT_NEAR(r.x[1], 1 / std::sqrt(2.0), 1e-8);
}

TEST(Socp, WarmStartFromOptimumConvergesQuickly) {
  const auto prob = to_cone_program(ShapeSpec::sphere(1.0), Pose::identity(3), ShapeSpec::sphere(0.5),
                                    Pose::spatial(Eigen::Vector3d(3, 0, 0), Quat(1, 0, 0, 0)));
  const auto k = ConeLayout::from_problem(prob);
  const auto cold = solve_socp(prob.stacked_G(), prob.stacked_h(), prob.c, k);
  ASSERT_EQ(cold.status, SocpStatus::Optimal);
  EXPECT_NEAR(cold.x[prob.alpha_index], 2.0, 1e-8);
  SocpStart start{cold.x, cold.s, cold.z};
  const auto warm = solve_socp(prob.stacked_G(), prob.stacked_h(), prob.c, k, {}, &start);
  ASSERT_EQ(warm.status, SocpStatus::Optimal);
  EXPECT_LE(warm.iterations, cold.iterations);
  EXPECT_NEAR(warm.x[prob.alpha_index], 2.0, 1e-8);
}
