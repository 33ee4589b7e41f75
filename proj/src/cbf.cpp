#include "diffcbf/cbf.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <limits>

#include "diffcbf/errors.hpp"

namespace diffcbf {

void CbfConfig::validate() const {
  if (!(beta >= 1.0)) throw ValidationError("cbf beta must be >= 1");
  if (!(gamma > 0.0)) throw ValidationError("cbf gamma must be > 0");
}

CbfValue cbf_pair(const Body& robot, const Body& obstacle, const CbfConfig& cfg,
                  MinScaleSolver* solver, const MinScaleSolver::PairKey& key) {
  CbfValue out;
  if (solver && key.first >= 0) {
    out.solve = solver->solve(key, robot, obstacle);
  } else if (solver) {
    out.solve = solver->solve(robot, obstacle);
  } else {
    out.solve = solve_min_scale(robot, obstacle);
  }
  if (!out.solve.optimal()) {
    throw Error("minimum scaling solve failed: " + to_string(out.solve.status));
  }
  const bool smooth = robot.shape.is_smooth() && obstacle.shape.is_smooth();
  GradOptions gopts;
  gopts.best_effort = true;
  out.jacobian = grad_alpha(out.solve, robot, obstacle,
                            smooth ? GradMethod::SmoothLinear : GradMethod::Ift, gopts);
  out.h = out.solve.alpha_star - cfg.beta;
  out.dh_dmu = out.jacobian.body(0);
  return out;
}

int state_dim(const RobotModel& robot) {
  if (const auto* arm = std::get_if<ArmRobot>(&robot)) return arm->chain.num_joints();
  return 3;
}

int control_dim(const RobotModel& robot) {
  if (const auto* arm = std::get_if<ArmRobot>(&robot)) return arm->chain.num_joints();
  return 2;
}

int body_count(const RobotModel& robot) {
  return std::visit([](const auto& r) { return static_cast<int>(r.bodies.size()); }, robot);
}

std::string body_name(const RobotModel& robot, int index) {
  return std::visit([index](const auto& r) { return r.bodies.at(index).name; }, robot);
}

int spatial_dim(const RobotModel& robot) {
  return std::holds_alternative<ArmRobot>(robot) ? 3 : 2;
}

std::vector<Body> robot_bodies(const RobotModel& robot, const VectorXd& x) {
  if (x.size() != state_dim(robot)) throw DimensionMismatch("state has wrong length");
  std::vector<Body> out;
  if (const auto* arm = std::get_if<ArmRobot>(&robot)) {
    const std::vector<Pose> poses = forward_kinematics(arm->chain, x, arm->bodies);
    for (std::size_t i = 0; i < poses.size(); ++i) out.push_back({arm->bodies[i].shape, poses[i]});
  } else {
    const auto& uni = std::get<UnicycleRobot>(robot);
    const UnicycleState s{x[0], x[1], x[2]};
    for (const auto& b : uni.bodies) out.push_back({b.shape, planar_body_pose(s, b)});
  }
  return out;
}

int CbfConstraintSet::num_failed() const {
  int n = 0;
  for (const auto& r : rows) n += r.ok ? 0 : 1;
  return n;
}

int CbfConstraintSet::num_rank_deficient() const {
  int n = 0;
  for (const auto& r : rows) n += r.full_rank ? 0 : 1;
  return n;
}

double CbfConstraintSet::min_h() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (r.ok) m = std::min(m, r.h);
  }
  return m;
}

namespace {

/// dmu/du for each robot body plus its rank diagnostic.
struct BodyInputMap {
  MatrixXd dmu_du;
  bool full_rank = true;
};

std::vector<BodyInputMap> input_maps(const RobotModel& robot, const VectorXd& x) {
  std::vector<BodyInputMap> out;
  if (const auto* arm = std::get_if<ArmRobot>(&robot)) {
    for (const auto& b : arm->bodies) {
      BodyInputMap m;
      m.dmu_du = pose_jacobian(arm->chain, x, b);
      const MatrixXd geo = arm->chain.geometric_jacobian(x, b.link, b.local_pose);
      Eigen::JacobiSVD<MatrixXd> svd(geo);
      const auto& sv = svd.singularValues();
      int rank = 0;
      for (int i = 0; i < sv.size(); ++i) rank += sv[i] > 1e-9 * std::max(1.0, sv[0]) ? 1 : 0;
      m.full_rank = rank == 6;
      out.push_back(std::move(m));
    }
  } else {
    const auto& uni = std::get<UnicycleRobot>(robot);
    const UnicycleState s{x[0], x[1], x[2]};
    const Eigen::Matrix<double, 3, 2> g = unicycle_input_matrix(s);
    for (const auto& b : uni.bodies) {
      BodyInputMap m;
      m.dmu_du = planar_pose_jacobian(s, b) * g;
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace

CbfConstraintSet assemble_constraints(const RobotModel& robot, const VectorXd& x,
                                      const std::vector<Obstacle>& obstacles,
                                      const CbfConfig& cfg, MinScaleSolver& solver,
                                      const AssembleOptions& opts) {
  cfg.validate();
  const std::vector<Body> bodies = robot_bodies(robot, x);
  const std::vector<BodyInputMap> maps = input_maps(robot, x);
  const int m = control_dim(robot);

  std::vector<VectorXd> a_rows;
  CbfConstraintSet set;
  for (int i = 0; i < static_cast<int>(bodies.size()); ++i) {
    for (int j = 0; j < static_cast<int>(obstacles.size()); ++j) {
      const Body& ob = obstacles[j].body;
      if (opts.broadphase_cutoff > 0.0) {
        const double gap = (bodies[i].pose.position() - ob.pose.position()).norm() -
                           bodies[i].shape.bounding_radius() - ob.shape.bounding_radius();
        if (gap > opts.broadphase_cutoff) continue;
      }
      CbfRow row;
      row.body = i;
      row.obstacle = j;
      row.full_rank = maps[i].full_rank;
      VectorXd a_row = VectorXd::Zero(m);
      double b = 0.0;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const CbfValue v = cbf_pair(bodies[i], ob, cfg, &solver, {i, j});
        a_row = maps[i].dmu_du.transpose() * v.dh_dmu;
        b = -cfg.gamma * v.h;
        row.h = v.h;
        row.alpha = v.solve.alpha_star;
        row.grad_norm = v.dh_dmu.norm();
        row.degenerate = v.jacobian.degenerate || v.solve.degenerate_contact;
        if (!a_row.allFinite() || !std::isfinite(b)) throw Error("non-finite CBF row");
      } catch (const Error& e) {
        row.ok = false;
        row.error = e.what();
        a_row.setZero();
        b = 0.0;
      }
      row.elapsed_us = std::chrono::duration<double, std::micro>(
                           std::chrono::steady_clock::now() - t0).count();
      a_rows.push_back(a_row);
      set.rows.push_back(row);
      set.b.conservativeResize(set.b.size() + 1);
      set.b[set.b.size() - 1] = b;
    }
  }
  set.A.resize(static_cast<Eigen::Index>(a_rows.size()), m);
  for (std::size_t k = 0; k < a_rows.size(); ++k) set.A.row(k) = a_rows[k].transpose();
  return set;
}

}  // namespace diffcbf
