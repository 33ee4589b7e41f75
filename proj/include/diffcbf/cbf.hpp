#pragma once

#include <Eigen/Core>
#include <string>
#include <variant>
#include <vector>

#include "diffcbf/diffgrad.hpp"
#include "diffcbf/kinematics.hpp"
#include "diffcbf/minscale.hpp"

namespace diffcbf {

struct CbfConfig {
  double beta = 1.03;   // safety margin on alpha*
  double gamma = 5.0;   // class-K gain
  /// Throws ValidationError unless beta >= 1 and gamma > 0.
  void validate() const;
};

/// h = alpha*(robot, obstacle) - beta and its gradient w.r.t. the robot
/// body pose.
struct CbfValue {
  double h = 0.0;
  VectorXd dh_dmu;
  MinScaleResult solve;
  AlphaJacobian jacobian;
};

/// Picks the smooth_linear gradient for sphere/ellipsoid pairs and the
/// best-effort ift gradient otherwise.
CbfValue cbf_pair(const Body& robot, const Body& obstacle, const CbfConfig& cfg,
                  MinScaleSolver* solver = nullptr,
                  const MinScaleSolver::PairKey& key = {-1, -1});

struct Obstacle {
  std::string name;
  Body body;
};

/// Unicycle carrying planar bodies. State (x, y, heading), input (v, omega).
struct UnicycleRobot {
  std::vector<PlanarAttachment> bodies;
};

/// Velocity-controlled serial chain. State theta, input theta dot.
struct ArmRobot {
  KinematicChain chain;
  std::vector<BodyAttachment> bodies;
};

using RobotModel = std::variant<UnicycleRobot, ArmRobot>;

int state_dim(const RobotModel& robot);
int control_dim(const RobotModel& robot);
int body_count(const RobotModel& robot);
std::string body_name(const RobotModel& robot, int index);
int spatial_dim(const RobotModel& robot);

/// World-posed bodies of the robot at state x.
std::vector<Body> robot_bodies(const RobotModel& robot, const VectorXd& x);

/// Per-row diagnostics of an assembled constraint set.
struct CbfRow {
  int body = 0;
  int obstacle = 0;
  double h = 0.0;
  double alpha = 0.0;
  double grad_norm = 0.0;
  /// False when the solve or gradient failed; the row is then all zeros.
  bool ok = true;
  bool degenerate = false;
  /// Rank of the body's velocity Jacobian equals its row count.
  bool full_rank = true;
  double elapsed_us = 0.0;
  std::string error;
};

/// Rows of A u >= b with A = dh/dmu * dmu/dx * G(x) and b = -gamma * h.
struct CbfConstraintSet {
  MatrixXd A;
  VectorXd b;
  std::vector<CbfRow> rows;

  int num_failed() const;
  int num_rank_deficient() const;
  double min_h() const;
};

struct AssembleOptions {
  /// Skip pairs whose bounding spheres are farther apart than this. Zero or
  /// negative keeps every pair.
  double broadphase_cutoff = 0.0;
};

CbfConstraintSet assemble_constraints(const RobotModel& robot, const VectorXd& x,
                                      const std::vector<Obstacle>& obstacles,
                                      const CbfConfig& cfg, MinScaleSolver& solver,
                                      const AssembleOptions& opts = {});

}  // namespace diffcbf
