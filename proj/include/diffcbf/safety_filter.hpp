#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "diffcbf/cbf.hpp"
#include "diffcbf/kinematics.hpp"

namespace diffcbf {

/// min 0.5 u^T P u + q^T u  s.t.  A u >= b,  lower <= u <= upper.
struct QpProblem {
  MatrixXd P;
  VectorXd q;
  MatrixXd A;
  VectorXd b;
  std::optional<VectorXd> lower;
  std::optional<VectorXd> upper;
};

enum class QpStatus { Optimal, Infeasible, MaxIter, NumericalFailure };
std::string to_string(QpStatus s);

struct QpResult {
  QpStatus status = QpStatus::NumericalFailure;
  VectorXd u;
  /// Indices into the stacked rows [A; I (lower); -I (upper)].
  std::vector<int> active_set;
  /// Multipliers of the stacked rows, zero for inactive ones.
  VectorXd multipliers;
  /// For an infeasible problem: y >= 0 with A_s^T y ~ 0 and b_s^T y > 0.
  VectorXd certificate;
  /// a_i^T u - b_i per stacked row.
  VectorXd margins;
  int iterations = 0;
  double kkt_residual = 0.0;
  double objective = 0.0;
  /// Ridge added to P when it was not numerically positive definite.
  double regularization = 0.0;

  bool optimal() const { return status == QpStatus::Optimal; }
};

struct QpOptions {
  double tol = 1e-8;
  int max_iter = 500;
  std::optional<VectorXd> initial_guess;
};

/// Dense primal active-set method with an elastic phase 1.
QpResult solve_qp(const QpProblem& qp, const QpOptions& opts = {});

/// Closest control to u_ref satisfying the CBF rows. Throws InfeasibleError
/// with the per-row margins of the least-violating point when empty.
VectorXd filter_control(const VectorXd& u_ref, const CbfConstraintSet& cs,
                        const std::optional<VectorXd>& lower = std::nullopt,
                        const std::optional<VectorXd>& upper = std::nullopt);

struct ArmControllerConfig {
  double kp = 2.0;          // end-effector position gain
  double kp_null = 1.0;     // nullspace posture gain
  double epsilon = 0.1;     // nullspace weight
  VectorXd theta_nominal;   // posture target, zero if empty
};

/// End-effector tracking problem P = 2(J^T J + eps N), q = -2(J^T v + eps N w)
/// with v = kp (p_des - p) + pdot_des and w = kp_null (theta_nom - theta).
QpProblem resolved_rate_problem(const KinematicChain& chain, const VectorXd& theta,
                                const BodyAttachment& end_effector,
                                const Eigen::Vector3d& p_des, const Eigen::Vector3d& pdot_des,
                                const ArmControllerConfig& cfg);

/// Solves the resolved-rate problem subject to the CBF rows. Throws
/// InfeasibleError when the constraints cannot be met.
VectorXd resolved_rate_qp(const KinematicChain& chain, const VectorXd& theta,
                          const BodyAttachment& end_effector, const Eigen::Vector3d& p_des,
                          const Eigen::Vector3d& pdot_des, const ArmControllerConfig& cfg,
                          const CbfConstraintSet& cs,
                          const std::optional<VectorXd>& lower = std::nullopt,
                          const std::optional<VectorXd>& upper = std::nullopt);

struct UnicycleGains {
  double k_v = 0.5;
  double k_omega = 2.0;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Proportional go-to-goal law: v = k_v |e|, omega = k_omega wrap(atan2(e) - heading).
Eigen::Vector2d unicycle_performance(const UnicycleState& s, const Eigen::Vector2d& target,
                                     const UnicycleGains& gains);

}  // namespace diffcbf
