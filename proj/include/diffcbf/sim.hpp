#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "diffcbf/cbf.hpp"
#include "diffcbf/safety_filter.hpp"

namespace diffcbf {

struct UnicycleTask {
  UnicycleRobot robot;
  UnicycleState initial;
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
  UnicycleGains gains;
};

struct ArmTask {
  ArmRobot robot;
  VectorXd initial;
  BodyAttachment end_effector;  // shape unused, only link and local pose
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  Eigen::Vector3d target_velocity = Eigen::Vector3d::Zero();
  ArmControllerConfig controller;
};

struct Timing {
  double dt_sim = 1e-3;
  double dt_ctrl = 1e-2;
  double horizon = 20.0;
};

struct StopConditions {
  double target_tolerance = 0.05;
  double stall_window = 1.0;
  double stall_displacement = 1e-4;
  bool stop_on_stall = true;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::variant<UnicycleTask, ArmTask> task;
  std::vector<Obstacle> obstacles;
  CbfConfig cbf;
  Timing timing;
  StopConditions stop;
  AssembleOptions assemble;
  std::optional<VectorXd> u_lower;
  std::optional<VectorXd> u_upper;

  RobotModel robot_model() const;
  VectorXd initial_state() const;
  /// Throws ValidationError on inconsistent settings.
  void validate() const;
};

/// One control period.
struct StepRecord {
  double t = 0.0;
  VectorXd state;
  VectorXd u_ref;
  VectorXd u_safe;
  /// h and |dh/dmu| indexed body * n_obstacles + obstacle; NaN for pairs
  /// that failed or were skipped by the broad phase.
  std::vector<double> h;
  std::vector<double> grad_norm;
  /// Solve plus gradient time of each evaluated pair.
  std::vector<double> pair_us;
  double cbf_us = 0.0;
  double qp_us = 0.0;
  std::string qp_status;
  /// Message of the error that forced a fallback, if any.
  std::string error;
  /// u was replaced by zero because a row failed or the QP had no solution.
  bool fallback = false;
  int degenerate_rows = 0;
  int rank_deficient_rows = 0;
  double distance_to_target = 0.0;
  /// Position tracked for the goal and stall tests (base or end effector).
  VectorXd tracked_position;
  /// Barrier rows at this state, kept for the discrete barrier check.
  MatrixXd cbf_A;
  VectorXd cbf_b;
};

struct TrajectoryLog {
  std::string scenario;
  /// "body|obstacle" per pair, same order as StepRecord::h.
  std::vector<std::string> pair_labels;
  std::size_t num_obstacles = 0;
  std::vector<StepRecord> records;
  VectorXd final_state;
  double final_distance = 0.0;
  bool reached = false;
  bool stalled = false;
  std::string stop_reason;
  double elapsed_time = 0.0;
  double min_h = 0.0;
  int fallbacks = 0;
  int degenerate_events = 0;
  int rank_deficient_events = 0;
  double mean_pair_us = 0.0;
  double median_pair_us = 0.0;
  double max_pair_us = 0.0;
};

/// Persistent per-run solver state (warm starts).
class Simulator {
 public:
  explicit Simulator(ScenarioConfig cfg);

  const ScenarioConfig& config() const { return cfg_; }
  const RobotModel& robot() const { return robot_; }

  /// Computes the filtered control at x and integrates one control period.
  /// Returns the next state; the record describes x and the applied input.
  VectorXd step(const VectorXd& x, double t, StepRecord& record);

  TrajectoryLog run();

  /// Position used for the goal test at x.
  VectorXd tracked_position(const VectorXd& x) const;
  VectorXd reference_control(const VectorXd& x) const;

 private:
  ScenarioConfig cfg_;
  RobotModel robot_;
  MinScaleSolver solver_;
};

TrajectoryLog run_scenario(const ScenarioConfig& cfg);

}  // namespace diffcbf
