#include "diffcbf/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "diffcbf/errors.hpp"

namespace diffcbf {

RobotModel ScenarioConfig::robot_model() const {
  if (const auto* u = std::get_if<UnicycleTask>(&task)) return u->robot;
  return std::get<ArmTask>(task).robot;
}

VectorXd ScenarioConfig::initial_state() const {
  if (const auto* u = std::get_if<UnicycleTask>(&task)) return u->initial.vector();
  return std::get<ArmTask>(task).initial;
}

void ScenarioConfig::validate() const {
  cbf.validate();
  if (!(timing.dt_sim > 0) || !(timing.dt_ctrl > 0) || !(timing.horizon > 0)) {
    throw ValidationError("timing values must be positive");
  }
  const double ratio = timing.dt_ctrl / timing.dt_sim;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
    throw ValidationError("dt_ctrl must be an integer multiple of dt_sim");
  }
  const RobotModel model = robot_model();
  const int dim = spatial_dim(model);
  if (body_count(model) == 0) throw ValidationError("robot has no collision bodies");
  for (const auto& o : obstacles) {
    if (o.body.shape.dim() != dim || o.body.pose.dim() != dim) {
      throw DimensionMismatch("obstacle '" + o.name + "' does not match the robot dimension");
    }
    o.body.shape.validate();
    o.body.pose.validate();
  }
  if (const auto* arm = std::get_if<ArmTask>(&task)) {
    arm->robot.chain.validate();
    const int n = arm->robot.chain.num_joints();
    if (arm->initial.size() != n) throw DimensionMismatch("initial joint vector has wrong length");
    if (arm->controller.theta_nominal.size() != 0 && arm->controller.theta_nominal.size() != n) {
      throw DimensionMismatch("nominal posture has wrong length");
    }
    for (const auto& b : arm->robot.bodies) {
      if (b.link < -1 || b.link >= n) throw ValidationError("body '" + b.name + "' link out of range");
      if (b.shape.dim() != 3) throw DimensionMismatch("arm body '" + b.name + "' must be 3D");
      b.shape.validate();
    }
    if (arm->end_effector.link < -1 || arm->end_effector.link >= n) {
      throw ValidationError("end effector link out of range");
    }
  } else {
    for (const auto& b : std::get<UnicycleTask>(task).robot.bodies) {
      if (b.shape.dim() != 2) throw DimensionMismatch("unicycle body '" + b.name + "' must be 2D");
      b.shape.validate();
    }
  }
  const int m = control_dim(model);
  if ((u_lower && u_lower->size() != m) || (u_upper && u_upper->size() != m)) {
    throw DimensionMismatch("input bounds have wrong length");
  }
  if (u_lower && u_upper && (u_lower->array() > u_upper->array()).any()) {
    throw ValidationError("input lower bound exceeds upper bound");
  }
}

Simulator::Simulator(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  robot_ = cfg_.robot_model();
}

VectorXd Simulator::tracked_position(const VectorXd& x) const {
  if (const auto* arm = std::get_if<ArmTask>(&cfg_.task)) {
    return arm->robot.chain.frame_pose(x, arm->end_effector.link, arm->end_effector.local_pose)
        .position();
  }
  return x.head(2);
}

VectorXd Simulator::reference_control(const VectorXd& x) const {
  if (const auto* u = std::get_if<UnicycleTask>(&cfg_.task)) {
    return unicycle_performance({x[0], x[1], x[2]}, u->target, u->gains);
  }
  // Unconstrained resolved-rate solution.
  const auto& arm = std::get<ArmTask>(cfg_.task);
  QpProblem qp = resolved_rate_problem(arm.robot.chain, x, arm.end_effector, arm.target,
                                       arm.target_velocity, arm.controller);
  return solve_qp(qp).u;
}

namespace {

VectorXd target_of(const ScenarioConfig& cfg) {
  if (const auto* u = std::get_if<UnicycleTask>(&cfg.task)) return u->target;
  return std::get<ArmTask>(cfg.task).target;
}

}  // namespace

VectorXd Simulator::step(const VectorXd& x, double t, StepRecord& rec) {
  using clock = std::chrono::steady_clock;
  rec = StepRecord{};
  rec.t = t;
  rec.state = x;
  rec.tracked_position = tracked_position(x);
  rec.distance_to_target = (rec.tracked_position - target_of(cfg_)).norm();

  const auto t0 = clock::now();
  const CbfConstraintSet cs =
      assemble_constraints(robot_, x, cfg_.obstacles, cfg_.cbf, solver_, cfg_.assemble);
  rec.cbf_us = std::chrono::duration<double, std::micro>(clock::now() - t0).count();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n_obs = cfg_.obstacles.size();
  rec.h.assign(body_count(robot_) * n_obs, nan);
  rec.grad_norm.assign(rec.h.size(), nan);
  for (const auto& row : cs.rows) {
    const std::size_t k = row.body * n_obs + row.obstacle;
    if (row.ok) {
      rec.h[k] = row.h;
      rec.grad_norm[k] = row.grad_norm;
    }
    rec.pair_us.push_back(row.elapsed_us);
    rec.degenerate_rows += row.degenerate ? 1 : 0;
  }
  rec.rank_deficient_rows = cs.num_rank_deficient();
  rec.cbf_A = cs.A;
  rec.cbf_b = cs.b;

  const int m = control_dim(robot_);
  const auto t1 = clock::now();
  rec.u_ref = reference_control(x);
  VectorXd u = VectorXd::Zero(m);
  if (cs.num_failed() > 0) {
    rec.fallback = true;
    rec.qp_status = "row_failure";
    for (const auto& row : cs.rows) {
      if (!row.ok) {
        rec.error = row.error;
        break;
      }
    }
  } else {
    try {
      if (const auto* arm = std::get_if<ArmTask>(&cfg_.task)) {
        u = resolved_rate_qp(arm->robot.chain, x, arm->end_effector, arm->target,
                             arm->target_velocity, arm->controller, cs, cfg_.u_lower,
                             cfg_.u_upper);
      } else {
        u = filter_control(rec.u_ref, cs, cfg_.u_lower, cfg_.u_upper);
      }
      rec.qp_status = to_string(QpStatus::Optimal);
    } catch (const InfeasibleError& e) {
      rec.fallback = true;
      rec.qp_status = to_string(QpStatus::Infeasible);
      rec.error = e.what();
      u.setZero();
    } catch (const Error& e) {
      rec.fallback = true;
      rec.qp_status = "failure";
      rec.error = e.what();
      u.setZero();
    }
  }
  rec.qp_us = std::chrono::duration<double, std::micro>(clock::now() - t1).count();
  rec.u_safe = u;

  const int substeps = static_cast<int>(std::lround(cfg_.timing.dt_ctrl / cfg_.timing.dt_sim));
  VectorXd next = x;
  for (int k = 0; k < substeps; ++k) {
    if (std::holds_alternative<UnicycleTask>(cfg_.task)) {
      const UnicycleState s = unicycle_step({next[0], next[1], next[2]}, u[0], u[1],
                                            cfg_.timing.dt_sim);
      next = s.vector();
    } else {
      next += cfg_.timing.dt_sim * u;
    }
  }
  return next;
}

TrajectoryLog Simulator::run() {
  TrajectoryLog log;
  log.scenario = cfg_.name;
  log.num_obstacles = cfg_.obstacles.size();
  const RobotModel& model = robot_;
  for (int i = 0; i < body_count(model); ++i) {
    for (const auto& o : cfg_.obstacles) log.pair_labels.push_back(body_name(model, i) + "|" + o.name);
  }
  const double dt = cfg_.timing.dt_ctrl;
  const int steps = static_cast<int>(std::floor(cfg_.timing.horizon / dt + 1e-9));
  const int window = static_cast<int>(std::lround(cfg_.stop.stall_window / dt));
  std::vector<VectorXd> history;

  VectorXd x = cfg_.initial_state();
  log.stop_reason = "horizon";
  double t = 0.0;
  for (int k = 0; k < steps; ++k) {
    t = k * dt;
    const VectorXd pos = tracked_position(x);
    const double dist = (pos - target_of(cfg_)).norm();
    if (dist <= cfg_.stop.target_tolerance) {
      log.reached = true;
      log.stop_reason = "reached";
      break;
    }
    history.push_back(pos);
    if (cfg_.stop.stop_on_stall && window > 0 && static_cast<int>(history.size()) > window) {
      const double moved = (history.back() - history[history.size() - 1 - window]).norm();
      if (moved < cfg_.stop.stall_displacement) {
        log.stalled = true;
        log.stop_reason = "stalled";
        break;
      }
    }
    StepRecord rec;
    x = step(x, t, rec);
    log.records.push_back(std::move(rec));
    t = (k + 1) * dt;
  }
  log.final_state = x;
  log.elapsed_time = t;
  log.final_distance = (tracked_position(x) - target_of(cfg_)).norm();
  if (!log.reached && log.final_distance <= cfg_.stop.target_tolerance) log.reached = true;

  log.min_h = std::numeric_limits<double>::infinity();
  std::vector<double> lat;
  for (const auto& r : log.records) {
    for (double h : r.h) {
      if (!std::isnan(h)) log.min_h = std::min(log.min_h, h);
    }
    log.fallbacks += r.fallback ? 1 : 0;
    log.degenerate_events += r.degenerate_rows;
    log.rank_deficient_events += r.rank_deficient_rows;
    lat.insert(lat.end(), r.pair_us.begin(), r.pair_us.end());
  }
  if (!lat.empty()) {
    double sum = 0.0;
    for (double v : lat) sum += v;
    log.mean_pair_us = sum / lat.size();
    log.max_pair_us = *std::max_element(lat.begin(), lat.end());
    std::nth_element(lat.begin(), lat.begin() + lat.size() / 2, lat.end());
    log.median_pair_us = lat[lat.size() / 2];
  }
  return log;
}

TrajectoryLog run_scenario(const ScenarioConfig& cfg) { return Simulator(cfg).run(); }

}  // namespace diffcbf
