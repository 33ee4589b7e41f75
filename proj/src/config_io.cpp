#include "diffcbf/config_io.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace diffcbf {

ConfigError::ConfigError(const std::string& source, int line, const std::string& message)
    : ValidationError(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
    const int line = n.IsDefined() && n.Mark().line >= 0 ? n.Mark().line + 1 : 0;
    throw ConfigError(source_, line, msg);
  }

  void require_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void allow_keys(const YAML::Node& n, std::initializer_list<const char*> keys,
                  const std::string& what) const {
    require_map(n, what);
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& kv : n) {
      const std::string k = kv.first.as<std::string>();
      if (!allowed.count(k)) fail(kv.first, "unknown key '" + k + "' in " + what);
    }
  }

  YAML::Node child(const YAML::Node& n, const char* key, const std::string& what) const {
    const YAML::Node c = n[key];
    if (!c) fail(n, what + " is missing '" + key + "'");
    return c;
  }

  double number(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a number");
    double v = 0.0;
    try {
      v = n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, what + " must be a number");
    }
    if (!std::isfinite(v)) fail(n, what + " must be finite");
    return v;
  }

  double number_or(const YAML::Node& parent, const char* key, double fallback,
                   const std::string& what) const {
    const YAML::Node n = parent[key];
    return n ? number(n, what + "." + key) : fallback;
  }

  int integer(const YAML::Node& n, const std::string& what) const {
    const double v = number(n, what);
    if (v != std::floor(v)) fail(n, what + " must be an integer");
    return static_cast<int>(v);
  }

  bool boolean(const YAML::Node& n, const std::string& what) const {
    try {
      return n.as<bool>();
    } catch (const YAML::Exception&) {
      fail(n, what + " must be true or false");
    }
  }

  std::string text(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a string");
    return n.as<std::string>();
  }

  VectorXd vec(const YAML::Node& n, int size, const std::string& what) const {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    if (size >= 0 && static_cast<int>(n.size()) != size) {
      fail(n, what + " must have " + std::to_string(size) + " entries");
    }
    VectorXd v(n.size());
    for (std::size_t i = 0; i < n.size(); ++i) v[i] = number(n[i], what);
    return v;
  }

  MatrixXd matrix(const YAML::Node& n, int cols, const std::string& what) const {
    if (!n.IsSequence() || n.size() == 0) fail(n, what + " must be a non-empty list of rows");
    MatrixXd m(n.size(), cols);
    for (std::size_t i = 0; i < n.size(); ++i) m.row(i) = vec(n[i], cols, what).transpose();
    return m;
  }

  template <class F>
  auto guard(const YAML::Node& n, F&& f) const -> decltype(f()) {
    try {
      return f();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      fail(n, e.what());
    }
  }

  Pose pose(const YAML::Node& n, int dim, const std::string& what) const {
    if (!n) return Pose::identity(dim);
    allow_keys(n, {"position", "heading", "quaternion", "axis_angle"}, what);
    const VectorXd pos = n["position"] ? vec(n["position"], dim, what + ".position")
                                       : VectorXd::Zero(dim);
    if (dim == 2) {
      if (n["quaternion"] || n["axis_angle"]) fail(n, what + ": planar poses use 'heading'");
      return Pose::planar(Eigen::Vector2d(pos), number_or(n, "heading", 0.0, what));
    }
    if (n["heading"]) fail(n["heading"], what + ": spatial poses use 'quaternion' or 'axis_angle'");
    if (n["quaternion"] && n["axis_angle"]) fail(n, what + ": give quaternion or axis_angle, not both");
    Quat q(1, 0, 0, 0);
    if (n["quaternion"]) {
      q = vec(n["quaternion"], 4, what + ".quaternion");
    } else if (n["axis_angle"]) {
      const YAML::Node aa = n["axis_angle"];
      allow_keys(aa, {"axis", "angle"}, what + ".axis_angle");
      const Eigen::Vector3d axis = vec(child(aa, "axis", what), 3, what + ".axis_angle.axis");
      if (axis.norm() == 0.0) fail(aa, what + ": rotation axis is zero");
      q = quat_from_axis_angle(axis.normalized(), number(child(aa, "angle", what), what + ".angle"));
    }
    return guard(n, [&] { return Pose::spatial(Eigen::Vector3d(pos), q); });
  }

  ShapeSpec shape(const YAML::Node& n, int dim, const std::string& what) const {
    require_map(n, what);
    const std::string type = text(child(n, "type", what), what + ".type");
    ShapeSpec s = [&]() -> ShapeSpec {
      if (type == "sphere") {
        allow_keys(n, {"type", "radius"}, what);
        return guard(n, [&] { return ShapeSpec::sphere(number(child(n, "radius", what), what), dim); });
      }
      if (type == "ellipsoid") {
        allow_keys(n, {"type", "semi_axes"}, what);
        const VectorXd ax = vec(child(n, "semi_axes", what), dim, what + ".semi_axes");
        return guard(n, [&] { return ShapeSpec::ellipsoid(ax); });
      }
      if (type == "capsule") {
        allow_keys(n, {"type", "radius", "segment_length"}, what);
        const double r = number(child(n, "radius", what), what + ".radius");
        const double l = number(child(n, "segment_length", what), what + ".segment_length");
        return guard(n, [&] { return ShapeSpec::capsule(r, l, dim); });
      }
      if (type == "box") {
        allow_keys(n, {"type", "half_extents"}, what);
        const VectorXd h = vec(child(n, "half_extents", what), dim, what + ".half_extents");
        return guard(n, [&] { return ShapeSpec::box(h); });
      }
      if (type == "polytope") {
        allow_keys(n, {"type", "normals", "offsets"}, what);
        const MatrixXd a = matrix(child(n, "normals", what), dim, what + ".normals");
        const VectorXd b = vec(child(n, "offsets", what), static_cast<int>(a.rows()), what + ".offsets");
        return guard(n, [&] { return ShapeSpec::polytope(a, b); });
      }
      fail(n["type"], "unknown shape type '" + type + "'");
    }();
    guard(n, [&] {
      s.validate();
      return 0;
    });
    return s;
  }

  Body body(const YAML::Node& n, int dim, const std::string& what) const {
    return {shape(child(n, "shape", what), dim, what + ".shape"), pose(n["pose"], dim, what + ".pose")};
  }

 private:
  std::string source_;
};

YAML::Node parse_text(const std::string& text, const std::string& source) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, e.mark.line + 1, e.msg);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

UnicycleTask parse_unicycle(const Reader& rd, const YAML::Node& robot, const YAML::Node& ctrl) {
  rd.allow_keys(robot, {"type", "initial_state", "bodies"}, "robot");
  UnicycleTask task;
  const VectorXd x0 = rd.vec(rd.child(robot, "initial_state", "robot"), 3, "robot.initial_state");
  task.initial = {x0[0], x0[1], x0[2]};
  const YAML::Node bodies = rd.child(robot, "bodies", "robot");
  if (!bodies.IsSequence() || bodies.size() == 0) rd.fail(bodies, "robot.bodies must be a non-empty list");
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const YAML::Node b = bodies[i];
    const std::string what = "robot.bodies[" + std::to_string(i) + "]";
    rd.allow_keys(b, {"name", "shape", "local_pose"}, what);
    PlanarAttachment att;
    att.name = b["name"] ? rd.text(b["name"], what + ".name") : "body" + std::to_string(i);
    att.shape = rd.shape(rd.child(b, "shape", what), 2, what + ".shape");
    att.local_pose = rd.pose(b["local_pose"], 2, what + ".local_pose");
    task.robot.bodies.push_back(std::move(att));
  }
  rd.allow_keys(ctrl, {"type", "target", "k_v", "k_omega"}, "controller");
  const std::string type = ctrl["type"] ? rd.text(ctrl["type"], "controller.type") : "proportional";
  if (type != "proportional") rd.fail(ctrl["type"], "unicycle controller must be 'proportional'");
  task.target = rd.vec(rd.child(ctrl, "target", "controller"), 2, "controller.target");
  task.gains.k_v = rd.number_or(ctrl, "k_v", task.gains.k_v, "controller");
  task.gains.k_omega = rd.number_or(ctrl, "k_omega", task.gains.k_omega, "controller");
  return task;
}

ArmTask parse_arm(const Reader& rd, const YAML::Node& robot, const YAML::Node& ctrl) {
  rd.allow_keys(robot, {"type", "base", "joints", "initial_joints", "bodies", "end_effector"}, "robot");
  const YAML::Node joints = rd.child(robot, "joints", "robot");
  if (!joints.IsSequence() || joints.size() == 0) rd.fail(joints, "robot.joints must be a non-empty list");
  std::vector<Joint> js;
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const YAML::Node j = joints[i];
    const std::string what = "robot.joints[" + std::to_string(i) + "]";
    rd.allow_keys(j, {"type", "axis", "origin"}, what);
    Joint joint;
    const std::string type = j["type"] ? rd.text(j["type"], what + ".type") : "revolute";
    if (type == "revolute") {
      joint.type = JointType::Revolute;
    } else if (type == "prismatic") {
      joint.type = JointType::Prismatic;
    } else {
      rd.fail(j["type"], "unknown joint type '" + type + "'");
    }
    if (j["axis"]) joint.axis = rd.vec(j["axis"], 3, what + ".axis");
    if (std::abs(joint.axis.norm() - 1.0) > 1e-9) rd.fail(j, what + ".axis must be unit norm");
    joint.origin = rd.pose(j["origin"], 3, what + ".origin");
    js.push_back(joint);
  }
  ArmTask task;
  const Pose base = rd.pose(robot["base"], 3, "robot.base");
  task.robot.chain = rd.guard(robot, [&] { return KinematicChain(js, base); });
  const int n = task.robot.chain.num_joints();
  task.initial = robot["initial_joints"]
                     ? rd.vec(robot["initial_joints"], n, "robot.initial_joints")
                     : VectorXd::Zero(n);
  const YAML::Node bodies = rd.child(robot, "bodies", "robot");
  if (!bodies.IsSequence() || bodies.size() == 0) rd.fail(bodies, "robot.bodies must be a non-empty list");
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    const YAML::Node b = bodies[i];
    const std::string what = "robot.bodies[" + std::to_string(i) + "]";
    rd.allow_keys(b, {"name", "link", "shape", "local_pose"}, what);
    BodyAttachment att;
    att.name = b["name"] ? rd.text(b["name"], what + ".name") : "body" + std::to_string(i);
    att.link = rd.integer(rd.child(b, "link", what), what + ".link");
    if (att.link < -1 || att.link >= n) rd.fail(b["link"], what + ".link out of range");
    att.shape = rd.shape(rd.child(b, "shape", what), 3, what + ".shape");
    att.local_pose = rd.pose(b["local_pose"], 3, what + ".local_pose");
    task.robot.bodies.push_back(std::move(att));
  }
  const YAML::Node ee = rd.child(robot, "end_effector", "robot");
  rd.allow_keys(ee, {"link", "local_pose"}, "robot.end_effector");
  task.end_effector.name = "end_effector";
  task.end_effector.link = rd.integer(rd.child(ee, "link", "robot.end_effector"), "robot.end_effector.link");
  if (task.end_effector.link < -1 || task.end_effector.link >= n) rd.fail(ee["link"], "end effector link out of range");
  task.end_effector.local_pose = rd.pose(ee["local_pose"], 3, "robot.end_effector.local_pose");

  rd.allow_keys(ctrl, {"type", "target", "target_velocity", "kp", "kp_null", "epsilon", "theta_nominal"},
                "controller");
  const std::string type = ctrl["type"] ? rd.text(ctrl["type"], "controller.type") : "resolved_rate";
  if (type != "resolved_rate") rd.fail(ctrl["type"], "chain controller must be 'resolved_rate'");
  task.target = rd.vec(rd.child(ctrl, "target", "controller"), 3, "controller.target");
  if (ctrl["target_velocity"]) task.target_velocity = rd.vec(ctrl["target_velocity"], 3, "controller.target_velocity");
  task.controller.kp = rd.number_or(ctrl, "kp", task.controller.kp, "controller");
  task.controller.kp_null = rd.number_or(ctrl, "kp_null", task.controller.kp_null, "controller");
  task.controller.epsilon = rd.number_or(ctrl, "epsilon", task.controller.epsilon, "controller");
  if (task.controller.epsilon < 0) rd.fail(ctrl["epsilon"], "controller.epsilon must be >= 0");
  task.controller.theta_nominal = ctrl["theta_nominal"]
                                      ? rd.vec(ctrl["theta_nominal"], n, "controller.theta_nominal")
                                      : task.initial;
  return task;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& source) {
  const Reader rd(source);
  const YAML::Node root = parse_text(text, source);
  rd.allow_keys(root, {"name", "robot", "controller", "obstacles", "cbf", "timing", "stop",
                       "broadphase_cutoff", "input_bounds"},
                "scenario");
  ScenarioConfig cfg;
  if (root["name"]) cfg.name = rd.text(root["name"], "name");
  const YAML::Node robot = rd.child(root, "robot", "scenario");
  rd.require_map(robot, "robot");
  const YAML::Node ctrl = rd.child(root, "controller", "scenario");
  rd.require_map(ctrl, "controller");
  const std::string type = rd.text(rd.child(robot, "type", "robot"), "robot.type");
  int dim = 0;
  if (type == "unicycle") {
    cfg.task = parse_unicycle(rd, robot, ctrl);
    dim = 2;
  } else if (type == "chain") {
    cfg.task = parse_arm(rd, robot, ctrl);
    dim = 3;
  } else {
    rd.fail(robot["type"], "unknown robot type '" + type + "' (expected unicycle or chain)");
  }

  if (const YAML::Node obs = root["obstacles"]) {
    if (!obs.IsSequence()) rd.fail(obs, "obstacles must be a list");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::string what = "obstacles[" + std::to_string(i) + "]";
      rd.allow_keys(obs[i], {"name", "shape", "pose"}, what);
      Obstacle o;
      o.name = obs[i]["name"] ? rd.text(obs[i]["name"], what + ".name") : "obstacle" + std::to_string(i);
      o.body = rd.body(obs[i], dim, what);
      cfg.obstacles.push_back(std::move(o));
    }
  }
  if (const YAML::Node c = root["cbf"]) {
    rd.allow_keys(c, {"beta", "gamma"}, "cbf");
    cfg.cbf.beta = rd.number_or(c, "beta", cfg.cbf.beta, "cbf");
    cfg.cbf.gamma = rd.number_or(c, "gamma", cfg.cbf.gamma, "cbf");
    rd.guard(c, [&] {
      cfg.cbf.validate();
      return 0;
    });
  }
  if (const YAML::Node t = root["timing"]) {
    rd.allow_keys(t, {"dt_sim", "dt_ctrl", "horizon"}, "timing");
    cfg.timing.dt_sim = rd.number_or(t, "dt_sim", cfg.timing.dt_sim, "timing");
    cfg.timing.dt_ctrl = rd.number_or(t, "dt_ctrl", cfg.timing.dt_ctrl, "timing");
    cfg.timing.horizon = rd.number_or(t, "horizon", cfg.timing.horizon, "timing");
  }
  if (const YAML::Node s = root["stop"]) {
    rd.allow_keys(s, {"target_tolerance", "stall_window", "stall_displacement", "stop_on_stall"}, "stop");
    cfg.stop.target_tolerance = rd.number_or(s, "target_tolerance", cfg.stop.target_tolerance, "stop");
    cfg.stop.stall_window = rd.number_or(s, "stall_window", cfg.stop.stall_window, "stop");
    cfg.stop.stall_displacement = rd.number_or(s, "stall_displacement", cfg.stop.stall_displacement, "stop");
    if (s["stop_on_stall"]) cfg.stop.stop_on_stall = rd.boolean(s["stop_on_stall"], "stop.stop_on_stall");
  }
  if (root["broadphase_cutoff"]) {
    cfg.assemble.broadphase_cutoff = rd.number(root["broadphase_cutoff"], "broadphase_cutoff");
  }
  if (const YAML::Node ib = root["input_bounds"]) {
    rd.allow_keys(ib, {"lower", "upper"}, "input_bounds");
    const int m = control_dim(cfg.robot_model());
    if (ib["lower"]) cfg.u_lower = rd.vec(ib["lower"], m, "input_bounds.lower");
    if (ib["upper"]) cfg.u_upper = rd.vec(ib["upper"], m, "input_bounds.upper");
  }
  rd.guard(root, [&] {
    cfg.validate();
    return 0;
  });
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) { return parse_scenario(read_file(path), path); }

PairSpec parse_pair(const std::string& text, const std::string& source) {
  const Reader rd(source);
  const YAML::Node root = parse_text(text, source);
  rd.allow_keys(root, {"dimension", "method", "body_a", "body_b"}, "pair file");
  const int dim = root["dimension"] ? rd.integer(root["dimension"], "dimension") : 3;
  if (dim != 2 && dim != 3) rd.fail(root["dimension"], "dimension must be 2 or 3");
  PairSpec spec;
  if (root["method"]) {
    const std::string m = rd.text(root["method"], "method");
    if (m == "auto") {
      spec.method = MinScaleMethod::Auto;
    } else if (m == "conic") {
      spec.method = MinScaleMethod::Conic;
    } else if (m == "smooth_kkt") {
      spec.method = MinScaleMethod::SmoothKkt;
    } else {
      rd.fail(root["method"], "method must be auto, conic or smooth_kkt");
    }
  }
  for (const char* key : {"body_a", "body_b"}) {
    const YAML::Node n = rd.child(root, key, "pair file");
    rd.allow_keys(n, {"shape", "pose"}, key);
    (std::string(key) == "body_a" ? spec.a : spec.b) = rd.body(n, dim, key);
  }
  return spec;
}

PairSpec load_pair(const std::string& path) { return parse_pair(read_file(path), path); }

namespace {

void put(std::ostream& out, double v) {
  if (std::isnan(v)) {
    out << "nan";
  } else {
    out << v;
  }
}

}  // namespace

void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out) {
  const int n = log.records.empty() ? 0 : static_cast<int>(log.records.front().state.size());
  const int m = log.records.empty() ? 0 : static_cast<int>(log.records.front().u_safe.size());
  const std::size_t n_pairs = log.pair_labels.size();
  const std::size_t n_obs = log.num_obstacles;
  auto pair_name = [&](std::size_t k) {
    return std::to_string(n_obs ? k / n_obs : 0) + "_" + std::to_string(n_obs ? k % n_obs : 0);
  };
  out << "t";
  for (int i = 0; i < n; ++i) out << ",x" << i;
  for (int i = 0; i < m; ++i) out << ",u_ref" << i;
  for (int i = 0; i < m; ++i) out << ",u_safe" << i;
  for (std::size_t k = 0; k < n_pairs; ++k) out << ",h_" << pair_name(k);
  out << ",solve_us,qp_us,distance,qp_status,fallback,degenerate_rows,rank_deficient_rows";
  for (std::size_t k = 0; k < n_pairs; ++k) out << ",grad_" << pair_name(k);
  out << "\n";
  out.precision(12);
  for (const auto& r : log.records) {
    out << r.t;
    for (int i = 0; i < r.state.size(); ++i) out << "," << r.state[i];
    for (int i = 0; i < r.u_ref.size(); ++i) out << "," << r.u_ref[i];
    for (int i = 0; i < r.u_safe.size(); ++i) out << "," << r.u_safe[i];
    for (std::size_t k = 0; k < n_pairs; ++k) {
      out << ",";
      put(out, r.h[k]);
    }
    out << "," << r.cbf_us << "," << r.qp_us << "," << r.distance_to_target << "," << r.qp_status
        << "," << (r.fallback ? 1 : 0) << "," << r.degenerate_rows << "," << r.rank_deficient_rows;
    for (std::size_t k = 0; k < n_pairs; ++k) {
      out << ",";
      put(out, r.grad_norm[k]);
    }
    out << "\n";
  }
}

std::string summary_json(const TrajectoryLog& log, int indent) {
  using nlohmann::json;
  auto num = [](double v) -> json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  json j;
  j["scenario"] = log.scenario;
  j["reached"] = log.reached;
  j["stalled"] = log.stalled;
  j["stop_reason"] = log.stop_reason;
  j["steps"] = log.records.size();
  j["sim_time"] = log.elapsed_time;
  j["final_distance"] = num(log.final_distance);
  j["final_state"] = std::vector<double>(log.final_state.data(),
                                         log.final_state.data() + log.final_state.size());
  j["min_h"] = num(log.min_h);
  j["safe"] = std::isfinite(log.min_h) ? log.min_h >= 0.0 : true;
  j["qp_failures"] = log.fallbacks;
  j["degenerate_events"] = log.degenerate_events;
  j["rank_deficient_events"] = log.rank_deficient_events;
  j["pairs"] = log.pair_labels;
  j["timing"] = {{"mean_cbf_us", log.mean_pair_us},
                 {"median_cbf_us", log.median_pair_us},
                 {"max_cbf_us", log.max_pair_us}};
  return j.dump(indent);
}

}  // namespace diffcbf
