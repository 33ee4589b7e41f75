// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "diffcbf/config_io.hpp"
#include "diffcbf/gradcheck.hpp"
#include "diffcbf/kinematics.hpp"
#include "diffcbf/safety_filter.hpp"
#include "diffcbf/sim.hpp"
#include "oracles.hpp"

using namespace diffcbf;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kRoot = DIFFCBF_SOURCE_DIR;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Outcome& o) {
  std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  failures += o.pass ? 0 : 1;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  const std::vector<ShapeKind> all3{ShapeKind::Sphere, ShapeKind::Ellipsoid, ShapeKind::Capsule,
                                    ShapeKind::Polytope};
  const std::vector<ShapeKind> all2{ShapeKind::Sphere, ShapeKind::Capsule, ShapeKind::Polytope};
  double max_err = 0.0;
  int over_tol = 0, mismatches = 0, colliding = 0, not_optimal = 0;
  for (int s = 0; s < 200; ++s) {
    std::mt19937_64 rng(s);
    const int dim = s % 4 == 3 ? 2 : 3;
    const auto [a, b] = random_pair(rng, dim == 3 ? all3 : all2, dim, 0.8);
    const auto r = solve_min_scale(a, b);
    if (!r.optimal()) ++not_optimal;
    const double err = std::abs(r.alpha_star - oracle_min_scale(a, b));
    max_err = std::max(max_err, err);
    over_tol += err > 1e-5;
    const bool sampled = oracle::sample_intersection(a, b, 200000, 7919 + s);
    colliding += r.colliding();
    mismatches += sampled != r.colliding();
  }
  const double t = seconds_since(t0);
  return {over_tol == 0 && mismatches == 0 && not_optimal == 0 && t <= 60.0,
          fmt("200 pairs (%d colliding), max |alpha*-oracle| = %.2e (tol 1e-5), "
              "sampling mismatches = %d, non-optimal = %d, %.1f s (limit 60 s)",
              colliding, max_err, mismatches, not_optimal, t)};
}

Outcome gradient_correctness() {
  const GradCheckReport rep = run_gradcheck(100, 0);
  // Ellipsoid sweeping past a polytope along a smooth path.
  std::mt19937_64 rng(2);
  const Body poly{random_shape(rng, ShapeKind::Polytope, 3), Pose::identity(3)};
  const ShapeSpec ell = random_shape(rng, ShapeKind::Ellipsoid, 3);
  GradOptions go;
  go.best_effort = true;
  int non_finite = 0, fd_fail = 0, degenerate = 0;
  double path_err = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double s = k / 49.0;
    const Eigen::Vector3d c(2.2 * std::cos(2 * M_PI * s), 1.6 * std::sin(2 * M_PI * s), 0.6 - 1.2 * s);
    const Body e{ell, Pose::spatial(c, quat_from_axis_angle(Eigen::Vector3d(1, 1, 0).normalized(), 3 * s))};
    const auto r = solve_min_scale(e, poly);
    const auto j = grad_alpha(r, e, poly, GradMethod::Ift, go);
    if (!j.all_finite()) {
      ++non_finite;
      continue;
    }
    degenerate += j.degenerate;
    const double err = relative_error(tangent_gradient(j, e.pose, poly.pose), fd_tangent_gradient(e, poly));
    path_err = std::max(path_err, err);
    fd_fail += err > 1e-4;
  }
  return {rep.passed(1e-4, 1e-6) && non_finite == 0 && fd_fail == 0,
          fmt("100 smooth pairs: FD rel err %.2e (ift %.2e), ift vs smooth_linear %.2e; "
              "ellipsoid-polytope path 50 pts: FD rel err %.2e, NaN/Inf %d, degenerate %d",
              rep.max_fd_error, rep.max_ift_fd_error, rep.max_method_gap, path_err, non_finite,
              degenerate)};
}

struct ScenarioRun {
  TrajectoryLog log;
  double wall = 0.0;
  ScenarioConfig cfg;
};

ScenarioRun run_file(const std::string& name) {
  ScenarioRun out;
  out.cfg = load_scenario(kRoot + "/scenarios/" + name);
  const auto t0 = Clock::now();
  out.log = run_scenario(out.cfg);
  out.wall = seconds_since(t0);
  return out;
}

Outcome mobile_robot(const ScenarioRun& r) {
  const auto& task = std::get<UnicycleTask>(r.cfg.task);
  const bool settings = r.cfg.cbf.beta == 1.03 && r.cfg.cbf.gamma == 5.0 && task.gains.k_v == 0.5 &&
                        task.gains.k_omega == 2.0 && task.target == Eigen::Vector2d(5.0, 3.0);
  return {settings && r.log.final_distance <= 0.1 && r.log.min_h >= 0.0 && r.wall <= 10.0,
          fmt("final distance %.4f m (limit 0.1), min h %.3e, %zu steps, fallbacks %d, wall %.2f s "
              "(limit 10 s)",
              r.log.final_distance, r.log.min_h, r.log.records.size(), r.log.fallbacks, r.wall)};
}

Outcome arm_scenarios(const ScenarioRun& reach, const ScenarioRun& blocked) {
  const int n_obs = static_cast<int>(reach.cfg.obstacles.size());
  const int n_joints = state_dim(reach.cfg.robot_model());
  const bool ok_reach = reach.log.reached && reach.log.min_h >= 0.0;
  const bool ok_blocked = !blocked.log.reached && blocked.log.stalled && blocked.log.min_h >= 0.0;
  return {ok_reach && ok_blocked && n_obs >= 3 && n_joints == 7,
          fmt("%d joints, %d obstacles; reach: reached=%d, min h %.3e, dist %.4f m, %.1f s sim; "
              "blocked: stalled=%d, min h %.3e, stall dist %.4f m",
              n_joints, n_obs, reach.log.reached, reach.log.min_h, reach.log.final_distance,
              reach.log.elapsed_time, blocked.log.stalled, blocked.log.min_h,
              blocked.log.final_distance)};
}

/// Smallest slack of h_{k+1} - (1 - gamma dt) h_k over all pairs and steps.
double barrier_slack(const ScenarioRun& r, int& checks) {
  const double decay = 1.0 - r.cfg.cbf.gamma * r.cfg.timing.dt_ctrl;
  double worst = INFINITY;
  const auto& recs = r.log.records;
  for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
    for (std::size_t p = 0; p < recs[k].h.size(); ++p) {
      const double h0 = recs[k].h[p], h1 = recs[k + 1].h[p];
      if (!std::isfinite(h0) || !std::isfinite(h1)) continue;
      worst = std::min(worst, h1 - decay * h0);
      ++checks;
    }
  }
  return worst;
}

Outcome barrier_inequality(const std::vector<const ScenarioRun*>& runs) {
  std::string detail;
  bool pass = true;
  int total = 0;
  for (const auto* r : runs) {
    int checks = 0;
    const double s = barrier_slack(*r, checks);
    pass = pass && s >= -1e-4 && checks > 0;
    total += checks;
    detail += fmt("%s min slack %.2e; ", r->log.scenario.c_str(), s);
  }
  return {pass, detail + fmt("%d pair-steps, tolerance -1e-4", total)};
}

Outcome latency(const std::vector<const ScenarioRun*>& runs) {
  // Standalone timing of solve + gradient on the bundled geometries.
  auto time_pairs = [](const std::vector<Body>& robots, const std::vector<Obstacle>& obs) {
    std::vector<double> us;
    const CbfConfig cfg;
    for (int rep = 0; rep < 20; ++rep) {
      for (const auto& r : robots) {
        for (const auto& o : obs) {
          const auto t0 = Clock::now();
          volatile double h = cbf_pair(r, o.body, cfg).h;
          (void)h;
          us.push_back(std::chrono::duration<double, std::micro>(Clock::now() - t0).count());
        }
      }
    }
    return median(us);
  };
  std::string detail;
  double worst = 0.0;
  for (const auto* r : runs) {
    const double in_loop = r->log.median_pair_us;
    const double cold = time_pairs(robot_bodies(r->cfg.robot_model(), r->cfg.initial_state()),
                                   r->cfg.obstacles);
    worst = std::max({worst, in_loop, cold});
    detail += fmt("%s median %.1f us in loop, %.1f us cold; ", r->log.scenario.c_str(), in_loop, cold);
  }
  return {worst <= 1000.0,
          detail + "limit 1000 us (reported 2D 34 us, arm 200-240 us, informational)"};
}

Outcome qp_oracle() {
  std::normal_distribution<double> g(0.0, 1.0);
  int compared = 0, infeasible = 0, disagreements = 0;
  double max_gap = 0.0;
  for (int seed = 0; seed < 500; ++seed) {
    std::mt19937_64 rng(seed);
    const int m = 1 + seed % 4;
    const int r = 1 + (seed / 4) % 6;
    const MatrixXd L = MatrixXd::NullaryExpr(m, m, [&] { return g(rng); });
    QpProblem qp;
    qp.P = L * L.transpose() + 0.1 * MatrixXd::Identity(m, m);
    qp.q = VectorXd::NullaryExpr(m, [&] { return g(rng); });
    qp.A = MatrixXd::NullaryExpr(r, m, [&] { return g(rng); });
    qp.b = VectorXd::NullaryExpr(r, [&] { return g(rng); });
    const auto ref = oracle::enumerate_qp(qp.P, qp.q, qp.A, qp.b);
    const auto got = solve_qp(qp);
    if (!ref.feasible) {
      ++infeasible;
      disagreements += got.status != QpStatus::Infeasible;
      continue;
    }
    if (!got.optimal()) {
      ++disagreements;
      continue;
    }
    ++compared;
    max_gap = std::max(max_gap, std::abs(got.objective - ref.objective));
  }
  return {disagreements == 0 && max_gap <= 1e-7,
          fmt("500 seeds (m<=4, rows<=6): %d optimal compared, %d infeasible, status mismatches %d, "
              "max objective gap %.2e (tol 1e-7)",
              compared, infeasible, disagreements, max_gap)};
}

Outcome trivial_identities() {
  // Filter leaves a feasible reference untouched.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  double filter_dev = 0.0;
  for (int i = 0; i < 100; ++i) {
    const VectorXd u_ref = VectorXd::NullaryExpr(4, [&] { return g(rng); });
    CbfConstraintSet cs;
    cs.A = MatrixXd::NullaryExpr(6, 4, [&] { return g(rng); });
    cs.b = cs.A * u_ref - VectorXd::Constant(6, 0.05);
    filter_dev = std::max(filter_dev, (filter_control(u_ref, cs) - u_ref).cwiseAbs().maxCoeff());
  }
  // q^T Q(q) = 0.
  double qtq = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Quat q = random_pose(rng, 3, 0.0).quaternion();
    qtq = std::max(qtq, (q.transpose() * quat_rate_matrix(q)).cwiseAbs().maxCoeff());
  }
  // Sphere pairs against alpha* = d / (R1 + R2), dalpha/dr1 = -n / (R1 + R2).
  double sphere_err = 0.0;
  std::uniform_real_distribution<double> u(0.2, 1.5);
  for (int i = 0; i < 50; ++i) {
    const double r1 = u(rng), r2 = u(rng);
    const Body a{ShapeSpec::sphere(r1), random_pose(rng, 3, 2.0)};
    const Body b{ShapeSpec::sphere(r2), random_pose(rng, 3, 2.0)};
    const Eigen::Vector3d diff = b.pose.position() - a.pose.position();
    const double alpha = diff.norm() / (r1 + r2);
    const Eigen::Vector3d grad = -diff.normalized() / (r1 + r2);
    for (auto m : {MinScaleMethod::SmoothKkt, MinScaleMethod::Conic}) {
      MinScaleOptions o;
      o.method = m;
      const auto res = solve_min_scale(a, b, o);
      const auto j = grad_alpha(res, a, b, m == MinScaleMethod::Conic ? GradMethod::Ift : GradMethod::SmoothLinear);
      sphere_err = std::max({sphere_err, std::abs(res.alpha_star - alpha), (j.d_r1 - grad).cwiseAbs().maxCoeff(),
                             (j.d_r2 + grad).cwiseAbs().maxCoeff(), j.d_q1.cwiseAbs().maxCoeff(),
                             j.d_q2.cwiseAbs().maxCoeff()});
    }
  }
  return {filter_dev <= 1e-8 && qtq <= 1e-15 && sphere_err <= 1e-9,
          fmt("filter |u_safe-u_ref| %.1e (tol 1e-8), |q^T Q| %.1e (tol 1e-15), "
              "sphere alpha*/gradient %.1e (tol 1e-9)",
              filter_dev, qtq, sphere_err)};
}

}  // namespace

int main() {
  report(1, "oracle equivalence", guarded(oracle_equivalence));
  report(2, "gradient correctness", guarded(gradient_correctness));

  ScenarioRun mobile, reach, blocked;
  bool ran = true;
  std::string run_error;
  try {
    mobile = run_file("mobile_robot.yaml");
    reach = run_file("arm_reach.yaml");
    blocked = run_file("arm_blocked.yaml");
  } catch (const std::exception& e) {
    ran = false;
    run_error = std::string("exception: ") + e.what();
  }
  const std::vector<const ScenarioRun*> runs{&mobile, &reach, &blocked};
  if (ran) {
    report(3, "mobile robot", guarded([&] { return mobile_robot(mobile); }));
    report(4, "arm scenarios", guarded([&] { return arm_scenarios(reach, blocked); }));
    report(5, "discrete barrier inequality", guarded([&] { return barrier_inequality(runs); }));
    report(6, "latency", guarded([&] { return latency(runs); }));
  } else {
    for (int id : {3, 4, 5, 6}) report(id, "scenario criteria", {false, run_error});
  }
  report(7, "QP solver oracle", guarded(qp_oracle));
  report(8, "trivial identities", guarded(trivial_identities));
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
