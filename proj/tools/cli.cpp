#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>

#include "diffcbf/config_io.hpp"
#include "diffcbf/diffgrad.hpp"
#include "diffcbf/gradcheck.hpp"

namespace diffcbf::cli {

namespace {

using nlohmann::json;

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

int cmd_simulate(const std::string& file, const std::string& out_flag, std::ostream& out,
                 std::ostream& err) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario(file);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::string dir = out_flag;
  if (dir.empty()) {
    const char* env = std::getenv(kOutDirEnv);
    dir = env && *env ? env : ".";
  }
  TrajectoryLog log;
  try {
    log = run_scenario(cfg);
  } catch (const std::exception& e) {
    err << "error: simulation failed: " << e.what() << "\n";
    return 2;
  }
  const std::filesystem::path base(dir);
  std::error_code ec;
  std::filesystem::create_directories(base, ec);
  const auto csv_path = base / "trajectory.csv";
  const auto json_path = base / "summary.json";
  std::ofstream csv(csv_path);
  if (!csv) {
    err << "error: cannot write " << csv_path.string() << "\n";
    return 2;
  }
  write_trajectory_csv(log, csv);
  json summary = json::parse(summary_json(log));
  summary["outputs"] = {{"trajectory", csv_path.string()}, {"summary", json_path.string()}};
  std::ofstream js(json_path);
  if (!js) {
    err << "error: cannot write " << json_path.string() << "\n";
    return 2;
  }
  js << summary.dump(2) << "\n";
  out << summary.dump(2) << "\n";
  return 0;
}

int cmd_collide(const std::string& file, const std::string& grad, std::ostream& out,
                std::ostream& err) {
  PairSpec spec;
  try {
    spec = load_pair(file);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  MinScaleOptions opts;
  opts.method = spec.method;
  const MinScaleResult r = solve_min_scale(spec.a, spec.b, opts);
  json j;
  j["alpha_star"] = r.alpha_star;
  j["colliding"] = r.colliding();
  j["p_star"] = to_std(r.p_star);
  j["nu_a"] = r.nu_a;
  j["nu_b"] = r.nu_b;
  j["status"] = to_string(r.status);
  j["solver"] = to_string(r.method);
  j["iterations"] = r.iterations;
  j["degenerate_contact"] = r.degenerate_contact;
  if (!r.optimal()) {
    out << j.dump(2) << "\n";
    err << "error: solve did not converge\n";
    return 2;
  }
  GradMethod gm = GradMethod::Ift;
  if (grad == "smooth_linear" ||
      (grad == "auto" && spec.a.shape.is_smooth() && spec.b.shape.is_smooth())) {
    gm = GradMethod::SmoothLinear;
  }
  GradOptions gopts;
  gopts.best_effort = true;
  try {
    const AlphaJacobian jac = grad_alpha(r, spec.a, spec.b, gm, gopts);
    j["jacobian"] = {{"method", to_string(jac.method)},
                     {"d_r1", to_std(jac.d_r1)},
                     {"d_q1", to_std(jac.d_q1)},
                     {"d_r2", to_std(jac.d_r2)},
                     {"d_q2", to_std(jac.d_q2)},
                     {"full", to_std(jac.flat())},
                     {"degenerate", jac.degenerate}};
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_gradcheck(int seeds, std::uint64_t seed, double fd_tol, double method_tol,
                  std::ostream& out) {
  const GradCheckReport rep = run_gradcheck(seeds, seed);
  json j;
  j["pairs"] = rep.pairs;
  j["seed"] = seed;
  j["max_fd_rel_error"] = rep.max_fd_error;
  j["max_ift_fd_rel_error"] = rep.max_ift_fd_error;
  j["max_ift_vs_smooth_rel_error"] = rep.max_method_gap;
  j["non_finite"] = rep.non_finite;
  j["fd_tolerance"] = fd_tol;
  j["method_tolerance"] = method_tol;
  j["passed"] = rep.passed(fd_tol, method_tol);
  out << j.dump(2) << "\n";
  return rep.passed(fd_tol, method_tol) ? 0 : 1;
}

int cmd_bench(int pairs, std::uint64_t seed, int dim, std::ostream& out) {
  using clock = std::chrono::steady_clock;
  std::mt19937_64 rng(seed);
  const std::vector<ShapeKind> kinds{ShapeKind::Sphere, ShapeKind::Ellipsoid, ShapeKind::Capsule,
                                     ShapeKind::Polytope};
  std::vector<double> us;
  us.reserve(pairs);
  int failures = 0;
  GradOptions gopts;
  gopts.best_effort = true;
  for (int k = 0; k < pairs; ++k) {
    const auto [a, b] = random_pair(rng, kinds, dim, 2.0);
    const bool smooth = a.shape.is_smooth() && b.shape.is_smooth();
    const auto t0 = clock::now();
    const MinScaleResult r = solve_min_scale(a, b);
    bool ok = r.optimal();
    if (ok) {
      try {
        grad_alpha(r, a, b, smooth ? GradMethod::SmoothLinear : GradMethod::Ift, gopts);
      } catch (const Error&) {
        ok = false;
      }
    }
    us.push_back(std::chrono::duration<double, std::micro>(clock::now() - t0).count());
    failures += ok ? 0 : 1;
  }
  std::sort(us.begin(), us.end());
  auto pct = [&](double p) {
    if (us.empty()) return 0.0;
    return us[std::min(us.size() - 1, static_cast<std::size_t>(p * (us.size() - 1) + 0.5))];
  };
  double sum = 0.0;
  for (double v : us) sum += v;
  json j;
  j["pairs"] = pairs;
  j["seed"] = seed;
  j["dimension"] = dim;
  j["failures"] = failures;
  j["latency_us"] = {{"min", pct(0.0)},  {"p50", pct(0.5)},  {"p90", pct(0.9)},
                     {"p99", pct(0.99)}, {"max", pct(1.0)},
                     {"mean", us.empty() ? 0.0 : sum / us.size()}};
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Minimum-scaling collision queries and CBF safety-filter simulation", "diffcbf"};
  app.require_subcommand(1);

  std::string sim_file, sim_out;
  auto* sim = app.add_subcommand("simulate", "run a scenario and write trajectory.csv and summary.json");
  sim->add_option("scenario", sim_file, "scenario file (YAML or JSON)")->required();
  sim->add_option("--out", sim_out,
                  std::string("output directory (default: $") + kOutDirEnv + " or .)");

  std::string pair_file, grad = "auto";
  auto* col = app.add_subcommand("collide", "solve one pair and print alpha*, p*, duals and the Jacobian");
  col->add_option("pair", pair_file, "pair file (YAML or JSON)")->required();
  col->add_option("--grad", grad, "gradient method")
      ->check(CLI::IsMember({"auto", "ift", "smooth_linear"}));

  int gc_seeds = 100;
  std::uint64_t gc_seed = 0;
  double fd_tol = 1e-4, method_tol = 1e-6;
  auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gc->add_option("--seeds", gc_seeds, "number of random pairs")->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "first seed");
  gc->add_option("--fd-tol", fd_tol, "relative tolerance against finite differences");
  gc->add_option("--method-tol", method_tol, "relative tolerance between ift and smooth_linear");

  int bench_pairs = 1000, bench_dim = 3;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "time solve + gradient on random pairs");
  bench->add_option("--pairs", bench_pairs, "number of random pairs")->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "random seed");
  bench->add_option("--dim", bench_dim, "spatial dimension")->check(CLI::IsMember({2, 3}));

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_file, sim_out, out, err);
    if (col->parsed()) return cmd_collide(pair_file, grad, out, err);
    if (gc->parsed()) return cmd_gradcheck(gc_seeds, gc_seed, fd_tol, method_tol, out);
    if (bench->parsed()) return cmd_bench(bench_pairs, bench_seed, bench_dim, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace diffcbf::cli
