#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "diffcbf/shapes.hpp"
#include "diffcbf/socp.hpp"

namespace diffcbf {

/// A posed convex body.
struct Body {
  ShapeSpec shape = ShapeSpec::sphere(1.0);
  Pose pose = Pose::identity(3);
};

enum class MinScaleMethod { Conic, SmoothKkt, Auto };
enum class SolveStatus { Optimal, MaxIter, InfeasibleNumerics };

std::string to_string(MinScaleMethod m);
std::string to_string(SolveStatus s);

/// Optimum of  min alpha  s.t.  p in A(alpha), p in B(alpha).
struct MinScaleResult {
  double alpha_star = 0.0;
  VectorXd p_star;
  /// Duals of the two scaling constraints; nu_a + nu_b = 1.
  double nu_a = 0.0;
  double nu_b = 0.0;
  SolveStatus status = SolveStatus::InfeasibleNumerics;
  int iterations = 0;
  double kkt_residual = 0.0;
  MinScaleMethod method = MinScaleMethod::Conic;
  bool degenerate_contact = false;

  /// Cone-program primal [p; alpha; aux], slack and per-row duals. The
  /// smooth path fills these from its own optimum.
  VectorXd x, s, z;

  bool optimal() const { return status == SolveStatus::Optimal; }
  bool colliding() const { return alpha_star <= 1.0; }
};

struct MinScaleOptions {
  MinScaleMethod method = MinScaleMethod::Auto;
  SocpSettings socp{};
  int newton_max_iter = 60;
  double newton_tol = 1e-13;
  double dual_threshold = 1e-8;
};

MinScaleResult solve_min_scale(const Body& a, const Body& b, const MinScaleOptions& opts = {},
                               const SocpStart* warm = nullptr);

/// Solver holding per-pair warm starts for the conic path. Not thread safe;
/// use one instance per thread.
class MinScaleSolver {
 public:
  using PairKey = std::pair<int, int>;

  explicit MinScaleSolver(MinScaleOptions opts = {}) : opts_(std::move(opts)) {}

  MinScaleResult solve(const PairKey& key, const Body& a, const Body& b);
  MinScaleResult solve(const Body& a, const Body& b) { return solve_min_scale(a, b, opts_); }

  void clear() { cache_.clear(); }
  const MinScaleOptions& options() const { return opts_; }
  bool warm_start_enabled = true;

 private:
  MinScaleOptions opts_;
  std::map<PairKey, SocpStart> cache_;
};

struct OracleOptions {
  int grid_points = 24;   // per axis
  double tol = 1e-7;      // simplex size at which refinement stops
  int max_restarts = 40;
};

/// min_p max(g_A(p), g_B(p)) with g the scaling gauge, by grid search over a
/// box that must contain the optimum followed by restarted Nelder-Mead.
double oracle_min_scale(const Body& a, const Body& b, const OracleOptions& opts = {});

}  // namespace diffcbf
