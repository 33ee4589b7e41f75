#include "diffcbf/minscale.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffcbf/active_kkt.hpp"
#include "diffcbf/errors.hpp"

namespace diffcbf {

std::string to_string(MinScaleMethod m) {
  switch (m) {
    case MinScaleMethod::Conic: return "conic";
    case MinScaleMethod::SmoothKkt: return "smooth_kkt";
    case MinScaleMethod::Auto: return "auto";
  }
  return "unknown";
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::InfeasibleNumerics: return "infeasible_numerics";
  }
  return "unknown";
}

namespace {

void condense_duals(const ConeProblem& prob, MinScaleResult& res) {
  res.nu_a = 0.0;
  res.nu_b = 0.0;
  int off = 0;
  for (const auto& blk : prob.blocks) {
    const double nu = -blk.G.col(prob.alpha_index).dot(res.z.segment(off, blk.size()));
    (blk.owner == 0 ? res.nu_a : res.nu_b) += nu;
    off += blk.size();
  }
}

MinScaleResult solve_conic(const Body& a, const Body& b, const MinScaleOptions& opts,
                           const SocpStart* warm) {
  const ConeProblem prob = to_cone_program(a.shape, a.pose, b.shape, b.pose);
  const ConeLayout layout = ConeLayout::from_problem(prob);
  const MatrixXd G = prob.stacked_G();
  const VectorXd h = prob.stacked_h();

  SocpResult sr = solve_socp(G, h, prob.c, layout, opts.socp, warm);
  if (warm != nullptr && sr.status != SocpStatus::Optimal) {
    sr = solve_socp(G, h, prob.c, layout, opts.socp, nullptr);
  }

  MinScaleResult res;
  res.method = MinScaleMethod::Conic;
  res.x = sr.x;
  res.s = sr.s;
  res.z = sr.z;
  res.alpha_star = sr.x[prob.alpha_index];
  res.p_star = sr.x.head(prob.dim);
  res.iterations = sr.iterations;
  res.kkt_residual = std::max({sr.gap, sr.primal_residual, sr.dual_residual});
  switch (sr.status) {
    case SocpStatus::Optimal: res.status = SolveStatus::Optimal; break;
    case SocpStatus::MaxIter: res.status = SolveStatus::MaxIter; break;
    case SocpStatus::NumericalFailure: res.status = SolveStatus::InfeasibleNumerics; break;
  }
  condense_duals(prob, res);
  if (res.optimal()) {
    const ActiveKkt kkt = build_active_kkt(prob, res.x, res.z, opts.dual_threshold);
    res.degenerate_contact = kkt.weakly_active || condition_number(kkt.matrix) > 1e12;
  }
  return res;
}

// Newton's method on the square KKT system of
//   min t  s.t.  F_A(p) <= t,  F_B(p) <= t
// with both constraints active; alpha = sqrt(t) because F is quadratic.
MinScaleResult solve_smooth(const Body& a, const Body& b, const MinScaleOptions& opts) {
  if (!a.shape.is_smooth() || !b.shape.is_smooth()) {
    throw UnsupportedError("smooth_kkt needs sphere/ellipsoid shapes");
  }
  const ConeProblem prob = to_cone_program(a.shape, a.pose, b.shape, b.pose);
  const int d = prob.dim;
  const int n = d + 3;

  VectorXd p = 0.5 * (a.pose.position() + b.pose.position());
  double nu_a = 0.5, nu_b = 0.5;
  double t = std::max(eval_scaling(a.shape, a.pose, p).value, eval_scaling(b.shape, b.pose, p).value);

  auto residual = [&](const VectorXd& pp, double tt, double na, double nb, ScalingEval& ea,
                      ScalingEval& eb) {
    ea = eval_scaling(a.shape, a.pose, pp, ScalingOrder::Hessian);
    eb = eval_scaling(b.shape, b.pose, pp, ScalingOrder::Hessian);
    VectorXd r(n);
    r.head(d) = na * *ea.gradient + nb * *eb.gradient;
    r[d] = na + nb - 1.0;
    r[d + 1] = ea.value - tt;
    r[d + 2] = eb.value - tt;
    return r;
  };
  auto scaled_norm = [&](const VectorXd& r, double tt) {
    return r.lpNorm<Eigen::Infinity>() / std::max(1.0, tt);
  };

  MinScaleResult res;
  res.method = MinScaleMethod::SmoothKkt;
  res.status = SolveStatus::MaxIter;
  ScalingEval ea, eb;
  VectorXd r = residual(p, t, nu_a, nu_b, ea, eb);
  int iter = 0;
  for (; iter < opts.newton_max_iter; ++iter) {
    if (scaled_norm(r, t) <= opts.newton_tol) {
      res.status = SolveStatus::Optimal;
      break;
    }
    MatrixXd jac = MatrixXd::Zero(n, n);
    jac.topLeftCorner(d, d) = nu_a * *ea.hessian + nu_b * *eb.hessian;
    jac.block(0, d + 1, d, 1) = *ea.gradient;
    jac.block(0, d + 2, d, 1) = *eb.gradient;
    jac(d, d + 1) = 1.0;
    jac(d, d + 2) = 1.0;
    jac.block(d + 1, 0, 1, d) = ea.gradient->transpose();
    jac.block(d + 2, 0, 1, d) = eb.gradient->transpose();
    jac(d + 1, d) = -1.0;
    jac(d + 2, d) = -1.0;
    const VectorXd step = jac.partialPivLu().solve(-r);
    if (!step.allFinite()) {
      res.status = SolveStatus::InfeasibleNumerics;
      break;
    }
    // Keep both duals strictly positive.
    double scale = 1.0;
    if (step[d + 1] < 0.0) scale = std::min(scale, -0.99 * nu_a / step[d + 1]);
    if (step[d + 2] < 0.0) scale = std::min(scale, -0.99 * nu_b / step[d + 2]);
    const double merit = r.squaredNorm();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, scale *= 0.5) {
      const VectorXd p_new = p + scale * step.head(d);
      const double t_new = t + scale * step[d];
      const double na_new = nu_a + scale * step[d + 1];
      const double nb_new = nu_b + scale * step[d + 2];
      ScalingEval ea_new, eb_new;
      const VectorXd r_new = residual(p_new, t_new, na_new, nb_new, ea_new, eb_new);
      if (r_new.squaredNorm() < merit || ls == 39) {
        p = p_new;
        t = t_new;
        nu_a = na_new;
        nu_b = nb_new;
        r = r_new;
        ea = ea_new;
        eb = eb_new;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (res.status == SolveStatus::MaxIter && scaled_norm(r, t) <= opts.newton_tol) {
    res.status = SolveStatus::Optimal;
  }
  if (!(t > 0.0) || !p.allFinite()) res.status = SolveStatus::InfeasibleNumerics;

  res.iterations = iter;
  res.kkt_residual = scaled_norm(r, t);
  res.alpha_star = std::sqrt(std::max(t, 0.0));
  res.p_star = p;
  res.nu_a = nu_a;
  res.nu_b = nu_b;

  // Equivalent cone-program point: each SOC dual is nu_k (1, -s1/|s1|)
  // scaled so that its alpha-column contribution equals nu.
  res.x = VectorXd::Zero(prob.num_vars);
  res.x.head(d) = p;
  res.x[d] = res.alpha_star;
  res.s = prob.stacked_h() - prob.stacked_G() * res.x;
  res.z = VectorXd::Zero(prob.num_rows());
  int off = 0;
  for (const auto& blk : prob.blocks) {
    const int k = blk.size() - 1;
    const VectorXd s = res.s.segment(off, blk.size());
    const double nu = blk.owner == 0 ? nu_a : nu_b;
    const double z0 = nu / -blk.G(0, prob.alpha_index);
    const double s1 = s.tail(k).norm();
    res.z[off] = z0;
    if (s1 > 0.0) res.z.segment(off + 1, k) = -z0 * s.tail(k) / s1;
    off += blk.size();
  }
  return res;
}

}  // namespace

MinScaleResult solve_min_scale(const Body& a, const Body& b, const MinScaleOptions& opts,
                               const SocpStart* warm) {
  MinScaleMethod method = opts.method;
  const bool smooth_ok = a.shape.is_smooth() && b.shape.is_smooth();
  if (method == MinScaleMethod::Auto) {
    if (smooth_ok) {
      MinScaleResult res = solve_smooth(a, b, opts);
      if (res.optimal()) return res;
    }
    method = MinScaleMethod::Conic;
  }
  if (method == MinScaleMethod::SmoothKkt) return solve_smooth(a, b, opts);
  return solve_conic(a, b, opts, warm);
}

MinScaleResult MinScaleSolver::solve(const PairKey& key, const Body& a, const Body& b) {
  const SocpStart* warm = nullptr;
  auto it = cache_.find(key);
  if (warm_start_enabled && it != cache_.end()) warm = &it->second;
  MinScaleOptions opts = opts_;
  if (opts.method == MinScaleMethod::Auto && !(a.shape.is_smooth() && b.shape.is_smooth())) {
    opts.method = MinScaleMethod::Conic;
  }
  MinScaleResult res = solve_min_scale(a, b, opts, warm);
  if (res.optimal() && res.method == MinScaleMethod::Conic) {
    cache_[key] = SocpStart{res.x, res.s, res.z};
  }
  return res;
}

// ---------------------------------------------------------------------------

namespace {

// Nelder-Mead on f starting from x0 with initial edge length `step`.
template <class F>
VectorXd nelder_mead(const F& f, const VectorXd& x0, double step, double tol, double& f_best) {
  const int n = static_cast<int>(x0.size());
  std::vector<VectorXd> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1][i] += step;
  for (int i = 0; i <= n; ++i) vals[i] = f(pts[i]);

  std::vector<int> order(n + 1);
  for (int iter = 0; iter < 20000; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return vals[i] < vals[j]; });
    const int best = order.front(), worst = order.back(), second = order[n - 1];
    double size = 0.0;
    for (int i = 0; i <= n; ++i) size = std::max(size, (pts[i] - pts[best]).norm());
    if (size < tol) break;

    VectorXd centroid = VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= n;
    const VectorXd refl = centroid + (centroid - pts[worst]);
    const double f_refl = f(refl);
    if (f_refl < vals[best]) {
      const VectorXd expd = centroid + 2.0 * (centroid - pts[worst]);
      const double f_exp = f(expd);
      if (f_exp < f_refl) {
        pts[worst] = expd;
        vals[worst] = f_exp;
      } else {
        pts[worst] = refl;
        vals[worst] = f_refl;
      }
      continue;
    }
    if (f_refl < vals[second]) {
      pts[worst] = refl;
      vals[worst] = f_refl;
      continue;
    }
    const bool outside = f_refl < vals[worst];
    const VectorXd contr = outside ? VectorXd(centroid + 0.5 * (refl - centroid))
                                   : VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double f_contr = f(contr);
    if (f_contr < std::min(f_refl, vals[worst])) {
      pts[worst] = contr;
      vals[worst] = f_contr;
      continue;
    }
    for (int i = 0; i <= n; ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = f(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  f_best = *it;
  return pts[static_cast<size_t>(it - vals.begin())];
}

}  // namespace

double oracle_min_scale(const Body& a, const Body& b, const OracleOptions& opts) {
  const int d = a.shape.dim();
  if (b.shape.dim() != d) throw DimensionMismatch("oracle pair mixes dimensions");
  auto objective = [&](const VectorXd& p) {
    return std::max(scaling_gauge(a.shape, a.pose, p), scaling_gauge(b.shape, b.pose, p));
  };

  // Any point gives an upper bound alpha_ub; the optimum lies inside both
  // bodies scaled by alpha_ub, hence inside both bounding boxes below.
  const VectorXd mid = 0.5 * (a.pose.position() + b.pose.position());
  const double alpha_ub = objective(mid);
  const double ra = alpha_ub * a.shape.bounding_radius();
  const double rb = alpha_ub * b.shape.bounding_radius();
  VectorXd lo = (a.pose.position().array() - ra).max(b.pose.position().array() - rb);
  VectorXd hi = (a.pose.position().array() + ra).min(b.pose.position().array() + rb);
  for (int i = 0; i < d; ++i) {
    if (lo[i] > hi[i]) std::swap(lo[i], hi[i]);
  }

  const int g = std::max(2, opts.grid_points);
  VectorXd best_p = mid;
  double best = alpha_ub;
  VectorXd p(d);
  std::vector<int> idx(d, 0);
  while (true) {
    for (int i = 0; i < d; ++i) p[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / (g - 1);
    const double v = objective(p);
    if (v < best) {
      best = v;
      best_p = p;
    }
    int k = 0;
    while (k < d && ++idx[k] == g) idx[k++] = 0;
    if (k == d) break;
  }

  double step = std::max((hi - lo).maxCoeff() / (g - 1), 1e-6);
  for (int restart = 0; restart < opts.max_restarts; ++restart) {
    double val = best;
    const VectorXd cand = nelder_mead(objective, best_p, step, opts.tol * 1e-2, val);
    const double improvement = best - val;
    if (val < best) {
      best = val;
      best_p = cand;
    }
    if (improvement <= 1e-14 && step <= opts.tol) break;
    step = std::max(0.5 * step, opts.tol);
  }
  return best;
}

}  // namespace diffcbf
