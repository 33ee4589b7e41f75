#include "diffcbf/gradcheck.hpp"

#include <cmath>
#include <numbers>

#include "diffcbf/errors.hpp"
#include "diffcbf/kinematics.hpp"

namespace diffcbf {

ShapeSpec random_shape(std::mt19937_64& rng, ShapeKind kind, int dim) {
  std::uniform_real_distribution<double> size(0.2, 1.0);
  switch (kind) {
    case ShapeKind::Sphere:
      return ShapeSpec::sphere(size(rng), dim);
    case ShapeKind::Ellipsoid: {
      VectorXd ax(dim);
      for (int i = 0; i < dim; ++i) ax[i] = size(rng);
      return ShapeSpec::ellipsoid(ax);
    }
    case ShapeKind::Capsule: {
      const double r = 0.5 * size(rng);
      return ShapeSpec::capsule(r, 2.0 * size(rng), dim);
    }
    case ShapeKind::Polytope: {
      // Either a box or a random polygon/polyhedron around the origin.
      if (std::uniform_int_distribution<int>(0, 1)(rng) == 0) {
        VectorXd h(dim);
        for (int i = 0; i < dim; ++i) h[i] = size(rng);
        return ShapeSpec::box(h);
      }
      const int n = dim == 2 ? 6 : 12;
      std::normal_distribution<double> g(0.0, 1.0);
      for (;;) {
        MatrixXd a(n, dim);
        VectorXd b(n);
        for (int i = 0; i < n; ++i) {
          VectorXd v(dim);
          for (int k = 0; k < dim; ++k) v[k] = g(rng);
          a.row(i) = v.normalized().transpose();
          b[i] = size(rng);
        }
        try {
          return ShapeSpec::polytope(a, b);
        } catch (const ValidationError&) {
          // unbounded draw, retry
        }
      }
    }
  }
  throw ValidationError("unknown shape kind");
}

Pose random_pose(std::mt19937_64& rng, int dim, double extent) {
  std::uniform_real_distribution<double> pos(-extent, extent);
  if (dim == 2) {
    std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
    const double x = pos(rng), y = pos(rng);
    return Pose::planar(x, y, ang(rng));
  }
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d r;
  for (int i = 0; i < 3; ++i) r[i] = pos(rng);
  Quat q;
  for (int i = 0; i < 4; ++i) q[i] = g(rng);
  return Pose::spatial(r, q.normalized());
}

std::pair<Body, Body> random_pair(std::mt19937_64& rng, const std::vector<ShapeKind>& kinds,
                                  int dim, double extent) {
  std::uniform_int_distribution<std::size_t> pick(0, kinds.size() - 1);
  Body a{random_shape(rng, kinds[pick(rng)], dim), random_pose(rng, dim, extent)};
  Body b{random_shape(rng, kinds[pick(rng)], dim), random_pose(rng, dim, extent)};
  return {a, b};
}

VectorXd tangent_gradient(const AlphaJacobian& jac, const Pose& pa, const Pose& pb) {
  const int d = static_cast<int>(jac.d_r1.size());
  if (d == 2) {
    VectorXd out(6);
    out << jac.d_r1, jac.d_q1, jac.d_r2, jac.d_q2;
    return out;
  }
  VectorXd out(12);
  out << jac.d_r1, 0.5 * quat_rate_matrix(pa.quaternion()).transpose() * jac.d_q1, jac.d_r2,
      0.5 * quat_rate_matrix(pb.quaternion()).transpose() * jac.d_q2;
  return out;
}

namespace {

Pose perturb(const Pose& p, int k, double h) {
  const int d = p.dim();
  if (k < d) {
    VectorXd params = p.params();
    params[k] += h;
    return Pose::from_params(d, params);
  }
  if (d == 2) {
    VectorXd params = p.params();
    params[2] += h;
    return Pose::from_params(2, params);
  }
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();
  axis[k - d] = 1.0;
  const Quat q = quat_multiply(p.quaternion(), quat_from_axis_angle(axis, h));
  return Pose::spatial(p.position(), q.normalized());
}

double alpha_of(const Body& a, const Body& b, const MinScaleOptions& opts) {
  const MinScaleResult r = solve_min_scale(a, b, opts);
  if (!r.optimal()) throw Error("finite-difference solve failed");
  return r.alpha_star;
}

}  // namespace

VectorXd fd_tangent_gradient(const Body& a, const Body& b, double step,
                             const MinScaleOptions& opts) {
  const int d = a.pose.dim();
  const int n_body = d == 2 ? 3 : 6;
  VectorXd out(2 * n_body);
  for (int side = 0; side < 2; ++side) {
    for (int k = 0; k < n_body; ++k) {
      Body ap = a, am = a, bp = b, bm = b;
      if (side == 0) {
        ap.pose = perturb(a.pose, k, step);
        am.pose = perturb(a.pose, k, -step);
      } else {
        bp.pose = perturb(b.pose, k, step);
        bm.pose = perturb(b.pose, k, -step);
      }
      out[side * n_body + k] = (alpha_of(ap, bp, opts) - alpha_of(am, bm, opts)) / (2.0 * step);
    }
  }
  return out;
}

double relative_error(const VectorXd& x, const VectorXd& y, double floor) {
  return (x - y).lpNorm<Eigen::Infinity>() / std::max(y.lpNorm<Eigen::Infinity>(), floor);
}

GradCheckReport run_gradcheck(int seeds, std::uint64_t base) {
  GradCheckReport rep;
  const std::vector<ShapeKind> kinds{ShapeKind::Sphere, ShapeKind::Ellipsoid};
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(base + static_cast<std::uint64_t>(s));
    const auto [a, b] = random_pair(rng, kinds, 3, 2.0);
    const MinScaleResult res = solve_min_scale(a, b);
    const MinScaleResult conic = solve_min_scale(a, b, MinScaleOptions{MinScaleMethod::Conic});
    const AlphaJacobian js = grad_alpha(res, a, b, GradMethod::SmoothLinear);
    const AlphaJacobian ji = grad_alpha(conic, a, b, GradMethod::Ift);
    const VectorXd ts = tangent_gradient(js, a.pose, b.pose);
    const VectorXd ti = tangent_gradient(ji, a.pose, b.pose);
    const VectorXd fd = fd_tangent_gradient(a, b);
    ++rep.pairs;
    if (!js.all_finite() || !ji.all_finite()) {
      ++rep.non_finite;
      continue;
    }
    rep.max_fd_error = std::max(rep.max_fd_error, relative_error(ts, fd));
    rep.max_ift_fd_error = std::max(rep.max_ift_fd_error, relative_error(ti, fd));
    rep.max_method_gap = std::max(rep.max_method_gap, relative_error(ti, ts));
  }
  return rep;
}

}  // namespace diffcbf
