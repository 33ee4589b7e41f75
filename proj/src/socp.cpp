#include "diffcbf/socp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace diffcbf {

int ConeLayout::size() const {
  int n = 0;
  for (const auto& b : blocks) n += b.size;
  return n;
}

int ConeLayout::degree() const {
  int n = 0;
  for (const auto& b : blocks) n += b.kind == ConeKind::Orthant ? b.size : 1;
  return n;
}

ConeLayout ConeLayout::from_problem(const ConeProblem& prob) {
  ConeLayout k;
  for (const auto& b : prob.blocks) k.blocks.push_back({b.kind, b.size()});
  return k;
}

namespace cone_ops {

double min_eigenvalue(const ConeLayout& k, const VectorXd& x) {
  double m = std::numeric_limits<double>::infinity();
  int off = 0;
  for (const auto& b : k.blocks) {
    if (b.kind == ConeKind::Orthant) {
      m = std::min(m, x.segment(off, b.size).minCoeff());
    } else {
      m = std::min(m, x[off] - x.segment(off + 1, b.size - 1).norm());
    }
    off += b.size;
  }
  return m;
}

namespace {
void add_identity(const ConeLayout& k, VectorXd& x, double t) {
  int off = 0;
  for (const auto& b : k.blocks) {
    if (b.kind == ConeKind::Orthant) {
      x.segment(off, b.size).array() += t;
    } else {
      x[off] += t;
    }
    off += b.size;
  }
}

VectorXd identity(const ConeLayout& k) {
  VectorXd e = VectorXd::Zero(k.size());
  add_identity(k, e, 1.0);
  return e;
}

double soc_max_step(const VectorXd& x, const VectorXd& dx) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto x1 = x.tail(x.size() - 1);
  const auto d1 = dx.tail(dx.size() - 1);
  const double a = dx[0] * dx[0] - d1.squaredNorm();
  const double b = x[0] * dx[0] - x1.dot(d1);
  const double c = x[0] * x[0] - x1.squaredNorm();
  if (c <= 0.0) return 0.0;
  if (std::abs(a) < 1e-300) return b < 0.0 ? -c / (2.0 * b) : inf;
  const double disc = b * b - a * c;
  if (disc < 0.0) return inf;
  const double q = -(b + std::copysign(std::sqrt(disc), b));
  double t1 = q / a;
  double t2 = q != 0.0 ? c / q : inf;
  double t = inf;
  if (t1 > 0.0) t = std::min(t, t1);
  if (t2 > 0.0) t = std::min(t, t2);
  return t;
}
}  // namespace

VectorXd jordan_product(const ConeLayout& k, const VectorXd& u, const VectorXd& v) {
  VectorXd out(u.size());
  int off = 0;
  for (const auto& b : k.blocks) {
    if (b.kind == ConeKind::Orthant) {
      out.segment(off, b.size) = u.segment(off, b.size).cwiseProduct(v.segment(off, b.size));
    } else {
      const int n = b.size - 1;
      out[off] = u.segment(off, b.size).dot(v.segment(off, b.size));
      out.segment(off + 1, n) = u[off] * v.segment(off + 1, n) + v[off] * u.segment(off + 1, n);
    }
    off += b.size;
  }
  return out;
}

VectorXd jordan_divide(const ConeLayout& k, const VectorXd& u, const VectorXd& w) {
  VectorXd out(u.size());
  int off = 0;
  for (const auto& b : k.blocks) {
    if (b.kind == ConeKind::Orthant) {
      out.segment(off, b.size) = w.segment(off, b.size).cwiseQuotient(u.segment(off, b.size));
    } else {
      const int n = b.size - 1;
      const auto u1 = u.segment(off + 1, n);
      const auto w1 = w.segment(off + 1, n);
      const double det = u[off] * u[off] - u1.squaredNorm();
      const double v0 = (u[off] * w[off] - u1.dot(w1)) / det;
      out[off] = v0;
      out.segment(off + 1, n) = (w1 - v0 * u1) / u[off];
    }
    off += b.size;
  }
  return out;
}

double max_step(const ConeLayout& k, const VectorXd& x, const VectorXd& dx) {
  double t = std::numeric_limits<double>::infinity();
  int off = 0;
  for (const auto& b : k.blocks) {
    if (b.kind == ConeKind::Orthant) {
      for (int i = off; i < off + b.size; ++i) {
        if (dx[i] < 0.0) t = std::min(t, -x[i] / dx[i]);
      }
    } else {
      t = std::min(t, soc_max_step(x.segment(off, b.size), dx.segment(off, b.size)));
    }
    off += b.size;
  }
  return t;
}

void nt_scaling(const ConeLayout& k, const VectorXd& s, const VectorXd& z, MatrixXd& w,
                MatrixXd& w_inv) {
  const int m = k.size();
  w = MatrixXd::Zero(m, m);
  w_inv = MatrixXd::Zero(m, m);
  int off = 0;
  for (const auto& b : k.blocks) {
    if (b.kind == ConeKind::Orthant) {
      for (int i = off; i < off + b.size; ++i) {
        const double d = std::sqrt(s[i] / z[i]);
        w(i, i) = d;
        w_inv(i, i) = 1.0 / d;
      }
    } else {
      const int n = b.size - 1;
      const VectorXd sb = s.segment(off, b.size);
      const VectorXd zb = z.segment(off, b.size);
      const double s_det = std::sqrt(sb[0] * sb[0] - sb.tail(n).squaredNorm());
      const double z_det = std::sqrt(zb[0] * zb[0] - zb.tail(n).squaredNorm());
      const VectorXd s_bar = sb / s_det;
      const VectorXd z_bar = zb / z_det;
      const double gamma = std::sqrt(0.5 * (1.0 + s_bar.dot(z_bar)));
      VectorXd wb(b.size);
      wb[0] = (s_bar[0] + z_bar[0]) / (2.0 * gamma);
      wb.tail(n) = (s_bar.tail(n) - z_bar.tail(n)) / (2.0 * gamma);
      const double eta = std::sqrt(s_det / z_det);

      MatrixXd blk(b.size, b.size);
      blk(0, 0) = wb[0];
      blk.block(0, 1, 1, n) = wb.tail(n).transpose();
      blk.block(1, 0, n, 1) = wb.tail(n);
      blk.block(1, 1, n, n) =
          MatrixXd::Identity(n, n) + wb.tail(n) * wb.tail(n).transpose() / (1.0 + wb[0]);
      MatrixXd inv = blk;
      inv.block(0, 1, 1, n) *= -1.0;
      inv.block(1, 0, n, 1) *= -1.0;
      w.block(off, off, b.size, b.size) = eta * blk;
      w_inv.block(off, off, b.size, b.size) = inv / eta;
    }
    off += b.size;
  }
}

}  // namespace cone_ops

namespace {

using namespace cone_ops;

struct Residuals {
  VectorXd rd, rp;
  double gap, pres, dres;
};

Residuals residuals(const MatrixXd& G, const VectorXd& h, const VectorXd& c, const VectorXd& x,
                    const VectorXd& s, const VectorXd& z) {
  Residuals r;
  r.rd = G.transpose() * z + c;
  r.rp = G * x + s - h;
  r.gap = s.dot(z);
  r.pres = r.rp.lpNorm<Eigen::Infinity>() / (1.0 + h.lpNorm<Eigen::Infinity>());
  r.dres = r.rd.lpNorm<Eigen::Infinity>() / (1.0 + c.lpNorm<Eigen::Infinity>());
  return r;
}

void push_interior(const ConeLayout& k, VectorXd& v, double margin) {
  const double lam = min_eigenvalue(k, v);
  if (lam < margin) add_identity(k, v, margin - lam);
}

}  // namespace

SocpResult solve_socp(const MatrixXd& G, const VectorXd& h, const VectorXd& c,
                      const ConeLayout& cones, const SocpSettings& settings,
                      const SocpStart* warm) {
  const int n = static_cast<int>(G.cols());
  const int m = static_cast<int>(G.rows());
  const int degree = cones.degree();

  SocpResult res;
  VectorXd x, s, z;

  if (warm != nullptr && warm->x.size() == n && warm->z.size() == m) {
    x = warm->x;
    s = h - G * x;
    z = warm->z;
    const double scale = std::max(1.0, z.lpNorm<Eigen::Infinity>());
    push_interior(cones, s, 1e-4);
    push_interior(cones, z, 1e-4 * scale);
  } else {
    // Least-squares primal point and least-norm dual point, then shifted
    // into the cone interior.
    MatrixXd kkt = MatrixXd::Zero(n + m, n + m);
    kkt.topRightCorner(n, m) = G.transpose();
    kkt.bottomLeftCorner(m, n) = G;
    kkt.bottomRightCorner(m, m) = -MatrixXd::Identity(m, m);
    Eigen::PartialPivLU<MatrixXd> lu(kkt);
    VectorXd rhs = VectorXd::Zero(n + m);
    rhs.tail(m) = h;
    VectorXd sol = lu.solve(rhs);
    x = sol.head(n);
    s = -sol.tail(m);
    rhs.setZero();
    rhs.head(n) = -c;
    sol = lu.solve(rhs);
    z = sol.tail(m);
    const double ts = -min_eigenvalue(cones, s);
    if (ts >= -1e-8 * std::max(s.norm(), 1.0)) add_identity(cones, s, 1.0 + ts);
    const double tz = -min_eigenvalue(cones, z);
    if (tz >= -1e-8 * std::max(z.norm(), 1.0)) add_identity(cones, z, 1.0 + tz);
  }

  const VectorXd e = identity(cones);
  MatrixXd w, w_inv;
  MatrixXd kkt = MatrixXd::Zero(n + m, n + m);
  kkt.topRightCorner(n, m) = G.transpose();
  kkt.bottomLeftCorner(m, n) = G;

  auto finish = [&](SocpStatus status, int iters) {
    const Residuals r = residuals(G, h, c, x, s, z);
    res.status = status;
    res.x = x;
    res.s = s;
    res.z = z;
    res.iterations = iters;
    res.gap = r.gap;
    res.primal_residual = r.pres;
    res.dual_residual = r.dres;
    return res;
  };

  for (int iter = 0; iter < settings.max_iter; ++iter) {
    const Residuals r = residuals(G, h, c, x, s, z);
    if (r.gap <= settings.tol && r.pres <= settings.tol && r.dres <= settings.tol) {
      return finish(SocpStatus::Optimal, iter);
    }
    const double mu = r.gap / degree;

    nt_scaling(cones, s, z, w, w_inv);
    const VectorXd lambda = w * z;
    kkt.bottomRightCorner(m, m) = -w * w;
    Eigen::PartialPivLU<MatrixXd> lu(kkt);

    // Solves the linearized system for a complementarity target d_s.
    auto newton = [&](const VectorXd& ds, VectorXd& dx, VectorXd& dsv, VectorXd& dz) {
      const VectorXd u = jordan_divide(cones, lambda, ds);
      VectorXd rhs(n + m);
      rhs.head(n) = -r.rd;
      rhs.tail(m) = -r.rp - w * u;
      VectorXd sol = lu.solve(rhs);
      // One step of iterative refinement.
      sol += lu.solve(rhs - kkt * sol);
      dx = sol.head(n);
      dz = sol.tail(m);
      dsv = w * (u - w * dz);
    };

    VectorXd dx_a, ds_a, dz_a;
    const VectorXd lam_sq = jordan_product(cones, lambda, lambda);
    newton(-lam_sq, dx_a, ds_a, dz_a);
    const double step_a = std::min(1.0, std::min(max_step(cones, s, ds_a), max_step(cones, z, dz_a)));
    const double rho = (s + step_a * ds_a).dot(z + step_a * dz_a) / r.gap;
    const double sigma = std::pow(std::clamp(rho, 0.0, 1.0), 3);

    const VectorXd corr = jordan_product(cones, w_inv * ds_a, w * dz_a);
    VectorXd dx, ds, dz;
    newton(-lam_sq - corr + sigma * mu * e, dx, ds, dz);
    const double step_max = std::min(max_step(cones, s, ds), max_step(cones, z, dz));
    const double step = std::min(1.0, settings.step_fraction * step_max);
    if (!(step > 1e-14) || !dx.allFinite() || !dz.allFinite()) {
      return finish(SocpStatus::NumericalFailure, iter);
    }
    x += step * dx;
    s += step * ds;
    z += step * dz;
  }
  const Residuals r = residuals(G, h, c, x, s, z);
  if (r.gap <= settings.tol && r.pres <= settings.tol && r.dres <= settings.tol) {
    return finish(SocpStatus::Optimal, settings.max_iter);
  }
  return finish(SocpStatus::MaxIter, settings.max_iter);
}

}  // namespace diffcbf
