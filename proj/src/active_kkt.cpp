#include "diffcbf/active_kkt.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace diffcbf {

double condition_number(const MatrixXd& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double smallest = sv[sv.size() - 1];
  if (!(smallest > 0.0)) return std::numeric_limits<double>::infinity();
  return sv[0] / smallest;
}

ActiveKkt build_active_kkt(const ConeProblem& prob, const VectorXd& x, const VectorXd& z,
                           double dual_threshold) {
  const int n = prob.num_vars;
  const int n_psi = prob.param_counts[0] + prob.param_counts[1];
  const double weak_tol = 1e-7;

  MatrixXd hess = MatrixXd::Zero(n, n);
  MatrixXd hess_psi = MatrixXd::Zero(n, n_psi);  // sum nu d2phi/(dx dpsi)
  std::vector<VectorXd> jac_rows;
  std::vector<VectorXd> dphi_dpsi;

  ActiveKkt out;
  out.num_vars = n;
  out.envelope = VectorXd::Zero(n_psi);

  int off = 0;
  for (const auto& blk : prob.blocks) {
    const int rows = blk.size();
    const int psi_off = blk.owner == 0 ? 0 : prob.param_counts[0];
    const int n_params = static_cast<int>(blk.dG.size());
    const VectorXd s = blk.h - blk.G * x;
    const VectorXd zb = z.segment(off, rows);

    // ds/dpsi_j = dh_j - dG_j x, and the envelope term.
    MatrixXd ds_dpsi(rows, n_params);
    for (int j = 0; j < n_params; ++j) {
      ds_dpsi.col(j) = blk.dh[j] - blk.dG[j] * x;
      out.envelope[psi_off + j] -= zb.dot(ds_dpsi.col(j));
    }

    if (blk.kind == ConeKind::Orthant) {
      for (int i = 0; i < rows; ++i) {
        if (std::abs(s[i]) < weak_tol && std::abs(zb[i]) < weak_tol) out.weakly_active = true;
        if (zb[i] <= dual_threshold) continue;
        // phi = -s_i: dphi/dx = G_i, no curvature.
        jac_rows.push_back(blk.G.row(i).transpose());
        VectorXd dpsi = VectorXd::Zero(n_psi);
        for (int j = 0; j < n_params; ++j) {
          dpsi[psi_off + j] = -ds_dpsi(i, j);
          // d/dpsi of (G_i^T nu): mixed term.
          hess_psi.col(psi_off + j) += zb[i] * blk.dG[j].row(i).transpose();
        }
        dphi_dpsi.push_back(dpsi);
        out.multipliers.push_back(zb[i]);
      }
    } else {
      const int k = rows - 1;
      const double s1_norm = s.tail(k).norm();
      if (s.norm() < weak_tol && zb.norm() < weak_tol) out.weakly_active = true;
      if (zb[0] > dual_threshold && s1_norm > 0.0) {
        const double nu = zb[0];
        // grad_s phi = (-1, u), hess_s phi = blkdiag(0, (I - u u^T)/|s1|).
        VectorXd grad_s(rows);
        grad_s[0] = -1.0;
        const VectorXd u = s.tail(k) / s1_norm;
        grad_s.tail(k) = u;
        MatrixXd hess_s = MatrixXd::Zero(rows, rows);
        hess_s.bottomRightCorner(k, k) = (MatrixXd::Identity(k, k) - u * u.transpose()) / s1_norm;
        // s = h - G x  =>  ds/dx = -G.
        jac_rows.push_back(-blk.G.transpose() * grad_s);
        hess += nu * blk.G.transpose() * hess_s * blk.G;
        VectorXd dpsi = VectorXd::Zero(n_psi);
        for (int j = 0; j < n_params; ++j) {
          dpsi[psi_off + j] = grad_s.dot(ds_dpsi.col(j));
          // d/dpsi_j of (-G^T grad_s) = -dG_j^T grad_s - G^T hess_s ds/dpsi_j.
          hess_psi.col(psi_off + j) +=
              nu * (-blk.dG[j].transpose() * grad_s - blk.G.transpose() * hess_s * ds_dpsi.col(j));
        }
        dphi_dpsi.push_back(dpsi);
        out.multipliers.push_back(nu);
      }
    }
    off += rows;
  }

  const int n_act = static_cast<int>(jac_rows.size());
  out.num_active = n_act;
  out.matrix = MatrixXd::Zero(n + n_act, n + n_act);
  out.matrix.topLeftCorner(n, n) = hess;
  out.rhs = MatrixXd::Zero(n + n_act, n_psi);
  out.rhs.topRows(n) = -hess_psi;
  for (int a = 0; a < n_act; ++a) {
    out.matrix.block(n + a, 0, 1, n) = jac_rows[a].transpose();
    out.matrix.block(0, n + a, n, 1) = jac_rows[a];
    out.rhs.row(n + a) = -dphi_dpsi[a].transpose();
  }
  return out;
}

}  // namespace diffcbf
