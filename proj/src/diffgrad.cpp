#include "diffcbf/diffgrad.hpp"

#include <Eigen/Dense>

#include "diffcbf/active_kkt.hpp"
#include "diffcbf/errors.hpp"

namespace diffcbf {

std::string to_string(GradMethod m) {
  return m == GradMethod::Ift ? "ift" : "smooth_linear";
}

VectorXd AlphaJacobian::flat() const {
  VectorXd out(d_r1.size() + d_q1.size() + d_r2.size() + d_q2.size());
  out << d_r1, d_q1, d_r2, d_q2;
  return out;
}

VectorXd AlphaJacobian::body(int index) const {
  const VectorXd& r = index == 0 ? d_r1 : d_r2;
  const VectorXd& q = index == 0 ? d_q1 : d_q2;
  VectorXd out(r.size() + q.size());
  out << r, q;
  return out;
}

bool AlphaJacobian::all_finite() const { return flat().allFinite(); }

namespace {

AlphaJacobian split(const VectorXd& grad, int dim, int n_orient, GradMethod method) {
  AlphaJacobian jac;
  jac.method = method;
  const int n_mu = dim + n_orient;
  jac.d_r1 = grad.segment(0, dim);
  jac.d_q1 = grad.segment(dim, n_orient);
  jac.d_r2 = grad.segment(n_mu, dim);
  jac.d_q2 = grad.segment(n_mu + dim, n_orient);
  return jac;
}

AlphaJacobian grad_ift(const MinScaleResult& res, const Body& a, const Body& b,
                       const GradOptions& opts) {
  const ConeProblem prob = to_cone_program(a.shape, a.pose, b.shape, b.pose);
  if (res.x.size() != prob.num_vars || res.z.size() != prob.num_rows()) {
    throw DimensionMismatch("result does not match the cone program of this pair");
  }
  const ActiveKkt kkt = build_active_kkt(prob, res.x, res.z, opts.dual_threshold);
  const double cond = condition_number(kkt.matrix);
  const int n_orient = a.pose.orientation_size();
  if (!(cond <= opts.max_condition)) {
    if (!opts.best_effort) {
      throw SingularKktError("active-set KKT matrix is singular (degenerate contact)", cond);
    }
    AlphaJacobian jac = split(kkt.envelope, prob.dim, n_orient, GradMethod::Ift);
    jac.degenerate = true;
    jac.condition = cond;
    return jac;
  }
  const MatrixXd sol = kkt.matrix.partialPivLu().solve(kkt.rhs);
  AlphaJacobian jac = split(sol.row(prob.alpha_index).transpose(), prob.dim, n_orient,
                            GradMethod::Ift);
  jac.condition = cond;
  return jac;
}

AlphaJacobian grad_smooth(const MinScaleResult& res, const Body& a, const Body& b,
                          const GradOptions& opts) {
  if (!a.shape.is_smooth() || !b.shape.is_smooth()) {
    throw UnsupportedError("smooth_linear gradient needs sphere/ellipsoid shapes");
  }
  const int d = a.shape.dim();
  const VectorXd& p = res.p_star;
  const double nu_a = res.nu_a, nu_b = res.nu_b;

  const ScalingEval ea = eval_scaling(a.shape, a.pose, p, ScalingOrder::Hessian);
  const ScalingEval eb = eval_scaling(b.shape, b.pose, p, ScalingOrder::Hessian);
  const ScalingPoseDerivatives pa = scaling_pose_derivatives(a.shape, a.pose, p);
  const ScalingPoseDerivatives pb = scaling_pose_derivatives(b.shape, b.pose, p);
  const int na = a.pose.param_count();
  const int n_psi = na + b.pose.param_count();

  // psi = [mu_A; mu_B]; G_A only depends on mu_A and G_B on mu_B.
  VectorXd dga = VectorXd::Zero(n_psi), dgb = VectorXd::Zero(n_psi);
  MatrixXd dpga = MatrixXd::Zero(d, n_psi), dpgb = MatrixXd::Zero(d, n_psi);
  dga.head(na) = pa.d_mu;
  dgb.tail(n_psi - na) = pb.d_mu;
  dpga.leftCols(na) = pa.d_p_mu;
  dpgb.rightCols(n_psi - na) = pb.d_p_mu;

  MatrixXd n_mat = MatrixXd::Zero(d + 1, d + 1);
  n_mat.topLeftCorner(d, d) = nu_a * *ea.hessian + nu_b * *eb.hessian;
  const VectorXd c = *ea.gradient - *eb.gradient;
  n_mat.block(0, d, d, 1) = c;
  n_mat.block(d, 0, 1, d) = c.transpose();

  MatrixXd omega(d + 1, n_psi);
  omega.topRows(d) = -nu_a * dpga - nu_b * dpgb;
  omega.row(d) = (dgb - dga).transpose();

  const double cond = condition_number(n_mat);
  if (!(cond <= opts.max_condition)) {
    throw SingularKktError("bordered sensitivity matrix is singular", cond);
  }
  const MatrixXd sol = n_mat.partialPivLu().solve(omega);
  // alpha^2 = G_A(p*, psi) for the quadratic scaling functions.
  const VectorXd d_sq = sol.topRows(d).transpose() * *ea.gradient + dga;
  AlphaJacobian jac = split(d_sq / (2.0 * res.alpha_star), d, a.pose.orientation_size(),
                            GradMethod::SmoothLinear);
  jac.condition = cond;
  return jac;
}

}  // namespace

AlphaJacobian grad_alpha(const MinScaleResult& result, const Body& a, const Body& b,
                         GradMethod method, const GradOptions& opts) {
  if (!result.optimal()) {
    throw Error("grad_alpha needs an optimal result, got status " + to_string(result.status));
  }
  return method == GradMethod::Ift ? grad_ift(result, a, b, opts) : grad_smooth(result, a, b, opts);
}

}  // namespace diffcbf
