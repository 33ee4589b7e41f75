#include "diffcbf/safety_filter.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "diffcbf/errors.hpp"

namespace diffcbf {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

struct Stacked {
  MatrixXd A;
  VectorXd b;
};

Stacked stack_constraints(const QpProblem& qp, int m) {
  const int n_lo = qp.lower ? m : 0, n_up = qp.upper ? m : 0;
  Stacked st;
  st.A.resize(qp.A.rows() + n_lo + n_up, m);
  st.b.resize(st.A.rows());
  st.A.topRows(qp.A.rows()) = qp.A;
  st.b.head(qp.b.size()) = qp.b;
  Eigen::Index row = qp.A.rows();
  if (qp.lower) {
    st.A.middleRows(row, m) = MatrixXd::Identity(m, m);
    st.b.segment(row, m) = *qp.lower;
    row += m;
  }
  if (qp.upper) {
    st.A.middleRows(row, m) = -MatrixXd::Identity(m, m);
    st.b.segment(row, m) = -*qp.upper;
  }
  return st;
}

struct ActiveSetRun {
  VectorXd u;
  std::vector<int> working;
  VectorXd lambda;  // per stacked row
  int iterations = 0;
  bool converged = false;
  bool numerical_failure = false;
};

bool independent_of(const MatrixXd& A, const std::vector<int>& rows, int cand) {
  MatrixXd m(A.cols(), rows.size() + 1);
  for (std::size_t k = 0; k < rows.size(); ++k) m.col(k) = A.row(rows[k]).transpose();
  m.col(rows.size()) = A.row(cand).transpose();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(m);
  qr.setThreshold(1e-10);
  return qr.rank() == static_cast<Eigen::Index>(rows.size() + 1);
}

/// Primal active-set iterations from a feasible u.
ActiveSetRun active_set(const MatrixXd& H, const VectorXd& g0, const MatrixXd& A,
                        const VectorXd& b, VectorXd u, double tol, int max_iter) {
  const int m = static_cast<int>(H.rows());
  const int nr = static_cast<int>(A.rows());
  ActiveSetRun run;
  std::vector<char> in_w(nr, 0);
  for (int i = 0; i < nr; ++i) {
    if (A.row(i).dot(u) - b[i] <= tol && independent_of(A, run.working, i)) {
      run.working.push_back(i);
      in_w[i] = 1;
    }
  }
  run.lambda = VectorXd::Zero(nr);
  // After an unblocked step u minimizes over the working set, so the next
  // d is zero up to rounding (which grows with the conditioning of H).
  bool at_minimizer = false;
  for (run.iterations = 0; run.iterations < max_iter; ++run.iterations) {
    const int nw = static_cast<int>(run.working.size());
    MatrixXd kkt = MatrixXd::Zero(m + nw, m + nw);
    kkt.topLeftCorner(m, m) = H;
    for (int k = 0; k < nw; ++k) {
      kkt.block(0, m + k, m, 1) = -A.row(run.working[k]).transpose();
      kkt.block(m + k, 0, 1, m) = A.row(run.working[k]);
    }
    VectorXd rhs = VectorXd::Zero(m + nw);
    rhs.head(m) = -(H * u + g0);
    Eigen::FullPivLU<MatrixXd> lu(kkt);
    if (!lu.isInvertible()) {
      run.numerical_failure = true;
      break;
    }
    const VectorXd sol = lu.solve(rhs);
    const VectorXd d = sol.head(m);
    const VectorXd lam = sol.tail(nw);
    if (!sol.allFinite()) {
      run.numerical_failure = true;
      break;
    }
    if (at_minimizer || d.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + u.lpNorm<Eigen::Infinity>())) {
      at_minimizer = false;
      int worst = -1;
      double most_neg = -tol;
      for (int k = 0; k < nw; ++k) {
        if (lam[k] < most_neg) {
          most_neg = lam[k];
          worst = k;
        }
      }
      if (worst < 0) {
        run.lambda.setZero();
        for (int k = 0; k < nw; ++k) run.lambda[run.working[k]] = std::max(lam[k], 0.0);
        run.converged = true;
        break;
      }
      in_w[run.working[worst]] = 0;
      run.working.erase(run.working.begin() + worst);
      continue;
    }
    double step = 1.0;
    int blocking = -1;
    for (int i = 0; i < nr; ++i) {
      if (in_w[i]) continue;
      const double ad = A.row(i).dot(d);
      if (ad >= -1e-14 * A.row(i).norm() * d.norm()) continue;
      const double t = std::max(0.0, (b[i] - A.row(i).dot(u)) / ad);
      if (t < step) {
        step = t;
        blocking = i;
      }
    }
    u += step * d;
    at_minimizer = blocking < 0;
    if (blocking >= 0) {
      run.working.push_back(blocking);
      in_w[blocking] = 1;
    }
  }
  run.u = u;
  return run;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const QpOptions& opts) {
  const int m = static_cast<int>(qp.P.rows());
  if (qp.P.cols() != m || qp.q.size() != m || qp.A.cols() != m || qp.A.rows() != qp.b.size() ||
      (qp.lower && qp.lower->size() != m) || (qp.upper && qp.upper->size() != m)) {
    throw DimensionMismatch("QP data has inconsistent dimensions");
  }
  if (!qp.P.allFinite() || !qp.q.allFinite() || !qp.A.allFinite() || !qp.b.allFinite()) {
    throw ValidationError("QP data has non-finite entries");
  }
  if ((qp.P - qp.P.transpose()).lpNorm<Eigen::Infinity>() >
      1e-9 * std::max(1.0, qp.P.lpNorm<Eigen::Infinity>())) {
    throw ValidationError("QP matrix P is not symmetric");
  }
  const MatrixXd p_sym = 0.5 * (qp.P + qp.P.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p_sym);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lscale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (lmin < -1e-9 * lscale) throw ValidationError("QP matrix P is not positive semidefinite");

  QpResult res;
  MatrixXd H = p_sym;
  if (lmin < 1e-10 * lscale) {
    res.regularization = 1e-9 * lscale;
    H.diagonal().array() += res.regularization;
  }

  const Stacked st = stack_constraints(qp, m);
  const int nr = static_cast<int>(st.A.rows());
  const double tol = opts.tol;

  VectorXd u0 = opts.initial_guess ? *opts.initial_guess : VectorXd::Zero(m);
  if (u0.size() != m) throw DimensionMismatch("initial guess has wrong length");
  const VectorXd viol0 = st.b - st.A * u0;
  const double worst0 = nr > 0 ? viol0.maxCoeff() : 0.0;

  int phase1_iters = 0;
  if (worst0 > tol) {
    // Elastic phase 1 over (u, t): min 0.5 rho (|u|^2 + t^2) + t, A u + t >= b, t >= 0.
    const double rho = 1e-6;
    MatrixXd a1 = MatrixXd::Zero(nr + 1, m + 1);
    a1.topLeftCorner(nr, m) = st.A;
    a1.col(m).setOnes();
    VectorXd b1 = VectorXd::Zero(nr + 1);
    b1.head(nr) = st.b;
    VectorXd g1 = VectorXd::Zero(m + 1);
    g1[m] = 1.0;
    VectorXd v0(m + 1);
    v0 << u0, worst0;
    const MatrixXd h1 = rho * MatrixXd::Identity(m + 1, m + 1);
    const ActiveSetRun p1 = active_set(h1, g1, a1, b1, v0, tol, opts.max_iter);
    phase1_iters = p1.iterations;
    if (!p1.converged) {
      res.status = p1.numerical_failure ? QpStatus::NumericalFailure : QpStatus::MaxIter;
      res.u = p1.u.head(m);
      res.iterations = phase1_iters;
      res.margins = st.A * res.u - st.b;
      return res;
    }
    if (p1.u[m] > tol) {
      res.status = QpStatus::Infeasible;
      res.u = p1.u.head(m);
      res.margins = st.A * res.u - st.b;
      VectorXd y = p1.lambda.head(nr);
      if (y.sum() > 0) y /= y.sum();
      res.certificate = y;
      res.iterations = phase1_iters;
      return res;
    }
    u0 = p1.u.head(m);
  }

  const ActiveSetRun run = active_set(H, qp.q, st.A, st.b, u0, tol, opts.max_iter);
  res.iterations = phase1_iters + run.iterations;
  res.u = run.u;
  res.active_set = run.working;
  std::sort(res.active_set.begin(), res.active_set.end());
  res.multipliers = run.lambda;
  res.margins = st.A * res.u - st.b;
  res.objective = 0.5 * res.u.dot(p_sym * res.u) + qp.q.dot(res.u);
  res.kkt_residual =
      (p_sym * res.u + qp.q - st.A.transpose() * res.multipliers).lpNorm<Eigen::Infinity>();
  if (run.converged) {
    res.status = QpStatus::Optimal;
  } else {
    res.status = run.numerical_failure ? QpStatus::NumericalFailure : QpStatus::MaxIter;
  }
  return res;
}

VectorXd filter_control(const VectorXd& u_ref, const CbfConstraintSet& cs,
                        const std::optional<VectorXd>& lower,
                        const std::optional<VectorXd>& upper) {
  const int m = static_cast<int>(u_ref.size());
  if (cs.A.rows() > 0 && cs.A.cols() != m) throw DimensionMismatch("CBF rows do not match u_ref");
  QpProblem qp{MatrixXd::Identity(m, m), -u_ref, cs.A.rows() > 0 ? cs.A : MatrixXd(0, m), cs.b,
               lower, upper};
  QpOptions opts;
  opts.initial_guess = u_ref;
  const QpResult r = solve_qp(qp, opts);
  if (r.status == QpStatus::Infeasible) {
    const VectorXd margins = r.margins.head(cs.A.rows());
    throw InfeasibleError("CBF constraints admit no control",
                          std::vector<double>(margins.data(), margins.data() + margins.size()));
  }
  if (!r.optimal()) throw Error("safety filter QP failed: " + to_string(r.status));
  return r.u;
}

QpProblem resolved_rate_problem(const KinematicChain& chain, const VectorXd& theta,
                                const BodyAttachment& end_effector,
                                const Eigen::Vector3d& p_des, const Eigen::Vector3d& pdot_des,
                                const ArmControllerConfig& cfg) {
  const int n = chain.num_joints();
  const MatrixXd jv =
      chain.geometric_jacobian(theta, end_effector.link, end_effector.local_pose).topRows(3);
  const Eigen::Vector3d p =
      chain.frame_pose(theta, end_effector.link, end_effector.local_pose).position();
  Eigen::JacobiSVD<MatrixXd> svd(jv, Eigen::ComputeFullV);
  MatrixXd null_proj = MatrixXd::Identity(n, n);
  for (int k = 0; k < svd.singularValues().size(); ++k) {
    if (svd.singularValues()[k] > 1e-8) {
      null_proj -= svd.matrixV().col(k) * svd.matrixV().col(k).transpose();
    }
  }
  VectorXd theta_nom = cfg.theta_nominal.size() == 0 ? VectorXd::Zero(n) : cfg.theta_nominal;
  if (theta_nom.size() != n) throw DimensionMismatch("nominal posture has wrong length");
  const Eigen::Vector3d v = cfg.kp * (p_des - p) + pdot_des;
  const VectorXd w = cfg.kp_null * (theta_nom - theta);
  QpProblem qp;
  qp.P = 2.0 * (jv.transpose() * jv + cfg.epsilon * null_proj);
  qp.P = 0.5 * (qp.P + qp.P.transpose());
  qp.q = -2.0 * (jv.transpose() * v + cfg.epsilon * null_proj * w);
  qp.A = MatrixXd(0, n);
  qp.b = VectorXd(0);
  return qp;
}

VectorXd resolved_rate_qp(const KinematicChain& chain, const VectorXd& theta,
                          const BodyAttachment& end_effector, const Eigen::Vector3d& p_des,
                          const Eigen::Vector3d& pdot_des, const ArmControllerConfig& cfg,
                          const CbfConstraintSet& cs, const std::optional<VectorXd>& lower,
                          const std::optional<VectorXd>& upper) {
  QpProblem qp = resolved_rate_problem(chain, theta, end_effector, p_des, pdot_des, cfg);
  if (cs.A.rows() > 0) {
    if (cs.A.cols() != chain.num_joints()) throw DimensionMismatch("CBF rows do not match joints");
    qp.A = cs.A;
    qp.b = cs.b;
  }
  qp.lower = lower;
  qp.upper = upper;
  const QpResult r = solve_qp(qp);
  if (r.status == QpStatus::Infeasible) {
    const VectorXd margins = r.margins.head(cs.A.rows());
    throw InfeasibleError("CBF constraints admit no joint velocity",
                          std::vector<double>(margins.data(), margins.data() + margins.size()));
  }
  if (!r.optimal()) throw Error("resolved-rate QP failed: " + to_string(r.status));
  return r.u;
}

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

Eigen::Vector2d unicycle_performance(const UnicycleState& s, const Eigen::Vector2d& target,
                                     const UnicycleGains& gains) {
  const Eigen::Vector2d e = target - s.position();
  const double dist = e.norm();
  if (dist == 0.0) return Eigen::Vector2d::Zero();
  const double bearing = std::atan2(e.y(), e.x());
  return {gains.k_v * dist, gains.k_omega * wrap_angle(bearing - s.heading)};
}

}  // namespace diffcbf
