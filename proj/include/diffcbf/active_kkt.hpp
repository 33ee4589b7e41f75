#pragma once

#include <Eigen/Core>
#include <vector>

#include "diffcbf/shapes.hpp"

namespace diffcbf {

/// KKT system of the cone program restricted to its active constraints.
///
/// Every active orthant row and every active second-order cone is written as
/// a scalar smooth constraint phi_k(x, psi) <= 0 with multiplier nu_k
/// (orthant: phi = -s_i; SOC: phi = |s_1| - s_0). The matrix is
///   [ sum_k nu_k d2phi_k/dx2   J^T ]
///   [ J                        0   ]   with J = dphi/dx (active rows).
struct ActiveKkt {
  MatrixXd matrix;
  /// -d(stationarity, phi)/d psi for psi = [mu_A; mu_B].
  MatrixXd rhs;
  /// Envelope-theorem gradient dalpha*/dpsi = -sum_k z_k^T ds_k/dpsi.
  VectorXd envelope;
  std::vector<double> multipliers;
  int num_vars = 0;
  int num_active = 0;
  /// Constraint whose s and z are both below the weak-activity threshold.
  bool weakly_active = false;
};

ActiveKkt build_active_kkt(const ConeProblem& prob, const VectorXd& x, const VectorXd& z,
                           double dual_threshold = 1e-8);

/// 2-norm condition estimate of a small dense matrix (infinity if singular).
double condition_number(const MatrixXd& m);

}  // namespace diffcbf
