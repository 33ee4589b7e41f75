#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "diffcbf/shapes.hpp"

namespace diffcbf {

/// Product cone: a list of nonnegative-orthant and second-order-cone blocks.
struct ConeLayout {
  struct Block {
    ConeKind kind;
    int size;
  };
  std::vector<Block> blocks;

  int size() const;
  /// Barrier degree: orthant rows count one each, every SOC counts one.
  int degree() const;
  static ConeLayout from_problem(const ConeProblem& prob);
};

struct SocpSettings {
  double tol = 1e-10;        // complementarity and scaled residual tolerance
  int max_iter = 100;
  double step_fraction = 0.99;
};

enum class SocpStatus { Optimal, MaxIter, NumericalFailure };

struct SocpStart {
  VectorXd x, s, z;
};

struct SocpResult {
  SocpStatus status = SocpStatus::NumericalFailure;
  VectorXd x, s, z;
  int iterations = 0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

/// Dense primal-dual interior-point method for
///   min c^T x  s.t.  h - G x = s,  s in K,
/// with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
/// The dual is  max -h^T z  s.t.  G^T z + c = 0,  z in K.
///
/// Intended for the tiny problems built by to_cone_program; every
/// iteration factorizes the full (n + m) KKT matrix.
SocpResult solve_socp(const MatrixXd& G, const VectorXd& h, const VectorXd& c,
                      const ConeLayout& cones, const SocpSettings& settings = {},
                      const SocpStart* warm = nullptr);

namespace cone_ops {
// Exposed for unit tests.
double min_eigenvalue(const ConeLayout& k, const VectorXd& x);
VectorXd jordan_product(const ConeLayout& k, const VectorXd& u, const VectorXd& v);
/// v with u o v = w.
VectorXd jordan_divide(const ConeLayout& k, const VectorXd& u, const VectorXd& w);
double max_step(const ConeLayout& k, const VectorXd& x, const VectorXd& dx);
/// Symmetric NT scaling W (and its inverse) with W z = W^{-1} s.
void nt_scaling(const ConeLayout& k, const VectorXd& s, const VectorXd& z, MatrixXd& w,
                MatrixXd& w_inv);
}  // namespace cone_ops

}  // namespace diffcbf
