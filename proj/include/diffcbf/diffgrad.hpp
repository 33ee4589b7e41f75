#pragma once

#include <Eigen/Core>
#include <string>

#include "diffcbf/minscale.hpp"

namespace diffcbf {

enum class GradMethod {
  /// Implicit differentiation of the cone program's active-set KKT system.
  Ift,
  /// Bordered linear system [M c; c^T 0] of the smooth two-constraint
  /// problem (sphere/ellipsoid pairs only).
  SmoothLinear,
};

std::string to_string(GradMethod m);

/// d alpha* / d(r1, q1, r2, q2). Orientation blocks have 4 entries (raw
/// quaternion) in 3D and 1 entry (heading) in 2D.
struct AlphaJacobian {
  VectorXd d_r1, d_q1, d_r2, d_q2;
  GradMethod method = GradMethod::Ift;
  /// Set when the KKT system was singular and the envelope gradient was
  /// returned instead.
  bool degenerate = false;
  double condition = 1.0;

  /// [d_r1, d_q1, d_r2, d_q2]; length 14 in 3D, 6 in 2D.
  VectorXd flat() const;
  /// [d_r, d_q] of body 0 (A) or 1 (B).
  VectorXd body(int index) const;
  bool all_finite() const;
};

struct GradOptions {
  double dual_threshold = 1e-8;
  double max_condition = 1e12;
  /// On a singular KKT system return the flagged envelope gradient instead
  /// of throwing SingularKktError.
  bool best_effort = false;
};

AlphaJacobian grad_alpha(const MinScaleResult& result, const Body& a, const Body& b,
                         GradMethod method, const GradOptions& opts = {});

}  // namespace diffcbf
