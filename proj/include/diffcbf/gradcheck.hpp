#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "diffcbf/diffgrad.hpp"
#include "diffcbf/minscale.hpp"

namespace diffcbf {

enum class ShapeKind { Sphere, Ellipsoid, Capsule, Polytope };

/// Random shape of the given kind with sizes in [0.2, 1.0].
ShapeSpec random_shape(std::mt19937_64& rng, ShapeKind kind, int dim);

/// Uniform position in [-extent, extent]^dim and uniform orientation.
Pose random_pose(std::mt19937_64& rng, int dim, double extent);

/// Pair drawn from `kinds`, positions in [-extent, extent]^dim.
std::pair<Body, Body> random_pair(std::mt19937_64& rng, const std::vector<ShapeKind>& kinds,
                                  int dim, double extent);

/// Gradient of alpha* in tangent coordinates [r1, w1, r2, w2], where w is a
/// body-frame rotation vector (q <- q * exp(w / 2)); 12 entries in 3D, 6 in 2D.
VectorXd tangent_gradient(const AlphaJacobian& jac, const Pose& pa, const Pose& pb);

/// Central finite differences of alpha* in the same tangent coordinates.
VectorXd fd_tangent_gradient(const Body& a, const Body& b, double step = 1e-5,
                             const MinScaleOptions& opts = {});

/// |x - y|_inf / max(|y|_inf, floor).
double relative_error(const VectorXd& x, const VectorXd& y, double floor = 1e-8);

struct GradCheckReport {
  int pairs = 0;
  double max_fd_error = 0.0;       // analytic (smooth_linear) vs finite differences
  double max_ift_fd_error = 0.0;   // ift vs finite differences
  double max_method_gap = 0.0;     // ift vs smooth_linear
  int non_finite = 0;
  bool passed(double fd_tol = 1e-4, double method_tol = 1e-6) const {
    return non_finite == 0 && max_fd_error <= fd_tol && max_ift_fd_error <= fd_tol &&
           max_method_gap <= method_tol;
  }
};

/// Runs the gradient comparisons on `seeds` smooth 3D pairs, seed s using
/// std::mt19937_64(base + s).
GradCheckReport run_gradcheck(int seeds, std::uint64_t base = 0);

}  // namespace diffcbf
