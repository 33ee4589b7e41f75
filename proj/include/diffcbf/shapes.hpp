#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "diffcbf/pose.hpp"

namespace diffcbf {

struct Sphere {
  double radius = 1.0;
};

struct Ellipsoid {
  VectorXd semi_axes;  // one per spatial axis
};

/// Segment along the local x axis from -L/2 to L/2, swept by a ball.
struct Capsule {
  double radius = 1.0;
  double segment_length = 0.0;
};

/// { y : normals * y <= offsets } in the body frame; offsets > 0 keeps the
/// local origin strictly inside.
struct Polytope {
  MatrixXd normals;  // n_o x D
  VectorXd offsets;  // n_o
};

/// Convex primitive together with its spatial dimension.
class ShapeSpec {
 public:
  using Variant = std::variant<Sphere, Ellipsoid, Capsule, Polytope>;

  ShapeSpec(Variant v, int dim);

  static ShapeSpec sphere(double radius, int dim = 3);
  static ShapeSpec ellipsoid(const VectorXd& semi_axes);
  static ShapeSpec capsule(double radius, double segment_length, int dim = 3);
  static ShapeSpec polytope(const MatrixXd& normals, const VectorXd& offsets);
  /// Axis-aligned box with the given half extents (2 or 3 entries).
  static ShapeSpec box(const VectorXd& half_extents);

  int dim() const { return dim_; }
  const Variant& variant() const { return variant_; }
  /// Sphere and ellipsoid: smooth and strongly convex scaling function.
  bool is_smooth() const;
  std::string kind() const;
  /// Radius of a ball about the local origin containing the unscaled body.
  double bounding_radius() const;

  /// Throws ValidationError on non-positive sizes, a polytope whose origin
  /// is not interior, or an unbounded polytope.
  void validate() const;

 private:
  Variant variant_;
  int dim_;
};

enum class ScalingOrder { Value, Gradient, Hessian };

struct ScalingEval {
  double value = 0.0;
  std::optional<VectorXd> gradient;
  std::optional<MatrixXd> hessian;
};

/// Scaling function F of the posed shape at world point p.
///
/// Sphere and ellipsoid use the quadratic form (p-r)^T S (p-r); capsule and
/// polytope use their gauge (degree-one homogeneous). For the polytope the
/// gradient is the attaining row's subgradient. Hessians exist only for the
/// smooth variants; requesting one elsewhere throws UnsupportedError.
ScalingEval eval_scaling(const ShapeSpec& shape, const Pose& pose, const VectorXd& p,
                         ScalingOrder order = ScalingOrder::Value);

/// Smallest uniform scale alpha with p inside the shape scaled about its
/// origin: sqrt(F) for the quadratic variants, F for the gauge variants.
double scaling_gauge(const ShapeSpec& shape, const Pose& pose, const VectorXd& p);

/// Derivatives of F(p; pose) with respect to the pose parameters
/// [position; orientation] for the smooth variants.
struct ScalingPoseDerivatives {
  VectorXd d_mu;     // dF/dmu, length n_mu
  MatrixXd d_p_mu;   // d^2F/(dp dmu), D x n_mu
};
ScalingPoseDerivatives scaling_pose_derivatives(const ShapeSpec& shape, const Pose& pose,
                                                const VectorXd& p);

// ---------------------------------------------------------------------------
// Conic representation.

enum class ConeKind { Orthant, SecondOrder };

/// h - G x in the cone. dG/dh hold derivatives with respect to each pose
/// parameter of the owning body.
struct ConeBlock {
  ConeKind kind = ConeKind::Orthant;
  int owner = 0;  // 0: body A, 1: body B
  MatrixXd G;
  VectorXd h;
  std::vector<MatrixXd> dG;
  std::vector<VectorXd> dh;

  int size() const { return static_cast<int>(h.size()); }
};

/// min c^T x s.t. h_k - G_k x in K_k. Variables are [p (D); alpha; aux...].
struct ConeProblem {
  int dim = 3;
  int num_vars = 0;
  int alpha_index = 0;
  VectorXd c;
  std::vector<ConeBlock> blocks;
  std::vector<int> param_counts{0, 0};
  std::vector<int> aux_owner;  // owner of each variable after alpha

  int num_rows() const;
  int num_orthant_blocks() const;
  int num_soc_blocks() const;
  MatrixXd stacked_G() const;
  VectorXd stacked_h() const;
};

ConeProblem to_cone_program(const ShapeSpec& a, const Pose& pose_a, const ShapeSpec& b,
                            const Pose& pose_b);

/// True when p lies in the shape scaled by alpha, checked through the conic
/// constraint blocks (with the best auxiliary value) within tol.
bool cone_membership(const ShapeSpec& shape, const Pose& pose, const VectorXd& p, double alpha,
                     double tol = 1e-12);

}  // namespace diffcbf
