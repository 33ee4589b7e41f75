#pragma once

#include <Eigen/Core>
#include <array>

namespace diffcbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4d;

Quat quat_multiply(const Quat& a, const Quat& b);
Quat quat_from_axis_angle(const Eigen::Vector3d& axis, double angle);
Quat quat_conjugate(const Quat& q);

/// Rotation matrix of q / |q|.
Eigen::Matrix3d quat_to_rotation(const Quat& q);

/// Partial derivatives of quat_to_rotation with respect to the raw
/// coordinates (w, x, y, z), including the normalization.
std::array<Eigen::Matrix3d, 4> quat_rotation_derivatives(const Quat& q);

/// Rigid-body pose in the plane (heading angle) or in space (quaternion).
///
/// The stacked parameter vector is [position; orientation], which has length
/// 3 in 2D and 7 in 3D. Rotations normalize the quaternion first, so poses
/// built from perturbed raw coordinates remain well defined.
class Pose {
 public:
  Pose() : Pose(identity(3)) {}

  static Pose planar(double x, double y, double heading);
  static Pose planar(const Eigen::Vector2d& position, double heading);
  /// Throws ValidationError unless |q| = 1 within 1e-9.
  static Pose spatial(const Eigen::Vector3d& position, const Quat& q);
  static Pose identity(int dim);
  /// Inverse of params(); performs no normalization.
  static Pose from_params(int dim, const VectorXd& params);

  int dim() const { return static_cast<int>(position_.size()); }
  const VectorXd& position() const { return position_; }
  /// Heading (size 1) in 2D, quaternion (size 4) in 3D.
  const VectorXd& orientation() const { return orientation_; }
  double heading() const { return orientation_[0]; }
  Quat quaternion() const;

  int orientation_size() const { return static_cast<int>(orientation_.size()); }
  int param_count() const { return dim() + orientation_size(); }
  VectorXd params() const;

  MatrixXd rotation() const;
  /// dR / d orientation_k for every orientation coordinate.
  std::vector<MatrixXd> rotation_derivatives() const;

  /// this * child: child expressed in this frame, mapped to the parent frame.
  Pose compose(const Pose& child) const;
  VectorXd transform_point(const VectorXd& local) const;

  void validate() const;

 private:
  Pose(VectorXd position, VectorXd orientation)
      : position_(std::move(position)), orientation_(std::move(orientation)) {}

  VectorXd position_;
  VectorXd orientation_;
};

}  // namespace diffcbf
