#include "diffcbf/pose.hpp"

#include <cmath>
#include <string>

#include "diffcbf/errors.hpp"

namespace diffcbf {

Quat quat_multiply(const Quat& a, const Quat& b) {
  Quat out;
  out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
  out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
  out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
  out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
  return out;
}

Quat quat_from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d n = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return Quat(std::cos(0.5 * angle), s * n.x(), s * n.y(), s * n.z());
}

Quat quat_conjugate(const Quat& q) { return Quat(q[0], -q[1], -q[2], -q[3]); }

Eigen::Matrix3d quat_to_rotation(const Quat& q) {
  const Quat u = q / q.norm();
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

std::array<Eigen::Matrix3d, 4> quat_rotation_derivatives(const Quat& q) {
  const double norm = q.norm();
  const Quat u = q / norm;
  const double w = u[0], x = u[1], y = u[2], z = u[3];

  // Derivatives of the unit-quaternion formula with respect to u.
  std::array<Eigen::Matrix3d, 4> du;
  du[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  du[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  du[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  du[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (auto& m : du) m *= 2.0;

  // Chain through u = q / |q|: du/dq = (I - u u^T) / |q|.
  const Eigen::Matrix4d proj = (Eigen::Matrix4d::Identity() - u * u.transpose()) / norm;
  std::array<Eigen::Matrix3d, 4> dq;
  for (int k = 0; k < 4; ++k) {
    dq[k].setZero();
    for (int j = 0; j < 4; ++j) dq[k] += du[j] * proj(j, k);
  }
  return dq;
}

Pose Pose::planar(double x, double y, double heading) {
  return planar(Eigen::Vector2d(x, y), heading);
}

Pose Pose::planar(const Eigen::Vector2d& position, double heading) {
  VectorXd o(1);
  o[0] = heading;
  return Pose(position, o);
}

Pose Pose::spatial(const Eigen::Vector3d& position, const Quat& q) {
  Pose p(position, q);
  p.validate();
  return p;
}

Pose Pose::identity(int dim) {
  if (dim == 2) return planar(0.0, 0.0, 0.0);
  if (dim == 3) return Pose(VectorXd::Zero(3), Quat(1, 0, 0, 0));
  throw DimensionMismatch("pose dimension must be 2 or 3, got " + std::to_string(dim));
}

Pose Pose::from_params(int dim, const VectorXd& params) {
  const int n_orient = dim == 2 ? 1 : 4;
  if ((dim != 2 && dim != 3) || params.size() != dim + n_orient) {
    throw DimensionMismatch("pose parameter vector has wrong length");
  }
  return Pose(params.head(dim), params.tail(n_orient));
}

Quat Pose::quaternion() const {
  if (dim() == 3) return orientation_;
  return quat_from_axis_angle(Eigen::Vector3d::UnitZ(), orientation_[0]);
}

VectorXd Pose::params() const {
  VectorXd mu(param_count());
  mu << position_, orientation_;
  return mu;
}

MatrixXd Pose::rotation() const {
  if (dim() == 2) {
    const double c = std::cos(orientation_[0]), s = std::sin(orientation_[0]);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
  }
  return quat_to_rotation(orientation_);
}

std::vector<MatrixXd> Pose::rotation_derivatives() const {
  if (dim() == 2) {
    const double c = std::cos(orientation_[0]), s = std::sin(orientation_[0]);
    Eigen::Matrix2d d;
    d << -s, -c, c, -s;
    return {d};
  }
  const auto d = quat_rotation_derivatives(orientation_);
  return {d[0], d[1], d[2], d[3]};
}

Pose Pose::compose(const Pose& child) const {
  if (child.dim() != dim()) throw DimensionMismatch("cannot compose 2D and 3D poses");
  VectorXd pos = position_ + rotation() * child.position_;
  if (dim() == 2) {
    VectorXd o(1);
    o[0] = orientation_[0] + child.orientation_[0];
    return Pose(pos, o);
  }
  Quat q = quat_multiply(orientation_ / orientation_.norm(),
                         child.orientation_ / child.orientation_.norm());
  return Pose(pos, q.normalized());
}

VectorXd Pose::transform_point(const VectorXd& local) const {
  return position_ + rotation() * local;
}

void Pose::validate() const {
  if (dim() != 2 && dim() != 3) throw DimensionMismatch("pose dimension must be 2 or 3");
  if (!position_.allFinite() || !orientation_.allFinite()) {
    throw ValidationError("pose has non-finite entries");
  }
  if (dim() == 3 && std::abs(orientation_.norm() - 1.0) > 1e-9) {
    throw ValidationError("quaternion is not unit norm (|q| = " +
                          std::to_string(orientation_.norm()) + ")");
  }
}

}  // namespace diffcbf
