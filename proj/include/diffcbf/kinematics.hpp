#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "diffcbf/pose.hpp"
#include "diffcbf/shapes.hpp"

namespace diffcbf {

enum class JointType { Revolute, Prismatic };

/// A joint moves about/along `axis`, expressed in the frame reached after
/// `origin` (fixed transform from the previous link frame).
struct Joint {
  JointType type = JointType::Revolute;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Pose origin = Pose::identity(3);
};

/// Collision body rigidly fixed to link `link` (0-based joint index; -1 is
/// the base).
struct BodyAttachment {
  std::string name;
  int link = 0;
  Pose local_pose = Pose::identity(3);
  ShapeSpec shape = ShapeSpec::sphere(1.0);
};

class KinematicChain {
 public:
  KinematicChain() = default;
  explicit KinematicChain(std::vector<Joint> joints, Pose base = Pose::identity(3));

  int num_joints() const { return static_cast<int>(joints_.size()); }
  const Joint& joint(int i) const { return joints_.at(i); }
  const Pose& base() const { return base_; }

  /// Throws ValidationError on non-unit axes or non-3D frames.
  void validate() const;

  /// World pose of every link frame (index i is after joint i moved).
  std::vector<Pose> link_frames(const VectorXd& theta) const;

  /// World pose of a frame fixed to `link` at `local`.
  Pose frame_pose(const VectorXd& theta, int link, const Pose& local) const;

  /// Geometric Jacobian of a frame fixed to `link` at `local`: linear
  /// velocity (top 3 rows) and world angular velocity (bottom 3 rows).
  MatrixXd geometric_jacobian(const VectorXd& theta, int link, const Pose& local) const;

 private:
  void check_theta(const VectorXd& theta) const;

  std::vector<Joint> joints_;
  Pose base_ = Pose::identity(3);
};

/// Map from body angular velocity to quaternion rate, qdot = 0.5 * Q(q) * w.
/// Throws ValidationError unless |q| = 1 within 1e-9.
Eigen::Matrix<double, 4, 3> quat_rate_matrix(const Quat& q);

/// World poses of all attachments.
std::vector<Pose> forward_kinematics(const KinematicChain& chain, const VectorXd& theta,
                                     const std::vector<BodyAttachment>& bodies);

/// d(r, q)/d theta for an attachment, 7 x n_joints.
MatrixXd pose_jacobian(const KinematicChain& chain, const VectorXd& theta,
                       const BodyAttachment& body);

struct UnicycleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Eigen::Vector3d vector() const { return {x, y, heading}; }
  Eigen::Vector2d position() const { return {x, y}; }
};

/// Explicit Euler step of the unicycle under (v, omega).
UnicycleState unicycle_step(const UnicycleState& s, double v, double omega, double dt);

/// Input matrix G(x) of the unicycle, 3 x 2.
Eigen::Matrix<double, 3, 2> unicycle_input_matrix(const UnicycleState& s);

/// Planar body fixed to the unicycle frame.
struct PlanarAttachment {
  std::string name;
  Pose local_pose = Pose::identity(2);
  ShapeSpec shape = ShapeSpec::sphere(1.0, 2);
};

Pose planar_body_pose(const UnicycleState& s, const PlanarAttachment& body);

/// d(r, heading)/d(x, y, heading) of a planar attachment, 3 x 3.
Eigen::Matrix3d planar_pose_jacobian(const UnicycleState& s, const PlanarAttachment& body);

}  // namespace diffcbf
