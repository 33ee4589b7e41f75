#include "diffcbf/kinematics.hpp"

#include <Eigen/Geometry>
#include <cmath>

#include "diffcbf/errors.hpp"

namespace diffcbf {

KinematicChain::KinematicChain(std::vector<Joint> joints, Pose base)
    : joints_(std::move(joints)), base_(std::move(base)) {
  validate();
}

void KinematicChain::validate() const {
  if (base_.dim() != 3) throw ValidationError("chain base must be a 3D pose");
  base_.validate();
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const Joint& j = joints_[i];
    if (j.origin.dim() != 3) {
      throw ValidationError("joint " + std::to_string(i) + " origin must be a 3D pose");
    }
    j.origin.validate();
    if (!j.axis.allFinite() || std::abs(j.axis.norm() - 1.0) > 1e-9) {
      throw ValidationError("joint " + std::to_string(i) + " axis is not unit norm");
    }
  }
}

void KinematicChain::check_theta(const VectorXd& theta) const {
  if (theta.size() != num_joints()) {
    throw DimensionMismatch("joint vector has length " + std::to_string(theta.size()) +
                            ", chain has " + std::to_string(num_joints()) + " joints");
  }
}

namespace {

Pose joint_motion(const Joint& j, double q) {
  if (j.type == JointType::Revolute) {
    return Pose::spatial(Eigen::Vector3d::Zero(), quat_from_axis_angle(j.axis, q));
  }
  return Pose::spatial(j.axis * q, Quat(1, 0, 0, 0));
}

}  // namespace

std::vector<Pose> KinematicChain::link_frames(const VectorXd& theta) const {
  check_theta(theta);
  std::vector<Pose> frames;
  frames.reserve(joints_.size());
  Pose cur = base_;
  for (int i = 0; i < num_joints(); ++i) {
    cur = cur.compose(joints_[i].origin).compose(joint_motion(joints_[i], theta[i]));
    frames.push_back(cur);
  }
  return frames;
}

Pose KinematicChain::frame_pose(const VectorXd& theta, int link, const Pose& local) const {
  if (link < -1 || link >= num_joints()) throw ValidationError("link index out of range");
  if (link == -1) {
    check_theta(theta);
    return base_.compose(local);
  }
  return link_frames(theta)[link].compose(local);
}

MatrixXd KinematicChain::geometric_jacobian(const VectorXd& theta, int link,
                                            const Pose& local) const {
  if (link < -1 || link >= num_joints()) throw ValidationError("link index out of range");
  check_theta(theta);
  MatrixXd jac = MatrixXd::Zero(6, num_joints());
  Pose cur = base_;
  std::vector<Eigen::Vector3d> axes, origins;
  for (int i = 0; i < num_joints(); ++i) {
    const Pose pre = cur.compose(joints_[i].origin);
    axes.push_back(pre.rotation() * joints_[i].axis);
    origins.push_back(pre.position());
    cur = pre.compose(joint_motion(joints_[i], theta[i]));
    if (i == link) break;
  }
  const Pose target = frame_pose(theta, link, local);
  const Eigen::Vector3d p = target.position();
  for (int i = 0; i <= link; ++i) {
    if (joints_[i].type == JointType::Revolute) {
      jac.block<3, 1>(0, i) = axes[i].cross(p - origins[i]);
      jac.block<3, 1>(3, i) = axes[i];
    } else {
      jac.block<3, 1>(0, i) = axes[i];
    }
  }
  return jac;
}

Eigen::Matrix<double, 4, 3> quat_rate_matrix(const Quat& q) {
  if (!q.allFinite() || std::abs(q.norm() - 1.0) > 1e-9) {
    throw ValidationError("quat_rate_matrix needs a unit quaternion");
  }
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix<double, 4, 3> m;
  m << -x, -y, -z,
        w, -z,  y,
        z,  w, -x,
       -y,  x,  w;
  return m;
}

std::vector<Pose> forward_kinematics(const KinematicChain& chain, const VectorXd& theta,
                                     const std::vector<BodyAttachment>& bodies) {
  const std::vector<Pose> frames = chain.link_frames(theta);
  std::vector<Pose> out;
  out.reserve(bodies.size());
  for (const BodyAttachment& b : bodies) {
    if (b.link < -1 || b.link >= chain.num_joints()) {
      throw ValidationError("body '" + b.name + "' refers to a missing link");
    }
    const Pose& parent = b.link == -1 ? chain.base() : frames[b.link];
    out.push_back(parent.compose(b.local_pose));
  }
  return out;
}

MatrixXd pose_jacobian(const KinematicChain& chain, const VectorXd& theta,
                       const BodyAttachment& body) {
  const MatrixXd geo = chain.geometric_jacobian(theta, body.link, body.local_pose);
  const Pose pose = chain.frame_pose(theta, body.link, body.local_pose);
  const Eigen::Matrix3d rot = pose.rotation();
  MatrixXd out(7, chain.num_joints());
  out.topRows(3) = geo.topRows(3);
  out.bottomRows(4) = 0.5 * quat_rate_matrix(pose.quaternion()) * rot.transpose() * geo.bottomRows(3);
  return out;
}

UnicycleState unicycle_step(const UnicycleState& s, double v, double omega, double dt) {
  return {s.x + dt * v * std::cos(s.heading), s.y + dt * v * std::sin(s.heading),
          s.heading + dt * omega};
}

Eigen::Matrix<double, 3, 2> unicycle_input_matrix(const UnicycleState& s) {
  Eigen::Matrix<double, 3, 2> g;
  g << std::cos(s.heading), 0.0,
       std::sin(s.heading), 0.0,
       0.0, 1.0;
  return g;
}

Pose planar_body_pose(const UnicycleState& s, const PlanarAttachment& body) {
  return Pose::planar(s.x, s.y, s.heading).compose(body.local_pose);
}

Eigen::Matrix3d planar_pose_jacobian(const UnicycleState& s, const PlanarAttachment& body) {
  const Eigen::Vector2d o = body.local_pose.position();
  const double c = std::cos(s.heading), sn = std::sin(s.heading);
  Eigen::Matrix3d j = Eigen::Matrix3d::Identity();
  j(0, 2) = -sn * o.x() - c * o.y();
  j(1, 2) = c * o.x() - sn * o.y();
  return j;
}

}  // namespace diffcbf
