#pragma once

#include <string>
#include <vector>

#include "musculo/common.hpp"
#include "musculo/model.hpp"

namespace musculo {

struct Pose {
  VecX positions;   // one per joint, model joint order (rad, or m for slides)
  VecX velocities;  // same order

  static Pose at_default(const Model& m) {
    return {m.default_positions(), VecX::Zero(m.joint_count())};
  }
};

// World placement of every body, site and joint for one configuration.
struct FrameSet {
  std::vector<Vec3> body_position;  // body frame origin
  std::vector<Mat3> body_rotation;
  std::vector<Vec3> body_com;
  std::vector<Vec3> site_position;
  std::vector<Vec3> joint_anchor;  // world point on the joint axis
  std::vector<Vec3> joint_axis;    // world unit axis
};

inline void check_dimensions(const Model& model, const VecX& q, const char* what) {
  if (q.size() != model.joint_count()) {
    throw DataError(std::string(what) + ": expected " + std::to_string(model.joint_count()) +
                    " entries, got " + std::to_string(q.size()));
  }
}

// Composes parent frame, fixed offset and joint motions in order. `root`
// places the model's world frame (identity by default).
inline FrameSet forward_kinematics(const Model& model, const VecX& q,
                                   const Eigen::Isometry3d& root = Eigen::Isometry3d::Identity()) {
  check_dimensions(model, q, "forward_kinematics positions");
  const std::size_t nb = model.bodies.size();
  FrameSet f;
  f.body_position.resize(nb);
  f.body_rotation.resize(nb);
  f.body_com.resize(nb);
  f.site_position.resize(model.sites.size());
  f.joint_anchor.resize(model.joints.size());
  f.joint_axis.resize(model.joints.size());

  for (std::size_t b = 0; b < nb; ++b) {
    const Body& body = model.bodies[b];
    Mat3 rot;
    Vec3 pos;
    if (body.parent < 0) {
      rot = root.linear();
      pos = root.translation() + rot * body.offset;
    } else {
      rot = f.body_rotation[body.parent];
      pos = f.body_position[body.parent] + rot * body.offset;
    }
    for (int j : body.joints) {
      const Joint& joint = model.joints[j];
      const Vec3 axis = rot * joint.axis;
      f.joint_anchor[j] = pos;
      f.joint_axis[j] = axis;
      if (joint.kind == JointKind::hinge) {
        rot = rot * axis_angle(joint.axis, q[j]);
      } else {
        pos += axis * q[j];
      }
    }
    f.body_position[b] = pos;
    f.body_rotation[b] = rot;
    f.body_com[b] = pos + rot * body.com;
  }
  for (std::size_t s = 0; s < model.sites.size(); ++s) {
    const Site& site = model.sites[s];
    f.site_position[s] = f.body_position[site.body] + f.body_rotation[site.body] * site.position;
  }
  return f;
}

inline FrameSet forward_kinematics(const Model& model, const Pose& pose) {
  check_dimensions(model, pose.velocities, "forward_kinematics velocities");
  return forward_kinematics(model, pose.positions);
}

// Linear velocity Jacobian (3 x joints) of a world point rigidly attached to
// `body`.
inline MatX point_jacobian(const Model& model, const FrameSet& f, int body, const Vec3& point) {
  MatX jac = MatX::Zero(3, model.joint_count());
  for (int j : model.chain[body]) {
    if (model.joints[j].kind == JointKind::hinge) {
      jac.col(j) = f.joint_axis[j].cross(point - f.joint_anchor[j]);
    } else {
      jac.col(j) = f.joint_axis[j];
    }
  }
  return jac;
}

inline MatX angular_jacobian(const Model& model, const FrameSet& f, int body) {
  MatX jac = MatX::Zero(3, model.joint_count());
  for (int j : model.chain[body]) {
    if (model.joints[j].kind == JointKind::hinge) jac.col(j) = f.joint_axis[j];
  }
  return jac;
}

inline Vec3 center_of_mass(const Model& model, const FrameSet& f) {
  Vec3 c = Vec3::Zero();
  for (std::size_t b = 0; b < model.bodies.size(); ++b) c += model.bodies[b].mass * f.body_com[b];
  return c / model.total_mass();
}

inline Vec3 center_of_mass_velocity(const Model& model, const FrameSet& f, const VecX& qd) {
  Vec3 v = Vec3::Zero();
  for (std::size_t b = 0; b < model.bodies.size(); ++b) {
    const int bi = static_cast<int>(b);
    v += model.bodies[b].mass * (point_jacobian(model, f, bi, f.body_com[b]) * qd);
  }
  return v / model.total_mass();
}

// Rotation about the world y axis of a body frame, read from the z
// component of its x axis column.
inline double pitch_angle(const Mat3& r) {
  return std::atan2(-r(2, 0), std::hypot(r(0, 0), r(1, 0)));
}

}  // namespace musculo
