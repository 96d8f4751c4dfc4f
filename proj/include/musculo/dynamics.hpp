#pragma once

// Articulated-tree dynamics in generalized (joint) coordinates. Mass matrix
// by the composite-rigid-body method, bias forces by recursive Newton-Euler,
// both with spatial vectors expressed in the world frame about the world
// origin. Time stepping is semi-implicit Euler: velocity first, then
// position with the new velocity.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "musculo/common.hpp"
#include "musculo/kinematics.hpp"
#include "musculo/model.hpp"
#include "musculo/muscle.hpp"
#include "musculo/routing.hpp"

namespace musculo {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct SimConfig {
  double physics_dt = 1.0 / 240.0;
  double control_dt = 1.0 / 40.0;
  Vec3 gravity{0.0, 0.0, -9.81};
  double contact_stiffness = 2e4;  // N/m
  double contact_damping = 1e3;    // N s/m
  double friction = 1.0;
  double slip_speed = 1e-3;  // m/s, tanh saturation scale of friction

  int substeps() const {
    const double ratio = control_dt / physics_dt;
    const double n = std::round(ratio);
    if (!(physics_dt > 0.0) || n < 1.0 || std::abs(ratio - n) > 1e-9 * ratio) {
      throw DataError("control_dt must be a positive integer multiple of physics_dt");
    }
    return static_cast<int>(n);
  }
};

struct SimState {
  VecX q;
  VecX qd;
  std::vector<MuscleState> muscles;
  VecX excitations;    // last applied, after clamping
  VecX muscle_forces;  // N
  double time = 0.0;
  std::vector<bool> contact;  // per contact site, model.sites_with_tag("contact") order
};

namespace spatial {

// Spatial motion cross product [w; v] x [w2; v2].
inline Vec6 cross_motion(const Vec6& a, const Vec6& b) {
  Vec6 out;
  out.head<3>() = a.head<3>().cross(b.head<3>());
  out.tail<3>() = a.tail<3>().cross(b.head<3>()) + a.head<3>().cross(b.tail<3>());
  return out;
}

// Spatial force cross product [w; v] x* [n; f].
inline Vec6 cross_force(const Vec6& a, const Vec6& f) {
  Vec6 out;
  out.head<3>() = a.head<3>().cross(f.head<3>()) + a.tail<3>().cross(f.tail<3>());
  out.tail<3>() = a.head<3>().cross(f.tail<3>());
  return out;
}

// Rigid-body inertia about the world origin, from mass, world com and
// rotational inertia about the com in world axes.
inline Mat6 body_inertia(double m, const Vec3& c, const Mat3& ic) {
  const Mat3 cx = skew(c);
  Mat6 out;
  out.topLeftCorner<3, 3>() = ic - m * cx * cx;
  out.topRightCorner<3, 3>() = m * cx;
  out.bottomLeftCorner<3, 3>() = -m * cx;
  out.bottomRightCorner<3, 3>() = m * Mat3::Identity();
  return out;
}

inline Vec6 motion_axis(const Model& model, const FrameSet& f, int j) {
  Vec6 s;
  const Vec3& a = f.joint_axis[j];
  if (model.joints[j].kind == JointKind::hinge) {
    s << a, f.joint_anchor[j].cross(a);
  } else {
    s << Vec3::Zero(), a;
  }
  return s;
}

inline std::vector<Mat6> world_inertias(const Model& model, const FrameSet& f) {
  std::vector<Mat6> out(model.bodies.size());
  for (std::size_t b = 0; b < model.bodies.size(); ++b) {
    const Body& body = model.bodies[b];
    const Mat3& r = f.body_rotation[b];
    out[b] = body_inertia(body.mass, f.body_com[b], r * body.inertia * r.transpose());
  }
  return out;
}

}  // namespace spatial

// Joint-space inertia matrix (composite rigid bodies).
inline MatX mass_matrix(const Model& model, const FrameSet& f) {
  const int n = model.joint_count();
  std::vector<Mat6> composite = spatial::world_inertias(model, f);
  for (int b = static_cast<int>(model.bodies.size()) - 1; b > 0; --b) {
    const int p = model.bodies[b].parent;
    if (p >= 0) composite[p] += composite[b];
  }
  std::vector<Vec6> axes(n);
  for (int j = 0; j < n; ++j) axes[j] = spatial::motion_axis(model, f, j);
  MatX m = MatX::Zero(n, n);
  for (std::size_t b = 0; b < model.bodies.size(); ++b) {
    for (int i : model.bodies[b].joints) {
      const Vec6 force = composite[b] * axes[i];
      for (int j : model.chain[b]) {
        const double v = axes[j].dot(force);
        m(i, j) = v;
        m(j, i) = v;
        if (j == i) break;
      }
    }
  }
  return m;
}

// Coriolis, centrifugal and gravity generalized forces: the joint forces
// needed for zero joint acceleration.
inline VecX bias_forces(const Model& model, const FrameSet& f, const VecX& qd, const Vec3& gravity) {
  check_dimensions(model, qd, "bias_forces velocities");
  const std::size_t nb = model.bodies.size();
  const std::vector<Mat6> inertia = spatial::world_inertias(model, f);
  std::vector<Vec6> vel(nb), acc(nb), force(nb);
  std::vector<Vec6> axes(model.joints.size());
  Vec6 base_acc;
  base_acc << Vec3::Zero(), -gravity;
  for (std::size_t b = 0; b < nb; ++b) {
    const int p = model.bodies[b].parent;
    Vec6 v = p >= 0 ? vel[p] : Vec6::Zero();
    Vec6 a = p >= 0 ? acc[p] : base_acc;
    for (int j : model.bodies[b].joints) {
      axes[j] = spatial::motion_axis(model, f, j);
      a += spatial::cross_motion(v, axes[j]) * qd[j];
      v += axes[j] * qd[j];
    }
    vel[b] = v;
    acc[b] = a;
    force[b] = inertia[b] * a + spatial::cross_force(v, inertia[b] * v);
  }
  for (int b = static_cast<int>(nb) - 1; b > 0; --b) {
    const int p = model.bodies[b].parent;
    if (p >= 0) force[p] += force[b];
  }
  VecX tau(model.joint_count());
  for (std::size_t b = 0; b < nb; ++b) {
    for (int j : model.bodies[b].joints) tau[j] = axes[j].dot(force[b]);
  }
  return tau;
}

struct ContactForce {
  int site = -1;
  Vec3 force = Vec3::Zero();
  bool in_contact = false;
};

// Penalty contact against the ground plane z = 0 at every site tagged
// "contact". Normal: spring-damper, never pulling. Tangential: friction
// opposing slip, saturating smoothly (tanh) at config.slip_speed.
inline std::vector<ContactForce> contact_forces(const Model& model, const FrameSet& f, const VecX& qd,
                                                const SimConfig& config) {
  std::vector<ContactForce> out;
  for (int s : model.sites_with_tag("contact")) {
    ContactForce c;
    c.site = s;
    const Vec3& p = f.site_position[s];
    if (p.z() < 0.0) {
      c.in_contact = true;
      const Vec3 v = point_jacobian(model, f, model.sites[s].body, p) * qd;
      const double normal = std::max(0.0, config.contact_stiffness * -p.z() - config.contact_damping * v.z());
      Vec3 slip(v.x(), v.y(), 0.0);
      const double speed = slip.norm();
      Vec3 tangential = Vec3::Zero();
      if (speed > 0.0) {
        tangential = -config.friction * normal * std::tanh(speed / config.slip_speed) * slip / speed;
      }
      c.force = Vec3(tangential.x(), tangential.y(), normal);
    }
    out.push_back(c);
  }
  return out;
}

// Kinetic + gravitational (datum: world origin) + joint spring energy.
inline double mechanical_energy(const Model& model, const VecX& q, const VecX& qd, const SimConfig& config) {
  const FrameSet f = forward_kinematics(model, q);
  double e = 0.5 * qd.dot(mass_matrix(model, f) * qd);
  for (std::size_t b = 0; b < model.bodies.size(); ++b) e -= model.bodies[b].mass * config.gravity.dot(f.body_com[b]);
  for (int j = 0; j < model.joint_count(); ++j) {
    const double dq = q[j] - model.joints[j].default_value;
    e += 0.5 * model.joints[j].stiffness * dq * dq;
  }
  return e;
}

inline void update_muscle_geometry(const Model& model, const VecX& q, const VecX& qd, SimState& s,
                                   const MatX* arms_in = nullptr) {
  const FrameSet f = forward_kinematics(model, q);
  const MatX arms = arms_in ? *arms_in : moment_arm_matrix(model, q);
  for (int m = 0; m < model.muscle_count(); ++m) {
    const MuscleParams& p = model.muscles[m].params;
    const double len = path_length(model, f, model.muscles[m].path).total_length;
    const double speed = arms.col(m).dot(qd);
    s.muscles[m].length = normalized_length(len, p);
    s.muscles[m].velocity = speed / p.rest_length;
  }
}

inline SimState initial_state(const Model& model, const VecX& q, const VecX& qd) {
  check_dimensions(model, q, "initial_state positions");
  check_dimensions(model, qd, "initial_state velocities");
  SimState s;
  s.q = q;
  s.qd = qd;
  s.muscles.assign(model.muscles.size(), MuscleState{});
  s.excitations = VecX::Zero(model.muscle_count());
  s.muscle_forces = VecX::Zero(model.muscle_count());
  update_muscle_geometry(model, q, qd, s);
  for (int m = 0; m < model.muscle_count(); ++m) s.muscle_forces[m] = muscle_force(s.muscles[m], model.muscles[m].params);
  const FrameSet f = forward_kinematics(model, q);
  for (const auto& c : contact_forces(model, f, qd, SimConfig{})) s.contact.push_back(c.in_contact);
  return s;
}

inline SimState initial_state(const Model& model) {
  return initial_state(model, model.default_positions(), VecX::Zero(model.joint_count()));
}

namespace detail {

inline void require_finite(const VecX& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw DivergenceError(std::string(what) + "[" + std::to_string(i) + "]", "non-finite value, simulation diverged");
    }
  }
}

}  // namespace detail

// Linearization of the passive forces (joint springs and dampers, ground
// contact) as positive semi-definite stiffness K and damping D, F ~ -K dq - D dqd.
struct PassiveJacobians {
  MatX stiffness;
  MatX damping;
};

inline PassiveJacobians passive_jacobians(const Model& model, const FrameSet& f, const VecX& qd,
                                          const std::vector<ContactForce>& contacts, const SimConfig& config) {
  const int n = model.joint_count();
  PassiveJacobians out{MatX::Zero(n, n), MatX::Zero(n, n)};
  for (int j = 0; j < n; ++j) {
    out.stiffness(j, j) = model.joints[j].stiffness;
    out.damping(j, j) = model.joints[j].damping;
  }
  for (const auto& c : contacts) {
    if (!c.in_contact) continue;
    const double normal = c.force.z();
    if (normal <= 0.0) continue;
    const int body = model.sites[c.site].body;
    const MatX jac = point_jacobian(model, f, body, f.site_position[c.site]);
    const Vec3 v = jac * qd;
    Mat3 kv = Mat3::Zero();
    kv(2, 2) = config.contact_stiffness;
    Mat3 dv = Mat3::Zero();
    dv(2, 2) = config.contact_damping;
    // Friction -mu N tanh(s / vs) t written as a viscous drag with the
    // secant coefficient mu N tanh(s / vs) / s. The tangent derivative
    // vanishes once tanh saturates and would let a full mu N impulse
    // reverse the slip within one step; the secant form cannot.
    const double speed = Eigen::Vector2d(v.x(), v.y()).norm();
    const double scale = config.friction * normal;
    const double coeff = speed > 1e-9 * config.slip_speed ? scale * std::tanh(speed / config.slip_speed) / speed
                                                          : scale / config.slip_speed;
    const Eigen::Matrix2d ft = coeff * Eigen::Matrix2d::Identity();
    dv.topLeftCorner<2, 2>() = ft;
    out.stiffness += jac.transpose() * kv * jac;
    out.damping += jac.transpose() * dv * jac;
  }
  return out;
}

// Advances one physics substep of length h with excitations held fixed.
// Semi-implicit Euler (velocity, then position with the new velocity); the
// velocity update is linearly implicit in the passive spring, damper and
// contact forces so that stiff contact stays stable at 240 Hz:
//   (M + h D + h^2 K) dqd = h (tau - bias - h K qd).
inline void physics_substep(const Model& model, SimState& s, const VecX& u, const SimConfig& config, double h) {
  const int n = model.joint_count();
  const int nm = model.muscle_count();
  for (int m = 0; m < nm; ++m) {
    s.excitations[m] = clamp_excitation(u[m]);
    s.muscles[m].activation = step_activation(s.muscles[m].activation, s.excitations[m], h, model.muscles[m].params);
  }
  const FrameSet f = forward_kinematics(model, s.q);
  VecX tau = VecX::Zero(n);
  if (nm > 0) {
    const MatX arms = moment_arm_matrix(model, s.q);
    update_muscle_geometry(model, s.q, s.qd, s, &arms);
    for (int m = 0; m < nm; ++m) s.muscle_forces[m] = muscle_force(s.muscles[m], model.muscles[m].params);
    tau += joint_torques(s.muscle_forces, arms);
  }
  for (int j = 0; j < n; ++j) {
    const Joint& joint = model.joints[j];
    tau[j] -= joint.stiffness * (s.q[j] - joint.default_value) + joint.damping * s.qd[j];
  }
  const auto contacts = contact_forces(model, f, s.qd, config);
  s.contact.resize(contacts.size());
  for (std::size_t c = 0; c < contacts.size(); ++c) {
    s.contact[c] = contacts[c].in_contact;
    if (!contacts[c].in_contact) continue;
    const int site = contacts[c].site;
    tau += point_jacobian(model, f, model.sites[site].body, f.site_position[site]).transpose() * contacts[c].force;
  }
  const PassiveJacobians pj = passive_jacobians(model, f, s.qd, contacts, config);
  const MatX lhs = mass_matrix(model, f) + h * pj.damping + h * h * pj.stiffness;
  const VecX rhs = tau - bias_forces(model, f, s.qd, config.gravity) - h * (pj.stiffness * s.qd);
  Eigen::LLT<MatX> llt(lhs);
  if (llt.info() != Eigen::Success) throw DivergenceError("mass_matrix", "not positive definite");
  const VecX qdd = llt.solve(rhs);
  detail::require_finite(qdd, "qdd");
  s.qd += h * qdd;
  s.q += h * s.qd;
  for (int j = 0; j < n; ++j) {
    const Joint& joint = model.joints[j];
    if (s.q[j] < joint.lower || s.q[j] > joint.upper) {
      s.q[j] = joint.clamp(s.q[j]);
      s.qd[j] = 0.0;
    }
  }
  detail::require_finite(s.q, "q");
  detail::require_finite(s.qd, "qd");
  s.time += h;
}

// One control step: control_dt / physics_dt substeps with the excitations
// held. Excitations are clamped to [0, 1].
inline SimState step(const Model& model, const SimState& state, const VecX& excitations, const SimConfig& config) {
  if (excitations.size() != model.muscle_count()) {
    throw DataError("step: expected " + std::to_string(model.muscle_count()) + " excitations, got " +
                    std::to_string(excitations.size()));
  }
  detail::require_finite(excitations, "excitations");
  const int substeps = config.substeps();
  SimState s = state;
  const double t0 = s.time;
  for (int k = 0; k < substeps; ++k) physics_substep(model, s, excitations, config, config.physics_dt);
  s.time = t0 + config.control_dt;
  update_muscle_geometry(model, s.q, s.qd, s);
  for (int m = 0; m < model.muscle_count(); ++m) s.muscle_forces[m] = muscle_force(s.muscles[m], model.muscles[m].params);
  return s;
}

}  // namespace musculo
