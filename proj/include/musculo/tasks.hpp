#pragma once

// The three control tasks over the simulator: run forward, motion tracking
// and neck reaching. Each has a pure status function (reward, termination,
// observation) and an Environment wraps them with reset/step bookkeeping.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "musculo/common.hpp"
#include "musculo/dynamics.hpp"
#include "musculo/kinematics.hpp"
#include "musculo/model.hpp"
#include "musculo/rng.hpp"
#include "musculo/trajectory.hpp"

namespace musculo {

enum class TerminationReason { none, height, rotation, reward_floor, clip_end, target_reached };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::none: return "none";
    case TerminationReason::height: return "height";
    case TerminationReason::rotation: return "rotation";
    case TerminationReason::reward_floor: return "reward-floor";
    case TerminationReason::clip_end: return "clip-end";
    case TerminationReason::target_reached: return "target-reached";
  }
  return "none";
}

struct EpisodeStatus {
  double reward = 0.0;
  bool terminated = false;
  TerminationReason reason = TerminationReason::none;
  VecX observation;
};

struct TaskConfig {
  SimConfig sim;
  // run forward
  double min_head_height = 0.9;    // m
  double min_pelvis_height = 0.6;  // m
  double max_pitch = 0.8;          // rad, torso rotation about y
  // tracking
  double position_weight = 0.2;
  double rotation_weight = 0.1;
  double reward_floor = 0.01;
  double pose_noise = 0.02;  // rad (m for slides), initial pose jitter
  int excluded_final_steps = 20;
  // neck
  double outer_radius = 0.8;  // m
  double inner_radius = 0.6;  // m
  Vec3 inner_offset = Vec3::Zero();  // inner sphere center relative to the neck base
  double reach_threshold = 0.05;     // m
  int neck_reset_interval = 100;     // episodes
  // all tasks
  int horizon = 1000;  // control steps
};

// Policy output in [-1, 1] to excitation in [0, 1].
inline VecX action_map(const VecX& action) {
  VecX u(action.size());
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    if (!std::isfinite(action[i])) throw DataError("action_map: non-finite action at index " + std::to_string(i));
    u[i] = clamp_excitation((action[i] + 1.0) / 2.0);
  }
  return u;
}

// Records observation entries and, on request, their names.
class ObservationBuilder {
 public:
  explicit ObservationBuilder(bool with_names = false) : names_on_(with_names) {}

  void add(const std::string& name, double v) {
    values_.push_back(v);
    if (names_on_) names_.push_back(name);
  }

  VecX values() const { return Eigen::Map<const VecX>(values_.data(), static_cast<Eigen::Index>(values_.size())); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  bool names_on_;
  std::vector<double> values_;
  std::vector<std::string> names_;
};

namespace detail {

inline int require_body_tag(const Model& m, const std::string& tag) {
  const auto b = m.find_body_by_tag(tag);
  if (!b) throw ModelError("bodies", "no body tagged '" + tag + "'");
  return *b;
}

inline void add_joint_state(ObservationBuilder& ob, const Model& m, const SimState& s, int skip = -1) {
  for (int j = 0; j < m.joint_count(); ++j) {
    if (j != skip) ob.add("q_" + m.joints[j].name, s.q[j]);
  }
  for (int j = 0; j < m.joint_count(); ++j) ob.add("qd_" + m.joints[j].name, s.qd[j]);
}

inline void add_muscle_state(ObservationBuilder& ob, const Model& m, const SimState& s) {
  for (int k = 0; k < m.muscle_count(); ++k) {
    const std::string& n = m.muscles[k].params.name;
    ob.add("force_" + n, s.muscle_forces[k]);
    ob.add("activation_" + n, s.muscles[k].activation);
    ob.add("length_" + n, s.muscles[k].length);
    ob.add("velocity_" + n, s.muscles[k].velocity);
  }
}

}  // namespace detail

// Slide joint on the root body along world x, if any.
inline std::optional<int> root_x_joint(const Model& m) {
  for (int j : m.bodies.front().joints) {
    const Joint& jt = m.joints[j];
    if (jt.kind == JointKind::slide && std::abs(std::abs(jt.axis.x()) - 1.0) < 1e-12) return j;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- run forward

struct RunForwardBodies {
  int head = -1;
  int pelvis = -1;
  int torso = -1;
  std::vector<int> feet;

  static RunForwardBodies from(const Model& m) {
    RunForwardBodies b;
    b.head = detail::require_body_tag(m, "head");
    b.pelvis = detail::require_body_tag(m, "pelvis");
    b.torso = detail::require_body_tag(m, "torso");
    b.feet = m.bodies_with_tag("foot");
    if (b.feet.empty()) throw ModelError("bodies", "no body tagged 'foot'");
    return b;
  }
};

inline EpisodeStatus run_forward_status(const Model& m, const SimState& s, const TaskConfig& cfg,
                                        std::vector<std::string>* names = nullptr) {
  const RunForwardBodies b = RunForwardBodies::from(m);
  const FrameSet f = forward_kinematics(m, s.q);
  const double vx = center_of_mass_velocity(m, f, s.qd).x();
  EpisodeStatus st;
  st.reward = vx;
  const double head = f.body_position[b.head].z();
  const double pelvis = f.body_position[b.pelvis].z();
  const double pitch = pitch_angle(f.body_rotation[b.torso]);
  if (head < cfg.min_head_height || pelvis < cfg.min_pelvis_height) {
    st.reason = TerminationReason::height;
  } else if (pitch < -cfg.max_pitch || pitch > cfg.max_pitch) {
    st.reason = TerminationReason::rotation;
  }
  st.terminated = st.reason != TerminationReason::none;
  ObservationBuilder ob(names != nullptr);
  ob.add("head_height", head);
  ob.add("pelvis_height", pelvis);
  for (int foot : b.feet) ob.add(m.bodies[foot].name + "_height", f.body_position[foot].z());
  detail::add_joint_state(ob, m, s, root_x_joint(m).value_or(-1));
  detail::add_muscle_state(ob, m, s);
  ob.add("com_vx", vx);
  st.observation = ob.values();
  if (names) *names = ob.names();
  return st;
}

// ---------------------------------------------------------------- tracking

struct TrackingErrors {
  double position = 0.0;  // m, summed over bodies
  double rotation = 0.0;  // rad, summed over bodies
};

inline TrackingErrors tracking_errors(const FrameSet& f, const FrameSet& ref) {
  if (f.body_position.size() != ref.body_position.size()) {
    throw DataError("tracking: frame sets cover different bodies");
  }
  TrackingErrors e;
  for (std::size_t b = 0; b < f.body_position.size(); ++b) {
    e.position += (ref.body_position[b] - f.body_position[b]).norm();
    // Angle of the difference rotation. Past a quarter turn the trace form
    // is well conditioned; below it, the chord form ||A - B|| = 2 sqrt(2)
    // sin(angle / 2) is, and it is exactly 0 for identical rotations.
    const Mat3& a = ref.body_rotation[b];
    const Mat3& r = f.body_rotation[b];
    const double c = ((a * r.transpose()).trace() - 1.0) / 2.0;
    if (c < 0.0) {
      e.rotation += std::acos(std::clamp(c, -1.0, 1.0));
    } else {
      e.rotation += 2.0 * std::asin(std::min(1.0, (a - r).norm() / (2.0 * std::sqrt(2.0))));
    }
  }
  return e;
}

inline double tracking_reward(const TrackingErrors& e, double wp = 0.2, double wr = 0.1) {
  return std::exp(-wp * e.position) * std::exp(-wr * e.rotation);
}

inline double tracking_reward(const FrameSet& f, const FrameSet& ref, double wp = 0.2, double wr = 0.1) {
  return tracking_reward(tracking_errors(f, ref), wp, wr);
}

// Reference frames per control step at the clip's sampling rate.
inline int reference_stride(const Trajectory& ref, const SimConfig& sim) {
  const double r = ref.rate * sim.control_dt;
  const double n = std::round(r);
  if (n < 1.0 || std::abs(r - n) > 1e-9 * r) {
    throw DataError("tracking: clip rate must be an integer multiple of the control rate");
  }
  return static_cast<int>(n);
}

// Control intervals covered by the clip.
inline int clip_control_steps(const Trajectory& ref, const SimConfig& sim) {
  return (ref.frames() - 1) / reference_stride(ref, sim);
}

// Status after the step that brought the state to control step `t`,
// compared with reference frame stride * t.
inline EpisodeStatus tracking_status(const Model& m, const SimState& s, const Trajectory& ref, int t,
                                     const TaskConfig& cfg, std::vector<std::string>* names = nullptr) {
  const int stride = reference_stride(ref, cfg.sim);
  const int last = clip_control_steps(ref, cfg.sim);
  if (t < 0 || t > last) {
    throw DataError("tracking: step " + std::to_string(t) + " beyond the reference clip (" + std::to_string(last) +
                    " control steps)");
  }
  if (ref.q.cols() != m.joint_count()) throw DataError("tracking: reference joint count differs from the model");
  const FrameSet f = forward_kinematics(m, s.q);
  const FrameSet fr = forward_kinematics(m, VecX(ref.q.row(stride * t).transpose()));
  EpisodeStatus st;
  st.reward = tracking_reward(f, fr, cfg.position_weight, cfg.rotation_weight);
  if (st.reward < cfg.reward_floor) st.reason = TerminationReason::reward_floor;
  else if (t == last) st.reason = TerminationReason::clip_end;
  st.terminated = st.reason != TerminationReason::none;
  ObservationBuilder ob(names != nullptr);
  const int pelvis = detail::require_body_tag(m, "pelvis");
  ob.add("pelvis_height", f.body_position[pelvis].z());
  for (int foot : m.bodies_with_tag("foot")) ob.add(m.bodies[foot].name + "_height", f.body_position[foot].z());
  detail::add_joint_state(ob, m, s);
  detail::add_muscle_state(ob, m, s);
  ob.add("time_left", (last - t) * cfg.sim.control_dt);
  st.observation = ob.values();
  if (names) *names = ob.names();
  return st;
}

// ---------------------------------------------------------------- neck

// Uniform over the ball of radius `outer` around `base`, rejecting points
// inside the ball of radius `inner` around `base + inner_offset`.
inline Vec3 neck_target_sample(Rng& rng, double outer, double inner, const Vec3& base,
                               const Vec3& inner_offset = Vec3::Zero()) {
  if (!(outer > 0.0) || !(inner >= 0.0)) throw DataError("neck target: radii must be positive");
  if (inner_offset.norm() + outer <= inner) throw DataError("neck target: sampling region is empty");
  const Vec3 center = base + inner_offset;
  for (;;) {
    const Vec3 d(rng.uniform(-outer, outer), rng.uniform(-outer, outer), rng.uniform(-outer, outer));
    if (d.norm() > outer) continue;
    const Vec3 p = base + d;
    if ((p - center).norm() <= inner) continue;
    return p;
  }
}

inline int beak_site(const Model& m) {
  const auto s = m.sites_with_tag("beak");
  if (s.empty()) throw ModelError("sites", "no site tagged 'beak'");
  return s.front();
}

// Neck base: site tagged neck_base, else the root body origin.
inline Vec3 neck_base(const Model& m, const FrameSet& f) {
  const auto s = m.sites_with_tag("neck_base");
  return s.empty() ? f.body_position.front() : f.site_position[s.front()];
}

inline EpisodeStatus neck_status(const Model& m, const SimState& s, const Vec3& target, const TaskConfig& cfg,
                                 std::vector<std::string>* names = nullptr) {
  const int beak = beak_site(m);
  const FrameSet f = forward_kinematics(m, s.q);
  const Vec3 p = f.site_position[beak];
  const double d = (p - target).norm();
  EpisodeStatus st;
  st.reward = -d;
  if (d < cfg.reach_threshold) st.reason = TerminationReason::target_reached;
  st.terminated = st.reason != TerminationReason::none;
  ObservationBuilder ob(names != nullptr);
  detail::add_joint_state(ob, m, s);
  detail::add_muscle_state(ob, m, s);
  const char* axes[] = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) ob.add(std::string("beak_") + axes[i], p[i]);
  for (int i = 0; i < 3; ++i) ob.add(std::string("target_") + axes[i], target[i]);
  for (int i = 0; i < 3; ++i) ob.add(std::string("to_target_") + axes[i], target[i] - p[i]);
  st.observation = ob.values();
  if (names) *names = ob.names();
  return st;
}

// ---------------------------------------------------------------- environment

enum class TaskKind { run_forward, tracking, neck };

inline TaskKind parse_task(const std::string& s) {
  if (s == "run_forward") return TaskKind::run_forward;
  if (s == "tracking") return TaskKind::tracking;
  if (s == "neck") return TaskKind::neck;
  throw DataError("unknown task '" + s + "'");
}

struct StepResult {
  EpisodeStatus status;
  bool truncated = false;  // horizon reached without termination
};

// Initial pose for run forward and neck: default pose jittered uniformly
// within a window 1/5 the width of each joint range. Unlimited joints keep
// their default.
inline VecX perturbed_default_pose(const Model& m, Rng& rng) {
  VecX q = m.default_positions();
  for (int j = 0; j < m.joint_count(); ++j) {
    const Joint& jt = m.joints[j];
    if (!jt.limited()) continue;
    const double half = (jt.upper - jt.lower) / 10.0;
    q[j] = jt.clamp(q[j] + rng.uniform(-half, half));
  }
  return q;
}

class Environment {
 public:
  Environment(const Model& model, TaskKind task, TaskConfig cfg = {}, std::uint64_t seed = 0,
              std::optional<Trajectory> reference = std::nullopt)
      : model_(&model), task_(task), cfg_(std::move(cfg)), reference_(std::move(reference)) {
    const Rng root(seed);
    init_rng_ = root.split("env-init");
    target_rng_ = root.split("neck-target");
    cfg_.sim.substeps();
    if (task_ == TaskKind::run_forward) RunForwardBodies::from(model);
    if (task_ == TaskKind::neck) beak_site(model);
    if (task_ == TaskKind::tracking) {
      if (!reference_) throw DataError("tracking task needs a reference trajectory");
      if (reference_->q.cols() != model.joint_count()) {
        throw DataError("tracking: reference joint count differs from the model");
      }
      if (reference_->qd.rows() != reference_->q.rows()) *reference_ = infer_velocities(*reference_);
      if (clip_control_steps(*reference_, cfg_.sim) <= cfg_.excluded_final_steps) {
        throw DataError("tracking: reference clip shorter than the excluded final steps");
      }
    }
  }

  const SimState& state() const { return state_; }
  int episode() const { return episode_; }
  int episode_step() const { return step_; }
  int reference_step() const { return ref_step_; }
  const Vec3& target() const { return target_; }
  const TaskConfig& config() const { return cfg_; }

  // Starts the next episode and returns its first observation.
  VecX reset() {
    ++episode_;
    step_ = 0;
    switch (task_) {
      case TaskKind::run_forward:
        state_ = initial_state(*model_, perturbed_default_pose(*model_, init_rng_), VecX::Zero(model_->joint_count()));
        break;
      case TaskKind::tracking: {
        const int usable = clip_control_steps(*reference_, cfg_.sim) - cfg_.excluded_final_steps;
        ref_step_ = static_cast<int>(init_rng_.below(static_cast<std::uint64_t>(usable)));
        const int frame = ref_step_ * reference_stride(*reference_, cfg_.sim);
        VecX q = reference_->q.row(frame).transpose();
        for (int j = 0; j < model_->joint_count(); ++j) {
          q[j] = model_->joints[j].clamp(q[j] + init_rng_.normal(0.0, cfg_.pose_noise));
        }
        state_ = initial_state(*model_, q, reference_->qd.row(frame).transpose());
        break;
      }
      case TaskKind::neck: {
        // Every `neck_reset_interval`-th episode restarts from the default
        // pose; the others continue from where the previous one ended.
        const bool fresh = (episode_ - 1) % cfg_.neck_reset_interval == 0;
        if (fresh) state_ = initial_state(*model_);
        state_.time = 0.0;
        const FrameSet f = forward_kinematics(*model_, state_.q);
        target_ = neck_target_sample(target_rng_, cfg_.outer_radius, cfg_.inner_radius, neck_base(*model_, f),
                                     cfg_.inner_offset);
        break;
      }
    }
    return status().observation;
  }

  StepResult step(const VecX& action) {
    if (episode_ == 0) throw DataError("environment: step before reset");
    state_ = musculo::step(*model_, state_, action_map(action), cfg_.sim);
    ++step_;
    if (task_ == TaskKind::tracking) ++ref_step_;
    StepResult r;
    r.status = status();
    r.truncated = !r.status.terminated && step_ >= cfg_.horizon;
    return r;
  }

  EpisodeStatus status(std::vector<std::string>* names = nullptr) const {
    switch (task_) {
      case TaskKind::run_forward: return run_forward_status(*model_, state_, cfg_, names);
      case TaskKind::tracking: return tracking_status(*model_, state_, *reference_, ref_step_, cfg_, names);
      case TaskKind::neck: return neck_status(*model_, state_, target_, cfg_, names);
    }
    return {};
  }

 private:
  const Model* model_;
  TaskKind task_;
  TaskConfig cfg_;
  std::optional<Trajectory> reference_;
  Rng init_rng_;
  Rng target_rng_;
  SimState state_;
  Vec3 target_ = Vec3::Zero();
  int episode_ = 0;
  int step_ = 0;
  int ref_step_ = 0;
};

}  // namespace musculo
