#pragma once

// Hill-type muscle: first-order activation filter, force-length /
// force-velocity / passive curves, and the rest-length solve that turns an
// actuator length range into (rest length, tendon length).

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "musculo/common.hpp"

namespace musculo {

struct LengthRange {
  double min = 0.0;
  double max = 0.0;
};

struct MuscleParams {
  std::string name;
  double tau_act = 0.010;    // s
  double tau_deact = 0.040;  // s
  double peak_force = 0.0;   // N
  LengthRange length_range;  // actuator length range LR, m
  LengthRange operating_range{0.5, 1.5};  // R, units of rest length
  double rest_length = 0.0;    // L0, m (derived)
  double tendon_length = 0.0;  // LT, m (derived)
  double fv_max = 1.5;
  double vmax = 10.0;  // rest lengths per second
};

struct MuscleState {
  double activation = 0.0;
  double length = 1.0;    // normalized: (path length - LT) / L0
  double velocity = 0.0;  // normalized: L0/s
};

inline double clamp_excitation(double u) { return std::clamp(u, 0.0, 1.0); }

// Time constant of the activation filter. Activation branch when u > a.
inline double activation_time_constant(double u, double a, const MuscleParams& p) {
  return u > a ? p.tau_act * (0.5 + 1.5 * a) : p.tau_deact / (0.5 + 1.5 * a);
}

// One explicit Euler step of da/dt = (u - a) / tau(u, a). Excitation is
// clamped to [0, 1] first. The step never moves past u, so for dt > tau the
// update saturates at the target instead of overshooting.
inline double step_activation(double a, double u, double dt, const MuscleParams& p) {
  if (!std::isfinite(a) || !std::isfinite(u) || !std::isfinite(dt)) {
    throw DataError("step_activation: non-finite input");
  }
  if (dt <= 0.0) throw DataError("step_activation: dt must be positive");
  u = clamp_excitation(u);
  a = std::clamp(a, 0.0, 1.0);
  if (u == a) return a;
  const double tau = activation_time_constant(u, a, p);
  const double next = a + dt * (u - a) / tau;
  return u > a ? std::min(next, u) : std::max(next, u);
}

// Active force-length gain: quadratic bump peaking at l = 1, zero outside
// [0.5, 1.6].
inline double active_fl(double l) {
  if (!(l >= 0.5 && l <= 1.6)) return 0.0;
  const double x = (l - 1.0) / 0.6;
  return std::max(0.0, 1.0 - x * x);
}

// Force-velocity gain. `ldot` in L0/s, negative when shortening. Hill
// hyperbola on the concentric side (zero at -vmax), rational saturation
// toward fv_max on the eccentric side; C1 at ldot = 0.
inline double active_fv(double ldot, const MuscleParams& p) {
  constexpr double kCurvature = 0.25;
  const double v = ldot / p.vmax;
  if (v <= -1.0) return 0.0;
  if (v <= 0.0) return (1.0 + v) / (1.0 - v / kCurvature);
  const double slope = (1.0 + 1.0 / kCurvature) / (p.fv_max - 1.0);
  return p.fv_max - (p.fv_max - 1.0) / (1.0 + slope * v);
}

inline double passive_fp(double l) {
  if (!(l > 1.0)) return 0.0;
  const double x = (l - 1.0) / 0.6;
  return 0.1 * x * x;
}

// Tensile force in newtons.
inline double muscle_force(const MuscleState& s, const MuscleParams& p) {
  const double gain = s.activation * active_fl(s.length) * active_fv(s.velocity, p) +
                      passive_fp(s.length);
  return p.peak_force * std::max(0.0, gain);
}

struct RestLengths {
  double rest_length;
  double tendon_length;
};

// Solves (LRmin - LT)/L0 = Rmin and (LRmax - LT)/L0 = Rmax.
inline RestLengths solve_rest_lengths(LengthRange lr, LengthRange r) {
  if (!(lr.min < lr.max)) throw DataError("length range must satisfy min < max");
  if (!(r.min < r.max)) throw DataError("operating range must satisfy min < max");
  const double l0 = (lr.max - lr.min) / (r.max - r.min);
  double lt = lr.min - r.min * l0;
  // Rounding can leave a tendon of intended length zero a few ulps negative.
  if (lt < 0.0 && lt > -1e-12 * std::max(1.0, std::abs(lr.max))) lt = 0.0;
  if (lt < 0.0) {
    throw DataError("solved tendon length " + std::to_string(lt) +
                    " m is negative; widen the operating range R (lower Rmin or raise Rmax)");
  }
  return {l0, lt};
}

inline void apply_rest_lengths(MuscleParams& p) {
  const RestLengths rl = solve_rest_lengths(p.length_range, p.operating_range);
  p.rest_length = rl.rest_length;
  p.tendon_length = rl.tendon_length;
}

inline double normalized_length(double path_length, const MuscleParams& p) {
  return (path_length - p.tendon_length) / p.rest_length;
}

}  // namespace musculo
