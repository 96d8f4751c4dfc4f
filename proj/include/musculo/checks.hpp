#pragma once

// Sanity checks on one-joint models: measured vs linearized oscillation period.

#include <cmath>
#include <vector>

#include "musculo/dynamics.hpp"

namespace musculo {

// Mean time between upward crossings of the rest angle, interpolated
// linearly inside each physics step. Infinity with fewer than two crossings.
inline double measure_period(const Model& m, double amplitude, double duration, const SimConfig& cfg) {
  if (m.joint_count() != 1) throw ModelError("joints", "period check needs a model with exactly one joint");
  const double rest = m.default_positions()[0];
  SimState s = initial_state(m, VecX::Constant(1, rest + amplitude), VecX::Zero(1));
  const double h = cfg.physics_dt;
  const long steps = std::lround(duration / h);
  std::vector<double> crossings;
  double prev = s.q[0] - rest, prev_t = s.time;
  const VecX u = VecX::Zero(m.muscle_count());
  for (long k = 0; k < steps; ++k) {
    physics_substep(m, s, u, cfg, h);
    const double cur = s.q[0] - rest;
    if (prev < 0.0 && cur >= 0.0) crossings.push_back(prev_t + h * (-prev) / (cur - prev));
    prev = cur;
    prev_t = s.time;
  }
  if (crossings.size() < 2) return kInf;
  return (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

// Small-oscillation period about the default pose: 2 pi sqrt(M / K) with M
// the joint-space inertia and K the curvature of the potential energy.
inline double linearized_period(const Model& m, const SimConfig& cfg) {
  if (m.joint_count() != 1) throw ModelError("joints", "period check needs a model with exactly one joint");
  const VecX q0 = m.default_positions();
  const VecX zero = VecX::Zero(1);
  const double inertia = mass_matrix(m, forward_kinematics(m, q0))(0, 0);
  const double h = 1e-4;
  auto energy = [&](double dq) { return mechanical_energy(m, VecX::Constant(1, q0[0] + dq), zero, cfg); };
  const double k = (energy(h) - 2.0 * energy(0.0) + energy(-h)) / (h * h);
  if (!(k > 0.0)) throw ModelError("joints", "default pose is not a stable equilibrium");
  return 2.0 * kPi * std::sqrt(inertia / k);
}

}  // namespace musculo
