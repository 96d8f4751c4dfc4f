#pragma once

// Joint-space trajectories: velocity inference and cyclic clips.

#include <string>
#include <vector>

#include "musculo/common.hpp"
#include "musculo/model.hpp"

namespace musculo {

struct Trajectory {
  double rate = 240.0;
  std::vector<std::string> joints;
  MatX q;   // frames x joints
  MatX qd;  // frames x joints

  int frames() const { return static_cast<int>(q.rows()); }

  static Trajectory for_model(const Model& model, int frames, double rate = 240.0) {
    Trajectory t;
    t.rate = rate;
    for (const auto& j : model.joints) t.joints.push_back(j.name);
    t.q = MatX::Zero(frames, model.joint_count());
    t.qd = MatX::Zero(frames, model.joint_count());
    for (int f = 0; f < frames; ++f) t.q.row(f) = model.default_positions().transpose();
    return t;
  }
};

// Forward differences: v_t = (q_{t+1} - q_t) * rate; the last frame repeats
// the one before it.
inline Trajectory infer_velocities(Trajectory traj) {
  const int n = traj.frames();
  if (n < 2) throw DataError("infer_velocities: need at least two frames");
  traj.qd.resize(n, traj.q.cols());
  for (int t = 0; t + 1 < n; ++t) traj.qd.row(t) = (traj.q.row(t + 1) - traj.q.row(t)) * traj.rate;
  traj.qd.row(n - 1) = traj.qd.row(n - 2);
  return traj;
}

// Takes `period` frames from the middle of the clip, blends the last
// `crossfade` frames of that section toward the frames that precede the
// section in the source (which run smoothly into its first frame), and
// repeats the result `repeats` times. Velocities are wrap-around forward
// differences, so both q and qd are exactly periodic.
inline Trajectory make_cyclic(const Trajectory& traj, int period, int crossfade, int repeats = 3) {
  const int n = traj.frames();
  if (period < 2 || period > n) throw DataError("make_cyclic: period must be within [2, clip length]");
  if (crossfade < 0 || 2 * crossfade >= period) throw DataError("make_cyclic: crossfade must be below half the period");
  if (repeats < 1) throw DataError("make_cyclic: repeats must be positive");
  const int start = (n - period) / 2;
  MatX section = traj.q.middleRows(start, period);
  const int c = crossfade;
  for (int k = 0; k < c; ++k) {
    // Target: what the source did just before the section started. Short of
    // source frames, extrapolate the section's opening slope backward.
    const int src = start - c + k;
    Eigen::RowVectorXd target;
    if (src >= 0) {
      target = traj.q.row(src);
    } else {
      target = section.row(0) - (c - k) * (section.row(1) - section.row(0));
    }
    const double w = static_cast<double>(k + 1) / c;
    const int row = period - c + k;
    section.row(row) = (1.0 - w) * section.row(row) + w * target;
  }
  Trajectory out;
  out.rate = traj.rate;
  out.joints = traj.joints;
  out.q.resize(period * repeats, traj.q.cols());
  out.qd.resize(period * repeats, traj.q.cols());
  MatX vel(period, traj.q.cols());
  for (int t = 0; t < period; ++t) vel.row(t) = (section.row((t + 1) % period) - section.row(t)) * traj.rate;
  for (int r = 0; r < repeats; ++r) {
    out.q.middleRows(r * period, period) = section;
    out.qd.middleRows(r * period, period) = vel;
  }
  return out;
}

}  // namespace musculo
