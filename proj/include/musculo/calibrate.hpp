#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "musculo/model.hpp"
#include "musculo/rng.hpp"
#include "musculo/routing.hpp"

namespace musculo {

// Extremes of a muscle's path length over random poses, each limited joint
// drawn uniformly within its range. Unlimited joints stay at their default.
inline LengthRange calibrate_length_range(const Model& model, const MusclePath& path, long samples,
                                          std::uint64_t seed) {
  if (samples < 1) throw DataError("calibration needs at least one sample");
  Rng rng = Rng(seed).split("calibrate");
  VecX q = model.default_positions();
  LengthRange out{kInf, -kInf};
  for (long s = 0; s < samples; ++s) {
    for (int j = 0; j < model.joint_count(); ++j) {
      const Joint& joint = model.joints[j];
      if (joint.limited()) q[j] = joint.lower == joint.upper ? joint.lower : rng.uniform(joint.lower, joint.upper);
    }
    const double len = path_length(model, q, path);
    out.min = std::min(out.min, len);
    out.max = std::max(out.max, len);
  }
  return out;
}

inline LengthRange calibrate_length_range(const Model& model, const std::string& muscle, long samples,
                                          std::uint64_t seed) {
  return calibrate_length_range(model, model.muscles[model.muscle_index(muscle)].path, samples, seed);
}

}  // namespace musculo
