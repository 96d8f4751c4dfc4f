#pragma once

// Gait cycles from foot contact: stride segmentation, phase normalization
// onto a fixed grid split at toe-off, and profile comparison.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "musculo/common.hpp"

namespace musculo {

struct Stride {
  int stance_start = 0;
  int swing_start = 0;
  int stride_end = 0;  // exclusive; the next stance start

  double stance_fraction() const {
    return static_cast<double>(swing_start - stance_start) / static_cast<double>(stride_end - stance_start);
  }
};

// Flips runs shorter than `min_run` into their neighbours, shortest first
// (earliest on ties), until every run is long enough or one run is left.
inline std::vector<bool> debounce(std::vector<bool> contact, int min_run) {
  struct Run {
    bool value;
    int start, length;
  };
  for (;;) {
    std::vector<Run> runs;
    for (int i = 0; i < static_cast<int>(contact.size()); ++i) {
      if (runs.empty() || runs.back().value != contact[i]) runs.push_back({contact[i], i, 0});
      ++runs.back().length;
    }
    if (runs.size() <= 1) return contact;
    const Run* shortest = nullptr;
    for (const auto& r : runs) {
      if (r.length < min_run && (!shortest || r.length < shortest->length)) shortest = &r;
    }
    if (!shortest) return contact;
    for (int i = shortest->start; i < shortest->start + shortest->length; ++i) contact[i] = !shortest->value;
  }
}

// Complete strides: each runs from a touchdown to the next touchdown with a
// toe-off in between. Contact at frame 0 counts as a touchdown.
inline std::vector<Stride> segment_gait(const std::vector<bool>& contact, int min_phase_frames = 3) {
  if (contact.empty()) throw DataError("segment_gait: empty contact sequence");
  const std::vector<bool> c = debounce(contact, min_phase_frames);
  std::vector<int> touchdowns;
  for (int i = 0; i < static_cast<int>(c.size()); ++i) {
    if (c[i] && (i == 0 || !c[i - 1])) touchdowns.push_back(i);
  }
  std::vector<Stride> out;
  for (std::size_t k = 0; k + 1 < touchdowns.size(); ++k) {
    Stride s{touchdowns[k], touchdowns[k], touchdowns[k + 1]};
    while (s.swing_start < s.stride_end && c[s.swing_start]) ++s.swing_start;
    out.push_back(s);
  }
  if (out.empty()) throw DataError("segment_gait: no complete stride (need touchdown, toe-off, touchdown)");
  return out;
}

inline double mean_stance_fraction(const std::vector<Stride>& strides) {
  if (strides.empty()) throw DataError("gait: no strides");
  double s = 0.0;
  for (const auto& st : strides) s += st.stance_fraction();
  return s / static_cast<double>(strides.size());
}

// Grid points given to stance, proportional to the stance fraction and
// leaving at least one point to each phase.
inline int stance_points(double stance_fraction, int grid) {
  if (grid < 2) throw DataError("gait: grid needs at least two points");
  return std::clamp(static_cast<int>(std::lround(stance_fraction * grid)), 1, grid - 1);
}

namespace detail {

inline double lerp_at(const std::vector<double>& v, double x) {
  const int i = std::clamp(static_cast<int>(std::floor(x)), 0, static_cast<int>(v.size()) - 1);
  if (i + 1 >= static_cast<int>(v.size())) return v[i];
  const double w = x - i;
  return (1.0 - w) * v[i] + w * v[i + 1];
}

}  // namespace detail

// Each stride's stance resampled onto the first `stance_points` grid points
// and its swing onto the rest, then averaged over strides.
inline VecX phase_normalize(const std::vector<double>& trace, const std::vector<Stride>& strides, int grid = 200) {
  if (strides.empty()) throw DataError("phase_normalize: no strides");
  const int n_st = stance_points(mean_stance_fraction(strides), grid);
  const int n_sw = grid - n_st;
  VecX out = VecX::Zero(grid);
  for (const auto& s : strides) {
    if (s.stride_end > static_cast<int>(trace.size())) throw DataError("phase_normalize: trace shorter than strides");
    for (int i = 0; i < n_st; ++i) {
      const double x = s.stance_start + i * static_cast<double>(s.swing_start - s.stance_start) / n_st;
      out[i] += detail::lerp_at(trace, x);
    }
    for (int i = 0; i < n_sw; ++i) {
      const double x = s.swing_start + i * static_cast<double>(s.stride_end - s.swing_start) / n_sw;
      out[n_st + i] += detail::lerp_at(trace, x);
    }
  }
  return out / static_cast<double>(strides.size());
}

struct GaitProfile {
  int grid = 200;
  int stance_points = 100;
  double stance_fraction = 0.5;
  std::vector<Stride> strides;
  std::vector<std::string> muscles;
  std::vector<VecX> traces;  // one per muscle, grid points
};

inline GaitProfile build_profile(const std::vector<std::string>& muscles, const std::vector<std::vector<double>>& traces,
                                 const std::vector<Stride>& strides, int grid = 200) {
  if (muscles.size() != traces.size()) throw DataError("gait: one trace per muscle");
  GaitProfile p;
  p.grid = grid;
  p.strides = strides;
  p.stance_fraction = mean_stance_fraction(strides);
  p.stance_points = stance_points(p.stance_fraction, grid);
  p.muscles = muscles;
  for (const auto& t : traces) p.traces.push_back(phase_normalize(t, strides, grid));
  return p;
}

// Reference given as (phase %, value) samples over one stride whose stance
// occupies the first `stance_fraction` of the cycle; warped piecewise
// linearly so its stance lands on the first `stance_points` grid points.
inline VecX resample_reference(const std::vector<double>& phase, const std::vector<double>& values,
                               double stance_fraction, int grid, int stance_points) {
  if (phase.size() != values.size() || phase.empty()) throw DataError("reference: phase and values differ in length");
  for (std::size_t i = 1; i < phase.size(); ++i) {
    if (!(phase[i] > phase[i - 1])) throw DataError("reference: phase must increase strictly");
  }
  if (!(stance_fraction > 0.0 && stance_fraction < 1.0)) throw DataError("reference: stance fraction outside (0, 1)");
  const double split = 100.0 * stance_fraction;
  auto at = [&](double x) {
    // Cyclic linear interpolation over [0, 100).
    x = std::fmod(x, 100.0);
    if (x < 0) x += 100.0;
    const auto it = std::upper_bound(phase.begin(), phase.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - phase.begin()) % phase.size();
    const std::size_t lo = (hi + phase.size() - 1) % phase.size();
    double x0 = phase[lo], x1 = phase[hi];
    if (x1 <= x0) x1 += 100.0;
    double xx = x;
    if (xx < x0) xx += 100.0;
    const double w = x1 == x0 ? 0.0 : (xx - x0) / (x1 - x0);
    return (1.0 - w) * values[lo] + w * values[hi];
  };
  VecX out(grid);
  const int n_sw = grid - stance_points;
  for (int i = 0; i < stance_points; ++i) out[i] = at(split * i / stance_points);
  for (int i = 0; i < n_sw; ++i) out[stance_points + i] = at(split + (100.0 - split) * i / n_sw);
  return out;
}

struct MuscleComparison {
  std::string muscle;
  double timing_difference = 0.0;  // phase %, sim peak minus reference peak, wrapped to [-50, 50)
  double correlation = 0.0;        // zero lag, min-max normalized traces
  bool excess = false;
  double excess_fraction = 0.0;  // grid share where sim exceeds reference by more than the margin
};

struct CompareOptions {
  double excess_margin = 0.2;
  double excess_share = 0.15;
};

inline VecX minmax_normalize(const VecX& v) {
  const double lo = v.minCoeff(), hi = v.maxCoeff();
  if (hi == lo) return VecX::Zero(v.size());
  return (v.array() - lo) / (hi - lo);
}

inline double zero_lag_correlation(const VecX& a, const VecX& b) {
  const VecX x = minmax_normalize(a), y = minmax_normalize(b);
  const VecX xc = x.array() - x.mean(), yc = y.array() - y.mean();
  const double den = xc.norm() * yc.norm();
  if (den == 0.0) return a == b ? 1.0 : 0.0;
  return std::clamp(xc.dot(yc) / den, -1.0, 1.0);
}

inline std::vector<MuscleComparison> compare_profiles(const GaitProfile& sim, const GaitProfile& ref,
                                                      const CompareOptions& opt = {}) {
  if (sim.grid != ref.grid) throw DataError("compare_profiles: grid sizes differ");
  std::vector<MuscleComparison> out;
  for (std::size_t i = 0; i < sim.muscles.size(); ++i) {
    const auto it = std::find(ref.muscles.begin(), ref.muscles.end(), sim.muscles[i]);
    if (it == ref.muscles.end()) continue;
    const VecX& s = sim.traces[i];
    const VecX& r = ref.traces[static_cast<std::size_t>(it - ref.muscles.begin())];
    MuscleComparison c;
    c.muscle = sim.muscles[i];
    Eigen::Index ps = 0, pr = 0;
    s.maxCoeff(&ps);
    r.maxCoeff(&pr);
    const int g = sim.grid;
    int shift = static_cast<int>(ps - pr);
    shift = ((shift + g / 2) % g + g) % g - g / 2;
    c.timing_difference = 100.0 * shift / g;
    c.correlation = zero_lag_correlation(s, r);
    // Excess on the reference's min-max scale, applied to both traces.
    const double lo = r.minCoeff(), span = r.maxCoeff() - lo;
    const double scale = span > 0.0 ? span : 1.0;
    int over = 0;
    for (int k = 0; k < g; ++k) {
      if ((s[k] - r[k]) / scale > opt.excess_margin) ++over;
    }
    c.excess_fraction = static_cast<double>(over) / g;
    c.excess = c.excess_fraction > opt.excess_share;
    out.push_back(c);
  }
  if (out.empty()) throw DataError("compare_profiles: no muscle in common");
  return out;
}

}  // namespace musculo
