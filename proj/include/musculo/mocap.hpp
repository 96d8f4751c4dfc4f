#pragma once

// Marker clips: valid-interval selection, gap filling and the masking
// protocol used to score gap fillers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "musculo/common.hpp"
#include "musculo/rng.hpp"

namespace musculo {

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Clip {
  double rate = 240.0;
  std::vector<std::string> markers;
  MatX data;     // frames x (3 * markers), meters; NaN where missing
  BoolMat mask;  // frames x markers, true = present

  int frames() const { return static_cast<int>(data.rows()); }
  int marker_count() const { return static_cast<int>(markers.size()); }
  Vec3 point(int t, int m) const { return data.block<1, 3>(t, 3 * m).transpose(); }
  void set_point(int t, int m, const Vec3& p) { data.block<1, 3>(t, 3 * m) = p.transpose(); }
  int present_count(int t) const { return static_cast<int>(mask.row(t).count()); }

  static Clip empty(std::vector<std::string> names, int frames, double rate = 240.0) {
    Clip c;
    c.rate = rate;
    c.markers = std::move(names);
    c.data = MatX::Constant(frames, 3 * static_cast<int>(c.markers.size()), std::nan(""));
    c.mask = BoolMat::Constant(frames, static_cast<int>(c.markers.size()), false);
    return c;
  }

  void validate() const {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw DataError("clip rate must be positive");
    if (data.cols() != 3 * marker_count() || mask.cols() != marker_count() || mask.rows() != data.rows()) {
      throw DataError("clip data and mask dimensions disagree");
    }
    for (int t = 0; t < frames(); ++t) {
      for (int m = 0; m < marker_count(); ++m) {
        if (mask(t, m) && !point(t, m).allFinite()) {
          throw DataError("marker '" + markers[m] + "' present but non-finite at frame " + std::to_string(t));
        }
      }
    }
  }
};

struct Interval {
  int start = 0;
  int end = 0;  // exclusive
  int length() const { return end - start; }
};

// Longest run of frames with at least `min_markers` markers present, if it
// lasts at least `min_duration` seconds. Earliest wins ties.
inline std::optional<Interval> select_interval(const Clip& clip, int min_markers = 10, double min_duration = 1.0) {
  const int need = static_cast<int>(std::ceil(min_duration * clip.rate - 1e-9));
  Interval best{0, 0};
  int run_start = -1;
  for (int t = 0; t <= clip.frames(); ++t) {
    const bool ok = t < clip.frames() && clip.present_count(t) >= min_markers;
    if (ok && run_start < 0) run_start = t;
    if (!ok && run_start >= 0) {
      if (t - run_start > best.length()) best = {run_start, t};
      run_start = -1;
    }
  }
  if (best.length() == 0 || best.length() < need) return std::nullopt;
  return best;
}

inline Clip slice(const Clip& clip, Interval iv) {
  if (iv.start < 0 || iv.end > clip.frames() || iv.start >= iv.end) throw DataError("slice: bad interval");
  Clip out;
  out.rate = clip.rate;
  out.markers = clip.markers;
  out.data = clip.data.middleRows(iv.start, iv.length());
  out.mask = clip.mask.middleRows(iv.start, iv.length());
  return out;
}

// Fills missing samples of one uniformly sampled series in place. `present`
// has the same length as `values`; at least one entry is present.
using Imputer = std::function<void(std::vector<double>& values, const std::vector<bool>& present)>;

namespace detail {

// Natural cubic spline through (x_i, y_i), x strictly increasing. Returns
// the second derivatives at the knots.
inline std::vector<double> natural_spline_moments(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  // Tridiagonal system for the interior moments (Thomas algorithm).
  std::vector<double> diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x[i] - x[i - 1];
    const double h1 = x[i + 1] - x[i];
    diag[i] = 2.0 * (h0 + h1);
    upper[i] = h1;
    rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
  }
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double lower = x[i] - x[i - 1];
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
    if (i == 1) break;
  }
  return m;
}

}  // namespace detail

// Natural cubic spline over the present samples, constant beyond the first
// and last present sample.
inline void spline_impute(std::vector<double>& values, const std::vector<bool>& present) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (present[i]) {
      x.push_back(static_cast<double>(i));
      y.push_back(values[i]);
    }
  }
  if (x.empty()) throw DataError("impute: series has no present samples");
  const std::vector<double> mom = detail::natural_spline_moments(x, y);
  std::size_t k = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (present[i]) continue;
    const double t = static_cast<double>(i);
    if (t < x.front()) {
      values[i] = y.front();
      continue;
    }
    if (t > x.back()) {
      values[i] = y.back();
      continue;
    }
    while (k + 1 < x.size() && x[k + 1] < t) ++k;
    const double h = x[k + 1] - x[k];
    const double d = t - x[k];
    const double slope = (y[k + 1] - y[k]) / h - h * (2.0 * mom[k] + mom[k + 1]) / 6.0;
    values[i] = y[k] + d * (slope + d * (mom[k] / 2.0 + d * (mom[k + 1] - mom[k]) / (6.0 * h)));
  }
}

// Zero-order hold: repeat the last present sample (the first one before it).
inline void hold_impute(std::vector<double>& values, const std::vector<bool>& present) {
  std::optional<double> last;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (present[i]) last = values[i];
    else if (last) values[i] = *last;
  }
  if (!last) throw DataError("impute: series has no present samples");
  std::optional<double> first;
  for (std::size_t i = 0; i < values.size() && !first; ++i) {
    if (present[i]) first = values[i];
  }
  for (std::size_t i = 0; i < values.size() && !present[i]; ++i) values[i] = *first;
}

// Every missing entry filled by `imputer`, applied per marker coordinate.
// Present entries are copied through untouched.
inline Clip impute(const Clip& clip, const Imputer& imputer = spline_impute) {
  Clip out = clip;
  const int n = clip.frames();
  std::vector<double> series(n);
  std::vector<bool> present(n);
  for (int m = 0; m < clip.marker_count(); ++m) {
    bool any_missing = false, any_present = false;
    for (int t = 0; t < n; ++t) {
      present[t] = clip.mask(t, m);
      any_missing = any_missing || !present[t];
      any_present = any_present || present[t];
    }
    if (!any_missing) continue;
    if (!any_present) throw DataError("impute: marker '" + clip.markers[m] + "' is never observed");
    for (int c = 0; c < 3; ++c) {
      for (int t = 0; t < n; ++t) series[t] = clip.data(t, 3 * m + c);
      imputer(series, present);
      for (int t = 0; t < n; ++t) {
        if (!present[t]) out.data(t, 3 * m + c) = series[t];
      }
    }
  }
  out.mask.setConstant(true);
  return out;
}

struct ImputerScore {
  double mean_error = 0.0;  // m, over masked entries
  long masked = 0;
};

// Masking protocol: split into segments of `segment_len` frames, hide each
// present marker sample with probability `mask_prob`, fill each segment on
// its own and average the 3-D error over the hidden samples. A marker that
// would lose every sample in a segment keeps its first one.
inline ImputerScore evaluate_imputer(const Clip& clip, const Imputer& imputer, double mask_prob = 0.1,
                                     int segment_len = 100, std::uint64_t seed = 0) {
  if (segment_len < 2) throw DataError("evaluate_imputer: segment length must be at least 2");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw DataError("evaluate_imputer: mask probability outside [0, 1]");
  Rng rng = Rng(seed).split("impute-eval");
  const int segments = std::max(1, clip.frames() / segment_len);
  const int len = std::min(segment_len, clip.frames());
  double total = 0.0;
  long count = 0;
  for (int s = 0; s < segments; ++s) {
    Clip seg = slice(clip, {s * len, s * len + len});
    BoolMat hidden = BoolMat::Constant(len, seg.marker_count(), false);
    for (int m = 0; m < seg.marker_count(); ++m) {
      int kept = 0, first = -1;
      for (int t = 0; t < len; ++t) {
        if (!seg.mask(t, m)) continue;
        if (first < 0) first = t;
        if (rng.uniform() < mask_prob) hidden(t, m) = true;
        else ++kept;
      }
      if (first < 0) continue;
      if (kept == 0) hidden(first, m) = false;
    }
    Clip masked = seg;
    for (int t = 0; t < len; ++t) {
      for (int m = 0; m < seg.marker_count(); ++m) {
        if (hidden(t, m)) {
          masked.mask(t, m) = false;
          masked.set_point(t, m, Vec3::Constant(std::nan("")));
        }
      }
    }
    // Markers absent from the whole segment stay absent; fill the rest.
    Clip filled = masked;
    std::vector<double> series(len);
    std::vector<bool> present(len);
    for (int m = 0; m < seg.marker_count(); ++m) {
      bool any = false;
      for (int t = 0; t < len; ++t) any = any || masked.mask(t, m);
      if (!any) continue;
      for (int t = 0; t < len; ++t) present[t] = masked.mask(t, m);
      for (int c = 0; c < 3; ++c) {
        for (int t = 0; t < len; ++t) series[t] = masked.data(t, 3 * m + c);
        imputer(series, present);
        for (int t = 0; t < len; ++t) filled.data(t, 3 * m + c) = series[t];
      }
    }
    for (int t = 0; t < len; ++t) {
      for (int m = 0; m < seg.marker_count(); ++m) {
        if (!hidden(t, m)) continue;
        total += (filled.point(t, m) - seg.point(t, m)).norm();
        ++count;
      }
    }
  }
  return {count > 0 ? total / static_cast<double>(count) : 0.0, count};
}

inline Clip rescale(const Clip& clip, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw DataError("rescale: factor must be positive");
  Clip out = clip;
  out.data *= factor;
  return out;
}

}  // namespace musculo
