#include <gtest/gtest.h>

#include <cmath>

#include "musculo/gait.hpp"
#include "musculo/rng.hpp"

namespace musculo {
namespace {

std::vector<bool> pattern(int stance, int swing, int repeats, int lead_swing = 0) {
  std::vector<bool> c(lead_swing, false);
  for (int r = 0; r < repeats; ++r) {
    c.insert(c.end(), stance, true);
    c.insert(c.end(), swing, false);
  }
  return c;
}

// ------------------------------------------------------------ segmentation

TEST(SegmentGait, ThirtyTwentyPattern) {
  const auto strides = segment_gait(pattern(30, 20, 4));
  ASSERT_EQ(strides.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(strides[k].stance_start, 50 * k);
    EXPECT_EQ(strides[k].swing_start, 50 * k + 30);
    EXPECT_EQ(strides[k].stride_end, 50 * k + 50);
  }
  EXPECT_DOUBLE_EQ(mean_stance_fraction(strides), 0.6);
}

TEST(SegmentGait, NoSwingOrNoStrideIsAnError) {
  EXPECT_THROW(segment_gait(std::vector<bool>(100, true)), DataError);
  EXPECT_THROW(segment_gait(std::vector<bool>(100, false)), DataError);
  EXPECT_THROW(segment_gait(pattern(30, 20, 1)), DataError);
  EXPECT_THROW(segment_gait({}), DataError);
}

TEST(SegmentGait, OneFrameDropoutIsAbsorbed) {
  auto c = pattern(30, 20, 4);
  c[65] = false;  // mid-stance of the second stride
  const auto strides = segment_gait(c);
  ASSERT_EQ(strides.size(), 3u);
  EXPECT_EQ(strides[1].swing_start, 80);
  c[65] = true;
  c[90] = true;  // one-frame touch mid-swing
  EXPECT_EQ(segment_gait(c).size(), 3u);
}

TEST(SegmentGait, PhasesShorterThanWindowMerged) {
  auto c = pattern(30, 20, 4);
  c[10] = c[11] = false;  // two-frame dropout, below the 3-frame window
  EXPECT_EQ(segment_gait(c).size(), 3u);
  c[12] = false;  // three frames: a real phase now
  EXPECT_EQ(segment_gait(c).size(), 4u);
  EXPECT_EQ(segment_gait(c, 4).size(), 3u);
}

TEST(SegmentGaitProperty, LeadingSwingDoesNotChangeStrides) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int stance = 5 + static_cast<int>(rng.below(40)), swing = 5 + static_cast<int>(rng.below(40));
    const int reps = 2 + static_cast<int>(rng.below(4));
    const auto base = segment_gait(pattern(stance, swing, reps));
    const int lead = 3 + static_cast<int>(rng.below(30));  // shorter leads are debounced away
    const auto shifted = segment_gait(pattern(stance, swing, reps, lead));
    ASSERT_EQ(base.size(), shifted.size());
    for (std::size_t k = 0; k < base.size(); ++k) {
      ASSERT_EQ(shifted[k].stance_start, base[k].stance_start + lead);
      ASSERT_EQ(shifted[k].swing_start, base[k].swing_start + lead);
      ASSERT_EQ(shifted[k].stride_end, base[k].stride_end + lead);
    }
  }
}

TEST(Debounce, RandomFlickerLeavesOnlyLongRuns) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> c(200);
    for (auto&& v : c) v = rng.uniform() < 0.5;
    const auto d = debounce(c, 3);
    int run = 1;
    std::vector<int> lengths;
    for (std::size_t i = 1; i <= d.size(); ++i) {
      if (i == d.size() || d[i] != d[i - 1]) {
        lengths.push_back(run);
        run = 1;
      } else {
        ++run;
      }
    }
    if (lengths.size() > 1) {
      for (int l : lengths) ASSERT_GE(l, 3);
    }
  }
}

// ------------------------------------------------------------ phase normalization

TEST(PhaseNormalize, ConstantTrace) {
  const auto strides = segment_gait(pattern(30, 20, 4));
  const VecX g = phase_normalize(std::vector<double>(200, 0.37), strides);
  ASSERT_EQ(g.size(), 200);
  for (int i = 0; i < 200; ++i) EXPECT_DOUBLE_EQ(g[i], 0.37);
}

TEST(PhaseNormalize, RampOverOneStride) {
  const auto c = pattern(31, 19, 2);
  const auto strides = segment_gait(c);
  ASSERT_EQ(strides.size(), 1u);
  std::vector<double> trace(c.size());
  for (std::size_t f = 0; f < trace.size(); ++f) trace[f] = f / 50.0;
  const VecX g = phase_normalize(trace, strides);
  for (int i = 0; i < 200; ++i) EXPECT_NEAR(g[i], i / 200.0, 1.0 / 50.0);
  EXPECT_EQ(g[0], 0.0);
}

TEST(PhaseNormalize, StanceGetsProportionalShare) {
  const auto strides = segment_gait(pattern(30, 20, 4));
  EXPECT_EQ(stance_points(mean_stance_fraction(strides), 200), 120);
  // Step trace: 1 in stance, 0 in swing.
  const auto c = pattern(30, 20, 4);
  std::vector<double> trace(c.begin(), c.end());
  const VecX g = phase_normalize(trace, strides);
  // Points whose sample time falls strictly between frames blend neighbours.
  for (int i = 0; i <= 116; ++i) EXPECT_EQ(g[i], 1.0) << i;
  for (int i = 120; i <= 196; ++i) EXPECT_EQ(g[i], 0.0) << i;
  EXPECT_DOUBLE_EQ(g[119], 0.25);
}

TEST(PhaseNormalize, IdenticalStridesAverageToOne) {
  const auto strides = segment_gait(pattern(30, 20, 4));
  std::vector<double> trace(200);
  for (int f = 0; f < 200; ++f) trace[f] = std::sin(2 * kPi * (f % 50) / 50.0) + 0.1 * (f % 50);
  const VecX all = phase_normalize(trace, strides);
  const VecX one = phase_normalize(trace, {strides[0]});
  EXPECT_LT((all - one).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PhaseNormalizeProperty, SamplingRateInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double duty = rng.uniform(0.4, 0.7);
    const double phase0 = rng.uniform(0, 2 * kPi);
    auto signal = [&](double phase) { return std::sin(phase + phase0) + 0.3 * std::cos(2 * phase); };
    std::vector<VecX> grids;
    int min_frames = 1 << 30;
    for (int per_stride : {60, 150}) {
      const int stance = static_cast<int>(std::lround(duty * per_stride));
      const auto c = pattern(stance, per_stride - stance, 3);
      std::vector<double> trace(c.size());
      for (std::size_t f = 0; f < c.size(); ++f) trace[f] = signal(2 * kPi * (f % per_stride) / per_stride);
      grids.push_back(phase_normalize(trace, segment_gait(c)));
      min_frames = std::min(min_frames, per_stride);
    }
    EXPECT_LT((grids[0] - grids[1]).cwiseAbs().maxCoeff(), 2.0 / min_frames * 4.0 * kPi / 2.0);
  }
}

// ------------------------------------------------------------ comparison

GaitProfile profile(std::vector<std::string> names, std::vector<VecX> traces, int grid = 200) {
  GaitProfile p;
  p.grid = grid;
  p.muscles = std::move(names);
  p.traces = std::move(traces);
  return p;
}

VecX bump(int grid, double center_pct, double width_pct = 8.0) {
  VecX v(grid);
  for (int i = 0; i < grid; ++i) {
    double d = 100.0 * i / grid - center_pct;
    d = std::remainder(d, 100.0);
    v[i] = 0.1 + std::exp(-0.5 * d * d / (width_pct * width_pct));
  }
  return v;
}

TEST(CompareProfiles, SelfComparison) {
  const GaitProfile p = profile({"a", "b"}, {bump(200, 30), bump(200, 75)});
  const auto rep = compare_profiles(p, p);
  ASSERT_EQ(rep.size(), 2u);
  for (const auto& c : rep) {
    EXPECT_EQ(c.timing_difference, 0.0);
    EXPECT_DOUBLE_EQ(c.correlation, 1.0);
    EXPECT_FALSE(c.excess);
  }
}

TEST(CompareProfiles, TenPercentShiftDetected) {
  for (double center : {5.0, 30.0, 95.0}) {
    const GaitProfile ref = profile({"m"}, {bump(200, center)});
    const GaitProfile sim = profile({"m"}, {bump(200, center + 10.0)});
    const auto rep = compare_profiles(sim, ref);
    EXPECT_NEAR(rep[0].timing_difference, 10.0, 100.0 / 200) << center;
    EXPECT_LT(rep[0].correlation, 1.0);
  }
}

TEST(CompareProfiles, OffsetSetsExcessFlag) {
  const VecX r = bump(200, 40);
  const double span = r.maxCoeff() - r.minCoeff();
  const GaitProfile ref = profile({"m"}, {r});
  const GaitProfile sim = profile({"m"}, {VecX(r.array() + 0.5 * span)});
  const auto rep = compare_profiles(sim, ref);
  EXPECT_TRUE(rep[0].excess);
  EXPECT_EQ(rep[0].excess_fraction, 1.0);
  EXPECT_NEAR(rep[0].correlation, 1.0, 1e-12);
  // Just under the margin, nowhere flagged.
  const GaitProfile close = profile({"m"}, {VecX(r.array() + 0.19 * span)});
  EXPECT_FALSE(compare_profiles(close, ref)[0].excess);
}

TEST(CompareProfiles, ExcessNeedsMoreThanFifteenPercentOfTheCycle) {
  const VecX r = VecX::LinSpaced(200, 0.0, 1.0);
  VecX s = r;
  for (int i = 0; i < 30; ++i) s[i] += 0.5;  // exactly 15%
  EXPECT_FALSE(compare_profiles(profile({"m"}, {s}), profile({"m"}, {r}))[0].excess);
  s[30] += 0.5;
  EXPECT_TRUE(compare_profiles(profile({"m"}, {s}), profile({"m"}, {r}))[0].excess);
}

TEST(CompareProfiles, OnlySharedMusclesReported) {
  const GaitProfile sim = profile({"a", "b", "c"}, {bump(200, 10), bump(200, 20), bump(200, 30)});
  const GaitProfile ref = profile({"c", "x", "a"}, {bump(200, 30), bump(200, 50), bump(200, 10)});
  const auto rep = compare_profiles(sim, ref);
  ASSERT_EQ(rep.size(), 2u);
  EXPECT_EQ(rep[0].muscle, "a");
  EXPECT_EQ(rep[1].muscle, "c");
  EXPECT_THROW(compare_profiles(sim, profile({"z"}, {bump(200, 1)})), DataError);
  EXPECT_THROW(compare_profiles(sim, profile({"a"}, {bump(100, 1)}, 100)), DataError);
}

TEST(CompareProfilesProperty, SelfComparisonOnRandomTraces) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    VecX v(200);
    for (int i = 0; i < 200; ++i) v[i] = rng.uniform(-3, 3);
    const auto rep = compare_profiles(profile({"m"}, {v}), profile({"m"}, {v}));
    ASSERT_EQ(rep[0].timing_difference, 0.0);
    ASSERT_NEAR(rep[0].correlation, 1.0, 1e-12);
  }
  const VecX flat = VecX::Constant(200, 0.4);
  EXPECT_EQ(compare_profiles(profile({"m"}, {flat}), profile({"m"}, {flat}))[0].correlation, 1.0);
}

TEST(ResampleReference, SameStanceSplitIsPlainResampling) {
  std::vector<double> phase, value;
  for (int i = 0; i < 100; ++i) {
    phase.push_back(i);
    value.push_back(std::sin(2 * kPi * i / 100.0));
  }
  const VecX g = resample_reference(phase, value, 0.6, 200, 120);
  for (int i = 0; i < 200; ++i) EXPECT_NEAR(g[i], std::sin(2 * kPi * i / 200.0), 2e-3);
}

TEST(ResampleReference, StanceWarpedOntoStanceGrid) {
  // Reference: 1 during its 40% stance, 0 during swing; our grid has 60% stance.
  std::vector<double> phase, value;
  for (int i = 0; i < 1000; ++i) {
    phase.push_back(i / 10.0);
    value.push_back(i < 400 ? 1.0 : 0.0);
  }
  const VecX g = resample_reference(phase, value, 0.4, 200, 120);
  for (int i = 0; i < 120; ++i) EXPECT_EQ(g[i], 1.0);
  for (int i = 121; i < 200; ++i) EXPECT_EQ(g[i], 0.0);
  EXPECT_THROW(resample_reference({0, 0}, {1, 2}, 0.5, 200, 100), DataError);
  EXPECT_THROW(resample_reference({0, 50}, {1, 2}, 1.0, 200, 100), DataError);
}

TEST(BuildProfile, CarriesStridesAndSplit) {
  const auto c = pattern(30, 20, 4);
  const auto strides = segment_gait(c);
  const GaitProfile p = build_profile({"m"}, {std::vector<double>(200, 1.0)}, strides);
  EXPECT_EQ(p.stance_points, 120);
  EXPECT_DOUBLE_EQ(p.stance_fraction, 0.6);
  EXPECT_EQ(p.traces[0].size(), 200);
  EXPECT_EQ(p.strides.size(), 3u);
}

}  // namespace
}  // namespace musculo
