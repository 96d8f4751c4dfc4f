#include <gtest/gtest.h>

#include <cmath>

#include "musculo/mocap.hpp"
#include "musculo/trajectory.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace musculo {
namespace {

using testing::full_clip;
using testing::marker_names;
using testing::walking_clip;

void hide(Clip& c, int t, int m) {
  c.mask(t, m) = false;
  c.set_point(t, m, Vec3::Constant(std::nan("")));
}

// ------------------------------------------------------------ select

TEST(SelectInterval, FullClipIsSelectedWhole) {
  const Clip c = full_clip(14, 480, [](int, double) { return Vec3::Zero(); });
  const auto iv = select_interval(c);
  ASSERT_TRUE(iv);
  EXPECT_EQ(iv->start, 0);
  EXPECT_EQ(iv->end, 480);
}

TEST(SelectInterval, TooFewMarkersGivesNone) {
  Clip c = full_clip(14, 480, [](int, double) { return Vec3::Zero(); });
  for (int t = 0; t < 480; ++t) {
    for (int m = 9; m < 14; ++m) hide(c, t, m);
  }
  EXPECT_FALSE(select_interval(c));
}

// Exhaustive oracle: check every [a, b) window.
std::optional<Interval> brute_force_interval(const Clip& c, int min_markers, int need) {
  std::optional<Interval> best;
  for (int a = 0; a < c.frames(); ++a) {
    for (int b = a + 1; b <= c.frames(); ++b) {
      bool ok = true;
      for (int t = a; t < b && ok; ++t) ok = c.present_count(t) >= min_markers;
      if (!ok) break;
      if (b - a >= need && (!best || b - a > best->length())) best = Interval{a, b};
    }
  }
  return best;
}

TEST(SelectInterval, PicksLongerOfTwoWindows) {
  Clip c = full_clip(14, 240 * 4, [](int, double) { return Vec3::Zero(); });
  // Windows: [0, 288) = 1.2 s, gap, [300, 780) = 2.0 s, gap after.
  for (int t : {288, 289, 290, 291, 292, 293, 294, 295, 296, 297, 298, 299}) {
    for (int m = 0; m < 6; ++m) hide(c, t, m);
  }
  for (int t = 780; t < c.frames(); ++t) {
    for (int m = 0; m < 5; ++m) hide(c, t, m);
  }
  const auto iv = select_interval(c);
  ASSERT_TRUE(iv);
  EXPECT_EQ(iv->start, 300);
  EXPECT_EQ(iv->end, 780);
  const auto oracle = brute_force_interval(c, 10, 240);
  ASSERT_TRUE(oracle);
  EXPECT_EQ(iv->start, oracle->start);
  EXPECT_EQ(iv->end, oracle->end);
}

TEST(SelectInterval, RandomMasksMatchBruteForce) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    Clip c = full_clip(12, 200, [](int, double) { return Vec3::Zero(); });
    for (int t = 0; t < 200; ++t) {
      if (rng.uniform() < 0.05) {
        for (int m = 0; m < 4; ++m) hide(c, t, m);
      }
    }
    const double min_duration = 20.0 / 240.0;
    const auto iv = select_interval(c, 10, min_duration);
    const auto oracle = brute_force_interval(c, 10, 20);
    ASSERT_EQ(iv.has_value(), oracle.has_value());
    if (iv) {
      EXPECT_EQ(iv->start, oracle->start);
      EXPECT_EQ(iv->end, oracle->end);
    }
  }
}

// ------------------------------------------------------------ impute

TEST(Impute, CompleteClipIsUnchanged) {
  Rng rng(1);
  const Clip c = walking_clip(rng, 5, 100, 1.5);
  const Clip out = impute(c);
  EXPECT_TRUE((out.data.array() == c.data.array()).all());
  EXPECT_TRUE(out.mask.all());
}

TEST(Impute, GapBetweenEqualNeighborsIsFilledExactly) {
  Clip c = full_clip(3, 50, [](int m, double) { return Vec3(0.7 + m, -1.3, 2.9); });
  hide(c, 20, 1);
  const Clip out = impute(c);
  EXPECT_EQ(out.point(20, 1), Vec3(1.7, -1.3, 2.9));
}

TEST(Impute, SinusoidGapWithinFivePercent) {
  const double amp = 0.3, freq = 2.0;
  Clip c = full_clip(1, 480, [&](int, double t) { return Vec3(amp * std::sin(2 * kPi * freq * t), 0, 0); });
  for (int t = 200; t < 210; ++t) hide(c, t, 0);
  const Clip out = impute(c);
  double worst = 0.0;
  for (int t = 200; t < 210; ++t) worst = std::max(worst, std::abs(out.data(t, 0) - amp * std::sin(2 * kPi * freq * t / 240.0)));
  EXPECT_LT(worst, 0.05 * amp);
}

TEST(Impute, PresentEntriesAreBitwiseUntouched) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Clip c = walking_clip(rng, 6, 150, 1.2);
    const Clip before = c;
    for (int t = 0; t < c.frames(); ++t) {
      for (int m = 0; m < c.marker_count(); ++m) {
        if (rng.uniform() < 0.3) hide(c, t, m);
      }
    }
    const Clip out = impute(c);
    for (int t = 0; t < c.frames(); ++t) {
      for (int m = 0; m < c.marker_count(); ++m) {
        if (c.mask(t, m)) {
          for (int k = 0; k < 3; ++k) ASSERT_EQ(out.data(t, 3 * m + k), c.data(t, 3 * m + k));
        }
      }
    }
    EXPECT_TRUE(out.mask.all());
    EXPECT_TRUE(out.data.allFinite());
    (void)before;
  }
}

TEST(Impute, ExtrapolatesConstantAtEnds) {
  Clip c = full_clip(1, 30, [](int, double t) { return Vec3(t, 2 * t, 0); });
  for (int t : {0, 1, 2, 27, 28, 29}) hide(c, t, 0);
  const Clip out = impute(c);
  EXPECT_EQ(out.point(0, 0), c.point(3, 0));
  EXPECT_EQ(out.point(29, 0), c.point(26, 0));
}

TEST(Impute, NeverObservedMarkerIsAnError) {
  Clip c = full_clip(2, 10, [](int, double) { return Vec3::Zero(); });
  for (int t = 0; t < 10; ++t) hide(c, t, 1);
  EXPECT_THROW(impute(c), DataError);
}

TEST(Impute, CommutesWithRescale) {
  Rng rng(3);
  Clip c = walking_clip(rng, 4, 200, 1.0);
  for (int t = 0; t < c.frames(); ++t) {
    if (rng.uniform() < 0.2) hide(c, t, static_cast<int>(rng.below(4)));
  }
  for (double factor : {0.5, 1.7, 3.0}) {
    const Clip a = impute(rescale(c, factor));
    const Clip b = rescale(impute(c), factor);
    EXPECT_LT((a.data - b.data).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Impute, SplineMatchesHandComputedNaturalSpline) {
  // Knots at 0, 1, 3 with values 0, 1, 0: moment at x=1 solves
  // 2(1+2) M1 = 6((0-1)/2 - (1-0)/1) -> M1 = -1.5.
  std::vector<double> v = {0, 1, 0, 0};
  std::vector<bool> present = {true, true, false, true};
  spline_impute(v, present);
  // Segment [1, 3], d = 1, h = 2: slope = -1/2 - 2 (2 M1) / 6 = 0.5.
  const double m1 = -1.5;
  const double slope = -0.5 - 2.0 * (2 * m1) / 6.0;
  const double expected = 1.0 + slope * 1 + m1 / 2 * 1 + (0 - m1) / 12.0 * 1;
  EXPECT_NEAR(v[2], expected, 1e-15);
}

// ------------------------------------------------------------ evaluate

TEST(EvaluateImputer, ConstantClipScoresZero) {
  const Clip c = full_clip(14, 400, [](int m, double) { return Vec3(m, 1, 2); });
  const ImputerScore s = evaluate_imputer(c, spline_impute, 0.1, 100, 5);
  EXPECT_GT(s.masked, 0);
  EXPECT_EQ(s.mean_error, 0.0);
}

TEST(EvaluateImputer, SeedDeterministic) {
  Rng rng(4);
  const Clip c = walking_clip(rng, 14, 600, 1.3);
  const ImputerScore a = evaluate_imputer(c, spline_impute, 0.1, 100, 99);
  const ImputerScore b = evaluate_imputer(c, spline_impute, 0.1, 100, 99);
  EXPECT_EQ(a.mean_error, b.mean_error);
  EXPECT_EQ(a.masked, b.masked);
  const ImputerScore other = evaluate_imputer(c, spline_impute, 0.1, 100, 100);
  EXPECT_NE(a.mean_error, other.mean_error);
}

TEST(EvaluateImputer, MaskRateNearProbability) {
  Rng rng(5);
  const Clip c = walking_clip(rng, 14, 2400, 1.0);
  const ImputerScore s = evaluate_imputer(c, spline_impute, 0.1, 100, 1);
  const double rate = static_cast<double>(s.masked) / (14.0 * 2400.0);
  EXPECT_NEAR(rate, 0.1, 0.01);
}

TEST(EvaluateImputer, SplineBeatsZeroOrderHoldOnEveryBenchmark) {
  Rng rng(6);
  for (int bench = 0; bench < 8; ++bench) {
    const double freq = 0.8 + 0.3 * bench;
    const Clip c = walking_clip(rng, 14, 1200, freq);
    const double spline = evaluate_imputer(c, spline_impute, 0.1, 100, bench).mean_error;
    const double hold = evaluate_imputer(c, hold_impute, 0.1, 100, bench).mean_error;
    EXPECT_LT(spline, hold) << "benchmark " << bench;
  }
}

// ------------------------------------------------------------ rescale

TEST(Rescale, IdentityAndDoubling) {
  Rng rng(7);
  const Clip c = walking_clip(rng, 4, 20, 1.0);
  EXPECT_TRUE((rescale(c, 1.0).data.array() == c.data.array()).all());
  const Clip d = rescale(c, 2.0);
  for (int t = 0; t < 20; ++t) {
    EXPECT_NEAR((d.point(t, 0) - d.point(t, 3)).norm(), 2 * (c.point(t, 0) - c.point(t, 3)).norm(), 1e-12);
  }
  EXPECT_TRUE((d.mask.array() == c.mask.array()).all());
  EXPECT_THROW(rescale(c, 0.0), DataError);
}

// ------------------------------------------------------------ trajectories

Trajectory ramp_trajectory(int frames, double slope) {
  Trajectory t;
  t.joints = {"a", "b"};
  t.q.resize(frames, 2);
  for (int f = 0; f < frames; ++f) t.q.row(f) << slope * f, 0.3;
  return t;
}

TEST(InferVelocities, Examples) {
  const Trajectory ramp = infer_velocities(ramp_trajectory(50, 0.01));
  for (int f = 0; f < 50; ++f) {
    EXPECT_NEAR(ramp.qd(f, 0), 2.4, 1e-9);
    EXPECT_EQ(ramp.qd(f, 1), 0.0);
  }
  EXPECT_THROW(infer_velocities(ramp_trajectory(1, 0.0)), DataError);
}

TEST(InferVelocities, ConsistentWithDifferences) {
  Rng rng(8);
  Trajectory t;
  t.joints = {"a"};
  t.q.resize(100, 1);
  for (int f = 0; f < 100; ++f) t.q(f, 0) = rng.uniform(-1, 1);
  const Trajectory v = infer_velocities(t);
  for (int f = 0; f + 1 < 100; ++f) EXPECT_NEAR(v.q(f, 0) + v.qd(f, 0) / t.rate, t.q(f + 1, 0), 1e-9);
  EXPECT_EQ(v.qd(99, 0), v.qd(98, 0));
}

Trajectory sampled(int frames, const std::function<double(int)>& fn) {
  Trajectory t;
  t.joints = {"a"};
  t.q.resize(frames, 1);
  for (int f = 0; f < frames; ++f) t.q(f, 0) = fn(f);
  return t;
}

TEST(MakeCyclic, PeriodicSectionIsPlainTiling) {
  const int period = 60;
  const Trajectory t = sampled(400, [&](int f) { return std::sin(2 * kPi * f / period) + 0.2 * std::cos(4 * kPi * f / period); });
  const Trajectory c = make_cyclic(t, period, 12, 4);
  const int start = (400 - period) / 2;
  ASSERT_EQ(c.frames(), 4 * period);
  for (int f = 0; f < c.frames(); ++f) EXPECT_NEAR(c.q(f, 0), t.q(start + f % period, 0), 1e-12);
}

TEST(MakeCyclic, ExactlyPeriodicOutput) {
  const Trajectory t = sampled(300, [](int f) { return 0.01 * f + std::sin(f * 0.05); });
  const Trajectory c = make_cyclic(t, 100, 20, 3);
  for (int f = 0; f + 100 < c.frames(); ++f) {
    EXPECT_EQ(c.q(f + 100, 0), c.q(f, 0));
    EXPECT_EQ(c.qd(f + 100, 0), c.qd(f, 0));
  }
}

TEST(MakeCyclic, SeamJumpShrinksTenfold) {
  // A drifting smooth signal: the raw section has a seam jump equal to the drift over a period.
  for (int crossfade : {12, 16, 24}) {
    const Trajectory t = sampled(400, [](int f) { return 0.004 * f + 0.1 * std::sin(f * 0.07); });
    const int period = 120;
    const int start = (400 - period) / 2;
    const double raw_jump = std::abs(t.q(start + period - 1, 0) - t.q(start, 0));
    const Trajectory c = make_cyclic(t, period, crossfade, 2);
    const double seam = std::abs(c.q(period, 0) - c.q(period - 1, 0));
    EXPECT_LT(seam, raw_jump / 10) << crossfade;
    // Versus the largest ordinary step of the source signal.
    double max_step = 0.0;
    for (int f = 0; f + 1 < 400; ++f) max_step = std::max(max_step, std::abs(t.q(f + 1, 0) - t.q(f, 0)));
    EXPECT_LE(seam, max_step + 1e-12);
  }
}

TEST(MakeCyclic, Preconditions) {
  const Trajectory t = sampled(50, [](int f) { return f; });
  EXPECT_THROW(make_cyclic(t, 60, 5), DataError);
  EXPECT_THROW(make_cyclic(t, 40, 20), DataError);
}

}  // namespace
}  // namespace musculo
