#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rsepi/sweep.hpp"

namespace rsepi {
namespace {

TEST(Quartiles, KnownValues) {
  Quartiles q = ComputeQuartiles({5, 1, 3, 2, 4});
  EXPECT_DOUBLE_EQ(q.q1, 2.0);
  EXPECT_DOUBLE_EQ(q.median, 3.0);
  EXPECT_DOUBLE_EQ(q.q3, 4.0);
  q = ComputeQuartiles({4, 3, 2, 1});
  EXPECT_DOUBLE_EQ(q.q1, 1.75);
  EXPECT_DOUBLE_EQ(q.median, 2.5);
  EXPECT_DOUBLE_EQ(q.q3, 3.25);
  q = ComputeQuartiles({7.0});
  EXPECT_DOUBLE_EQ(q.q1, 7.0);
  EXPECT_DOUBLE_EQ(q.q3, 7.0);
}

TEST(Quartiles, IgnoresNanAndHandlesEmpty) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Quartiles q = ComputeQuartiles({nan, 1, 2, 3, nan});
  EXPECT_DOUBLE_EQ(q.median, 2.0);
  EXPECT_TRUE(std::isnan(ComputeQuartiles({}).median));
  EXPECT_TRUE(std::isnan(ComputeQuartiles({nan}).q1));
}

TEST(Quartiles, PermutationInvariant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> v(101);
  for (double& x : v) x = g(rng);
  const Quartiles a = ComputeQuartiles(v);
  std::shuffle(v.begin(), v.end(), rng);
  const Quartiles b = ComputeQuartiles(v);
  EXPECT_EQ(a.q1, b.q1);
  EXPECT_EQ(a.median, b.median);
  EXPECT_EQ(a.q3, b.q3);
  std::sort(v.begin(), v.end());
  EXPECT_EQ(a.median, v[50]);
}

TEST(Sweep, ApplyValue) {
  const SceneConfig base;
  EXPECT_EQ(ApplySweepValue(base, SweepKind::kNoise, 1e-3).noise_sigma, 1e-3);
  EXPECT_EQ(ApplySweepValue(base, SweepKind::kVelocity, 5e-3).linear_speed, 5e-3);
  const SceneConfig f = ApplySweepValue(base, SweepKind::kFocal, 1200.0);
  EXPECT_EQ(f.intrinsics.fx, 1200.0);
  EXPECT_EQ(f.intrinsics.cx, 320.0);
  EXPECT_EQ(ParseSweepKind("focal"), SweepKind::kFocal);
  EXPECT_FALSE(ParseSweepKind("speed"));
}

TEST(Sweep, CommonRandomNumbersAcrossGrid) {
  SceneConfig base;
  base.num_points = 30;
  const SyntheticTrial a = GenerateTrial(ApplySweepValue(base, SweepKind::kNoise, 0.0), 3);
  const SyntheticTrial b = GenerateTrial(ApplySweepValue(base, SweepKind::kNoise, 1e-3), 3);
  EXPECT_EQ(a.gt.R, b.gt.R);
  EXPECT_EQ(a.clean[5].x2.u, b.clean[5].x2.u);
  EXPECT_NE(a.corrs[5].x2.u, b.corrs[5].x2.u);
}

SweepConfig SmallSweep() {
  SweepConfig cfg;
  cfg.kind = SweepKind::kNoise;
  cfg.grid = {0.0, 1e-3};
  cfg.scene.num_points = 60;
  cfg.scene.trials = 4;
  return cfg;
}

TEST(Sweep, RecordsAndAggregates) {
  const ExperimentReport rep = RunSweep(SmallSweep());
  EXPECT_EQ(rep.records.size(), 2u * 4u * 3u);
  EXPECT_EQ(rep.aggregates.size(), 6u);
  EXPECT_EQ(rep.scene_model, "linear-rs");
  for (const auto& r : rep.records) EXPECT_EQ(r.status, "ok");
  for (const char* label : {kLabelLinear, kLabelGlobalShutter, kLabelRollingShutter}) {
    const AggregateRecord* a = rep.Find(0.0, label);
    ASSERT_NE(a, nullptr);
    EXPECT_EQ(a->trials, 4);
    EXPECT_EQ(a->failures, 0);
  }
  EXPECT_EQ(rep.Find(0.5, kLabelLinear), nullptr);
  EXPECT_LT(rep.Find(0.0, kLabelRollingShutter)->e_R.median, 1e-6);
  EXPECT_LT(rep.Find(0.0, kLabelLinear)->F_angle.median,
            rep.Find(1e-3, kLabelLinear)->F_angle.median);
  // Global-shutter fits cannot explain rolling-shutter data exactly.
  EXPECT_GT(rep.Find(0.0, kLabelGlobalShutter)->e_R.median,
            rep.Find(0.0, kLabelRollingShutter)->e_R.median);
}

TEST(Sweep, Deterministic) {
  const ExperimentReport a = RunSweep(SmallSweep());
  const ExperimentReport b = RunSweep(SmallSweep());
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& x = a.records[i];
    const auto& y = b.records[i];
    EXPECT_EQ(x.model, y.model);
    EXPECT_TRUE(x.e_R == y.e_R || (std::isnan(x.e_R) && std::isnan(y.e_R)));
  }
}

TEST(Sweep, SolverSelection) {
  SweepConfig cfg = SmallSweep();
  cfg.grid = {1e-4};
  cfg.run_nonlinear = false;
  const ExperimentReport rep = RunSweep(cfg);
  for (const auto& r : rep.records) EXPECT_EQ(r.model, kLabelLinear);
  cfg.run_linear = false;
  cfg.run_nonlinear = true;
  for (const auto& r : RunSweep(cfg).records) EXPECT_NE(r.model, kLabelLinear);
}

TEST(Sweep, FailuresAreRecorded) {
  SweepConfig cfg = SmallSweep();
  cfg.grid = {0.0};
  cfg.scene.num_points = 30;  // below the 44 needed by the linear solver
  cfg.scene.model = CameraModel::kUniformRollingShutter;
  cfg.run_nonlinear = false;
  const ExperimentReport rep = RunSweep(cfg);
  for (const auto& r : rep.records) EXPECT_EQ(r.status, "InsufficientPoints");
  EXPECT_EQ(rep.aggregates[0].failures, 4);
  EXPECT_TRUE(std::isnan(rep.aggregates[0].F_angle.median));
}

TEST(Sweep, EmptyGridRejected) {
  SweepConfig cfg = SmallSweep();
  cfg.grid.clear();
  EXPECT_THROW(RunSweep(cfg), Error);
}

}  // namespace
}  // namespace rsepi
