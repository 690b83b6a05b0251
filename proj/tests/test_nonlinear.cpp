#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "rsepi/linear.hpp"
#include "rsepi/nonlinear.hpp"
#include "rsepi/synth.hpp"
#include "test_support.hpp"

namespace rsepi {
namespace {

using testing::RandomParams;

const CurveBounds kBounds{-0.375, 0.375, -0.5, 0.5};

// Largest deviation between two gauge-fixed parameter sets, up to the common
// sign of (t, d1, d2).
double ParamDistance(const MotionParams& a, const MotionParams& b) {
  const MotionParams x = GaugeFixed(a), y = GaugeFixed(b);
  double best = std::numeric_limits<double>::infinity();
  for (double s : {1.0, -1.0}) {
    best = std::min(best, std::max({(x.R - y.R).norm(), (x.t - s * y.t).norm(),
                                    (x.w1 - y.w1).norm(), (x.w2 - y.w2).norm(),
                                    (x.d1 - s * y.d1).norm(), (x.d2 - s * y.d2).norm()}));
  }
  return best;
}

CorrespondenceSet OnVariety(const MotionParams& p, int n, std::mt19937_64& rng) {
  return SampleOnVariety(BuildEssential(p), n, kBounds, rng);
}

// Lifted Sampson term written out directly.
// Random parameters whose variety crosses the image, with n points on it.
std::pair<MotionParams, CorrespondenceSet> DrawOnVariety(CameraModel m, int n,
                                                         std::mt19937_64& rng) {
  for (;;) {
    const MotionParams p = GaugeFixed(RandomParams(m, rng));
    try {
      return {p, OnVariety(p, n, rng)};
    } catch (const Error&) {
    }
  }
}

double LiftedOracle(const MatX& F, CameraModel m, const ImagePoint& a, const ImagePoint& b) {
  const VecX l1 = Lift(a, m), l2 = Lift(b, m);
  const double r = l2.dot(F * l1);
  double den = 0.0;
  for (Eigen::Index j = 0; j < F.rows(); ++j) {
    const double x = (F * l1)[j];
    const double y = (F.transpose() * l2)[j];
    den += x * x + y * y;
  }
  return r * r / den;
}

// First-order geometric distance: r^2 / |grad r|^2, gradient by central
// differences over the four image coordinates.
double GeometricOracle(const MatX& F, CameraModel m, const ImagePoint& a, const ImagePoint& b) {
  auto r = [&](ImagePoint p, ImagePoint q) { return Lift(q, m).dot(F * Lift(p, m)); };
  const double h = 1e-6;
  const double g[4] = {
      (r({a.u + h, a.v}, b) - r({a.u - h, a.v}, b)) / (2 * h),
      (r({a.u, a.v + h}, b) - r({a.u, a.v - h}, b)) / (2 * h),
      (r(a, {b.u + h, b.v}) - r(a, {b.u - h, b.v})) / (2 * h),
      (r(a, {b.u, b.v + h}) - r(a, {b.u, b.v - h})) / (2 * h)};
  const double v = r(a, b);
  return v * v / (g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]);
}

TEST(Sampson, ZeroOnNoiseFreeData) {
  std::mt19937_64 rng(61);
  for (CameraModel m : kAllModels) {
    const auto [p, corrs] = DrawOnVariety(m, 50, rng);
    const GeneralizedEssential F = BuildEssential(p);
    for (const auto& c : corrs) {
      for (auto variant : {SampsonVariant::kLifted, SampsonVariant::kJacobianExact}) {
        const auto e = PerPointSampson(F, c.x1, c.x2, variant);
        ASSERT_TRUE(e.has_value());
        EXPECT_LE(*e, 1e-18) << ModelName(m);
      }
    }
  }
}

TEST(Sampson, MatchesOracles) {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> c(-0.4, 0.4);
  for (CameraModel m : kAllModels) {
    const MatX F = AssembleF(RandomParams(m, rng));
    for (int i = 0; i < 50; ++i) {
      const ImagePoint a{c(rng), c(rng)}, b{c(rng), c(rng)};
      const double lifted = *PerPointSampson(F, m, a, b, SampsonVariant::kLifted);
      const double exact = *PerPointSampson(F, m, a, b, SampsonVariant::kJacobianExact);
      EXPECT_NEAR(lifted, LiftedOracle(F, m, a, b), 1e-12 * (1 + lifted));
      EXPECT_NEAR(exact, GeometricOracle(F, m, a, b), 1e-6 * exact);
    }
  }
}

TEST(Sampson, ScaleInvariantAndSumsPerPointTerms) {
  std::mt19937_64 rng(63);
  std::normal_distribution<double> noise(0.0, 1e-3);
  const MotionParams p = RandomParams(CameraModel::kLinearRollingShutter, rng);
  const MatX F = AssembleF(p);
  CorrespondenceSet corrs = OnVariety(p, 40, rng);
  for (auto& c : corrs) c.x2.v += noise(rng);
  for (auto variant : {SampsonVariant::kLifted, SampsonVariant::kJacobianExact}) {
    const SampsonSum s = SampsonError(F, p.model, corrs, variant);
    const SampsonSum s2 = SampsonError(2.0 * F, p.model, corrs, variant);
    EXPECT_NEAR(s.error, s2.error, 1e-14 * s.error);
    double sum = 0.0;
    for (const auto& c : corrs) sum += *PerPointSampson(F, p.model, c.x1, c.x2, variant);
    EXPECT_NEAR(s.error, sum, 1e-14 * sum);
    EXPECT_EQ(s.skipped, 0u);
    EXPECT_NEAR(SampsonObjective(p, corrs, variant), sum, 1e-12 * sum);
  }
}

TEST(Sampson, MonotoneInResidualForFixedDenominator) {
  // Perspective F = [e_z]x: moving x2 along v changes the residual only.
  MotionParams p;
  p.t = Vec3(1, 0, 0);
  const MatX F = AssembleF(p);
  double prev = -1.0;
  for (double dv : {0.0, 0.01, 0.02, 0.05, 0.1}) {
    const double e = *PerPointSampson(F, p.model, {0.1, 0.2}, {0.3, 0.2 + dv});
    EXPECT_GT(e, prev);
    prev = e;
  }
}

TEST(Sampson, SkipsVanishingDenominators) {
  const MatX F = MatX::Zero(5, 5);
  CorrespondenceSet corrs(3, Correspondence{{0.1, 0.2}, {0.3, 0.4}});
  const SampsonSum s = SampsonError(F, CameraModel::kLinearRollingShutter, corrs);
  EXPECT_EQ(s.skipped, 3u);
  EXPECT_EQ(s.error, 0.0);
  EXPECT_FALSE(PerPointSampson(F, CameraModel::kLinearRollingShutter, {0, 0}, {0, 0}));
}

TEST(ParamVector, RoundTrip) {
  std::mt19937_64 rng(64);
  for (CameraModel m : kAllModels) {
    const MotionParams p = RandomParams(m, rng);
    const VecX x = ToParamVector(p);
    EXPECT_EQ(x.size(), ParamDim(m));
    EXPECT_LT(ParamDistance(FromParamVector(x, m), p), 1e-12);
    const MotionParams q = FromParamVector(x, m);
    EXPECT_LT((q.R - p.R).norm(), 1e-12);
    EXPECT_LT((q.t - p.t).norm(), 1e-12);
  }
  EXPECT_EQ(ParamDim(CameraModel::kLinearRollingShutter), 12);
  EXPECT_EQ(ParamDim(CameraModel::kUniformRollingShutter), 18);
}

TEST(Refine, StationaryAtGroundTruth) {
  std::mt19937_64 rng(65);
  for (CameraModel m : kAllModels) {
    for (int i = 0; i < 5; ++i) {
      const auto [p, corrs] = DrawOnVariety(m, 60, rng);
      for (auto variant : {SampsonVariant::kLifted, SampsonVariant::kJacobianExact}) {
        SampsonConfig cfg;
        cfg.variant = variant;
        const RefineResult res = Refine(p, corrs, m, cfg);
        EXPECT_LE(res.initial_objective, 60 * 1e-18);
        EXPECT_LE(ParamDistance(res.params, p), 1e-10) << ModelName(m);
      }
    }
  }
}

TEST(Refine, ConvergesFromPerturbedStart) {
  std::mt19937_64 rng(66);
  std::normal_distribution<double> g(0.0, 1.0);
  int ok = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    const MotionParams p = GaugeFixed(RandomParams(CameraModel::kLinearRollingShutter, rng));
    const CorrespondenceSet corrs = OnVariety(p, 50, rng);
    MotionParams init = p;
    init.R = RotationFromAngleAxis(1e-2 * testing::RandomDirection(rng)) * p.R;
    init.t += 1e-2 * testing::RandomDirection(rng);
    init.d1 += 1e-2 * testing::RandomDirection(rng);
    init.d2 += 1e-2 * testing::RandomDirection(rng);
    const RefineResult res = Refine(init, corrs, p.model);
    EXPECT_LE(res.final_objective, res.initial_objective);
    if (ParamDistance(res.params, p) <= 1e-6) ++ok;
  }
  EXPECT_GE(ok, trials * 95 / 100) << ok << "/" << trials;
}

TEST(Refine, GaugeConsistent) {
  std::mt19937_64 rng(67);
  const MotionParams p = GaugeFixed(RandomParams(CameraModel::kLinearRollingShutter, rng));
  std::normal_distribution<double> noise(0.0, 1e-3);
  CorrespondenceSet corrs = OnVariety(p, 50, rng);
  for (auto& c : corrs) c.x2.u += noise(rng);
  MotionParams scaled = p;
  scaled.t *= 3.0;
  scaled.d1 *= 3.0;
  scaled.d2 *= 3.0;
  const MotionParams a = Refine(p, corrs, p.model).params;
  const MotionParams b = Refine(scaled, corrs, p.model).params;
  EXPECT_LE(ParamDistance(a, b), 1e-8);
  EXPECT_NEAR(a.t.norm(), 1.0, 1e-12);
}

TEST(Refine, ObjectiveNeverIncreases) {
  std::mt19937_64 rng(68);
  for (CameraModel m : kAllModels) {
    SceneConfig cfg;
    cfg.model = m;
    cfg.noise_sigma = 1e-3;
    cfg.num_points = 60;
    const SyntheticTrial tr = Generate(cfg);
    const MotionParams init = RestrictToModel(tr.gt, CameraModel::kPerspective);
    const RefineResult res = Refine(init, tr.corrs, m);
    EXPECT_LE(res.final_objective, res.initial_objective) << ModelName(m);
  }
}

TEST(Refine, NonFiniteInitRejected) {
  std::mt19937_64 rng(69);
  MotionParams p = RandomParams(CameraModel::kLinearRollingShutter, rng);
  const CorrespondenceSet corrs = OnVariety(p, 30, rng);
  p.d1.x() = std::numeric_limits<double>::quiet_NaN();
  try {
    Refine(p, corrs, p.model);
    ADD_FAILURE() << "expected NonFinite";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(MinimalSolve, ElevenPointLinearRs) {
  int ok = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    SceneConfig cfg;
    cfg.num_points = 11;
    const SyntheticTrial tr = GenerateTrial(cfg, static_cast<std::uint64_t>(i));
    SampsonConfig sc;
    sc.seed = static_cast<std::uint64_t>(i);
    try {
      const RefineResult res = MinimalSolve(tr.clean, cfg.model, sc);
      if (ParamDistance(res.params, tr.gt) <= 1e-4) ++ok;
    } catch (const Error&) {
    }
  }
  RecordProperty("success", ok);
  EXPECT_GE(ok, trials * 80 / 100) << ok << "/" << trials;
}

TEST(MinimalSolve, SeventeenPointUniformRsObjective) {
  std::mt19937_64 rng(70);
  for (int i = 0; i < 20; ++i) {
    const MotionParams p =
        GaugeFixed(RandomParams(CameraModel::kUniformRollingShutter, rng, 0.3, 0.05));
    const CorrespondenceSet corrs = OnVariety(p, 17, rng);
    SampsonConfig sc;
    sc.seed = static_cast<std::uint64_t>(i);
    const RefineResult res = MinimalSolve(corrs, p.model, sc);
    EXPECT_LE(res.final_objective, 1e-12);
  }
}

TEST(MinimalSolve, PerspectiveMatchesEightPoint) {
  std::mt19937_64 rng(71);
  for (int i = 0; i < 20; ++i) {
    const MotionParams p = RandomParams(CameraModel::kPerspective, rng);
    SceneConfig cfg;
    cfg.model = CameraModel::kPerspective;
    cfg.num_points = 12;
    const CorrespondenceSet corrs = GenerateWithMotion(cfg, p, rng).clean;
    const RefineResult res = MinimalSolve(corrs, p.model);
    EXPECT_LE(ParamDistance(res.params, p), 1e-8);
    EXPECT_LE(ParamDistance(res.params, SolveEightPoint(corrs)), 1e-8);
  }
}

TEST(MinimalSolve, InsufficientPoints) {
  std::mt19937_64 rng(72);
  const MotionParams p = RandomParams(CameraModel::kLinearRollingShutter, rng);
  try {
    MinimalSolve(OnVariety(p, 10, rng), p.model);
    ADD_FAILURE() << "expected InsufficientPoints";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientPoints);
  }
}

TEST(MinimalSolve, DeterministicUnderSeed) {
  SceneConfig cfg;
  cfg.num_points = 11;
  const SyntheticTrial tr = GenerateTrial(cfg, 3);
  SampsonConfig sc;
  sc.seed = 9;
  const RefineResult a = MinimalSolve(tr.clean, cfg.model, sc);
  const RefineResult b = MinimalSolve(tr.clean, cfg.model, sc);
  EXPECT_EQ(ToParamVector(a.params), ToParamVector(b.params));
}

}  // namespace
}  // namespace rsepi
