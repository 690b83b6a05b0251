#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rsepi/essential.hpp"
#include "rsepi/geometry.hpp"
#include "rsepi/types.hpp"

namespace rsepi {

/// Pinhole intrinsics. Rows map to u, columns to v.
struct Intrinsics {
  double fx = 640.0;
  double fy = 640.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  ImagePoint ToNormalized(double row_px, double col_px) const {
    return {(row_px - cy) / fy, (col_px - cx) / fx};
  }
  std::pair<double, double> ToPixel(const ImagePoint& p) const {
    return {p.u * fy + cy, p.v * fx + cx};
  }
  CurveBounds NormalizedBounds() const {
    return {-cy / fy, (height - cy) / fy, -cx / fx, (width - cx) / fx};
  }
};

inline Intrinsics IntrinsicsForFocal(double focal, int width = 640,
                                     int height = 480) {
  Intrinsics k;
  k.fx = k.fy = focal;
  k.width = width;
  k.height = height;
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  return k;
}

struct SceneConfig {
  CameraModel model = CameraModel::kLinearRollingShutter;
  Intrinsics intrinsics;
  int num_points = 100;
  double depth_min = 3.0;
  double depth_max = 8.0;
  // Standard deviation of the noise added to the normalized coordinates.
  double noise_sigma = 0.0;
  // Translation rate in scene units per pixel row.
  double linear_speed = 1e-3;
  // Rotation rate in radians per pixel row.
  double angular_speed = 1e-4;
  double max_rotation = 0.5;
  int trials = 200;
  std::uint64_t seed = 1;
  RotationMode rotation_mode = RotationMode::kExact;
};

inline void ValidateConfig(const SceneConfig& cfg) {
  const auto& k = cfg.intrinsics;
  const bool ok = k.fx > 0 && k.fy > 0 && k.width > 0 && k.height > 0 &&
                  cfg.num_points > 0 && cfg.depth_min > 0 &&
                  cfg.depth_max >= cfg.depth_min && cfg.noise_sigma >= 0 &&
                  cfg.linear_speed >= 0 && cfg.angular_speed >= 0 &&
                  cfg.max_rotation >= 0 && cfg.trials > 0;
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "invalid scene configuration");
}

struct SyntheticTrial {
  MotionParams gt;
  CorrespondenceSet corrs;  // with noise
  CorrespondenceSet clean;  // noise-free
  std::vector<Vec3> points;
};

/// Seed of trial `index` under `master`, independent of evaluation order.
inline std::uint64_t TrialSeed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

inline Vec3 RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

inline Vec3 ToCamera(const ScanlinePose& pose, const Vec3& X) {
  return pose.R * X + pose.t;
}

/// Roots of a scalar function on [lo, hi] found by a sign-change scan and
/// bisection to machine precision.
template <typename Fn>
std::vector<double> ScalarRoots(Fn&& g, double lo, double hi, int intervals = 64) {
  std::vector<double> roots;
  double a = lo;
  double ga = g(a);
  for (int k = 1; k <= intervals; ++k) {
    const double b = lo + (hi - lo) * k / intervals;
    const double gb = g(b);
    if (ga == 0.0) {
      roots.push_back(a);
    } else if ((ga < 0.0) != (gb < 0.0) && std::isfinite(ga) && std::isfinite(gb)) {
      double x0 = a, x1 = b, g0 = ga;
      for (int i = 0; i < 200 && x1 - x0 > 1e-15 * (1.0 + std::abs(x0)); ++i) {
        const double m = 0.5 * (x0 + x1);
        const double gm = g(m);
        if ((gm < 0.0) == (g0 < 0.0)) {
          x0 = m;
          g0 = gm;
        } else {
          x1 = m;
        }
      }
      roots.push_back(0.5 * (x0 + x1));
    }
    a = b;
    ga = gb;
  }
  return roots;
}

}  // namespace detail

/// Image of world point X in a moving camera: the row u solving
/// u = row(project(P_u, X)). Returns nullopt unless exactly one such row
/// exists inside the bounds with the point in front of the camera.
inline std::optional<ImagePoint> ProjectMoving(const MotionParams& params,
                                               Frame frame, const Vec3& X,
                                               const CurveBounds& bounds,
                                               RotationMode mode) {
  const bool pb = IsPushBroom(params.model);
  auto g = [&](double u) {
    const Vec3 x = detail::ToCamera(ScanlinePoseAt(params, frame, u, mode), X);
    return pb ? x.x() : x.x() - u * x.z();
  };
  const auto roots = detail::ScalarRoots(g, bounds.u_min, bounds.u_max);
  if (roots.size() != 1) return std::nullopt;
  const double u = roots.front();
  const Vec3 x = detail::ToCamera(ScanlinePoseAt(params, frame, u, mode), X);
  if (!(x.z() > 0.0)) return std::nullopt;
  const ImagePoint p{u, x.y() / x.z()};
  if (p.v < bounds.v_min || p.v > bounds.v_max) return std::nullopt;
  return p;
}

/// Draws ground-truth motion for `cfg.model`. Velocities are converted to
/// per-normalized-row units.
inline MotionParams RandomMotion(const SceneConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MotionParams p;
  p.model = cfg.model;
  const double angle = cfg.max_rotation * unit(rng);
  p.R = RotationFromAngleAxis(angle * detail::RandomUnit(rng));
  p.t = detail::RandomUnit(rng);
  const double rows_per_unit = cfg.intrinsics.fy;
  if (HasLinearVelocity(cfg.model)) {
    const double s = cfg.linear_speed * rows_per_unit;
    if (IsPushBroom(cfg.model)) {
      // The sweep must carry the view plane across the scene.
      p.d1 = s * (Vec3::UnitX() + 0.1 * detail::RandomUnit(rng));
      p.d2 = s * (Vec3::UnitX() + 0.1 * detail::RandomUnit(rng));
    } else {
      p.d1 = s * detail::RandomUnit(rng);
      p.d2 = s * detail::RandomUnit(rng);
    }
  }
  if (HasAngularVelocity(cfg.model)) {
    const double s = cfg.angular_speed * rows_per_unit;
    p.w1 = s * detail::RandomUnit(rng);
    p.w2 = s * detail::RandomUnit(rng);
  }
  return p;
}

/// Generates correspondences of points seen by both frames under `gt`.
inline SyntheticTrial GenerateWithMotion(const SceneConfig& cfg,
                                         const MotionParams& gt,
                                         std::mt19937_64& rng) {
  ValidateConfig(cfg);
  const CurveBounds bounds = cfg.intrinsics.NormalizedBounds();
  std::uniform_real_distribution<double> ud(bounds.u_min, bounds.u_max);
  std::uniform_real_distribution<double> vd(bounds.v_min, bounds.v_max);
  std::uniform_real_distribution<double> zd(cfg.depth_min, cfg.depth_max);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticTrial trial;
  trial.gt = gt;
  const int limit = 100 * cfg.num_points;
  int attempts = 0;
  while (static_cast<int>(trial.clean.size()) < cfg.num_points) {
    if (++attempts > limit) {
      throw Error(ErrorCode::kFrustumExhausted,
                  "could not place enough points visible in both frames");
    }
    const ImagePoint x1{ud(rng), vd(rng)};
    const double z = zd(rng);
    const ScanlinePose p1 = ScanlinePoseAt(gt, Frame::kFirst, x1.u, cfg.rotation_mode);
    const Vec3 X = p1.R.inverse() * (z * CameraRay(x1, gt.model) - p1.t);
    const auto x2 = ProjectMoving(gt, Frame::kSecond, X, bounds, cfg.rotation_mode);
    if (!x2) continue;
    // Frame 1 must also image X only once.
    const auto x1_check = ProjectMoving(gt, Frame::kFirst, X, bounds, cfg.rotation_mode);
    if (!x1_check || std::abs(x1_check->u - x1.u) > 1e-9) continue;
    trial.points.push_back(X);
    trial.clean.push_back({x1, *x2});
  }
  trial.corrs = trial.clean;
  if (cfg.noise_sigma > 0.0) {
    for (auto& c : trial.corrs) {
      c.x1.u += cfg.noise_sigma * noise(rng);
      c.x1.v += cfg.noise_sigma * noise(rng);
      c.x2.u += cfg.noise_sigma * noise(rng);
      c.x2.v += cfg.noise_sigma * noise(rng);
    }
  }
  return trial;
}

/// Draws a motion and its correspondences. A motion whose frames share too
/// little of the scene (common for push-broom sweeps) is redrawn up to
/// `kMotionDraws` times before FrustumExhausted propagates.
inline SyntheticTrial Generate(const SceneConfig& cfg) {
  constexpr int kMotionDraws = 50;
  ValidateConfig(cfg);
  std::mt19937_64 rng(cfg.seed);
  for (int draw = 1;; ++draw) {
    const MotionParams gt = RandomMotion(cfg, rng);
    try {
      return GenerateWithMotion(cfg, gt, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFrustumExhausted || draw == kMotionDraws) throw;
    }
  }
}

/// Trial `index` of a run seeded with `cfg.seed`.
inline SyntheticTrial GenerateTrial(SceneConfig cfg, std::uint64_t index) {
  cfg.seed = TrialSeed(cfg.seed, index);
  return Generate(cfg);
}

/// Correspondences lying exactly on the variety of F: x1 and u2 are drawn
/// inside `bounds`, v2 is solved from the (linear in v2) constraint.
inline CorrespondenceSet SampleOnVariety(const GeneralizedEssential& F, int n,
                                         const CurveBounds& bounds,
                                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(bounds.u_min, bounds.u_max);
  std::uniform_real_distribution<double> vd(bounds.v_min, bounds.v_max);
  CorrespondenceSet out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < n) {
    if (++attempts > 100 * n) {
      throw Error(ErrorCode::kFrustumExhausted,
                  "epipolar variety does not cross the image bounds");
    }
    const ImagePoint x1{ud(rng), vd(rng)};
    const double u2 = ud(rng);
    const double r0 = Residual(F, x1, {u2, 0.0});
    const double r1 = Residual(F, x1, {u2, 1.0});
    const double slope = r1 - r0;
    if (std::abs(slope) < 1e-9 * (std::abs(r0) + std::abs(r1) + 1e-300)) continue;
    const double v2 = -r0 / slope;
    if (v2 < bounds.v_min || v2 > bounds.v_max) continue;
    out.push_back({x1, {u2, v2}});
  }
  return out;
}

/// Geodesic angle between two rotations.
inline double ErrorRotation(const Mat3& R_est, const Mat3& R_gt) {
  const double c = 0.5 * ((R_est * R_gt.transpose()).trace() - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Angle between translation directions, ignoring sign.
inline double ErrorTranslation(const Vec3& t_est, const Vec3& t_gt) {
  const double n = t_est.norm() * t_gt.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::kZeroVector, "zero translation");
  return std::acos(std::clamp(std::abs(t_est.dot(t_gt)) / n, 0.0, 1.0));
}

/// Angle between translation directions including sign.
inline double ErrorTranslationSigned(const Vec3& t_est, const Vec3& t_gt) {
  const double n = t_est.norm() * t_gt.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::kZeroVector, "zero translation");
  return std::acos(std::clamp(t_est.dot(t_gt) / n, -1.0, 1.0));
}

}  // namespace rsepi
