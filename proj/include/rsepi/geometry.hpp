#pragma once

#include <array>
#include <cmath>
#include <span>
#include <utility>

#include <Eigen/Dense>

#include "rsepi/types.hpp"

namespace rsepi {

enum class RotationMode { kExact, kSmall };

inline Mat3 Skew(const Vec3& a) {
  Mat3 s;
  s << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return s;
}

/// Inverse of Skew applied to the skew-symmetric part of `m`.
inline Vec3 Vee(const Mat3& m) {
  const Mat3 s = 0.5 * (m - m.transpose());
  return Vec3(s(2, 1), s(0, 2), s(1, 0));
}

/// Rodrigues rotation by angle u*|w| about w/|w|.
inline Mat3 RotationExact(const Vec3& w, double u) {
  const double omega = w.norm();
  if (omega == 0.0 || u == 0.0) return Mat3::Identity();
  const Mat3 n = Skew(w / omega);
  const double theta = u * omega;
  return Mat3::Identity() + std::sin(theta) * n +
         (1.0 - std::cos(theta)) * n * n;
}

/// First-order rotation I + u[w]x. Not orthonormal.
inline Mat3 RotationSmall(const Vec3& w, double u) {
  return Mat3::Identity() + u * Skew(w);
}

inline Mat3 RotationFromAngleAxis(const Vec3& aa) {
  return RotationExact(aa, 1.0);
}

/// Log map of SO(3), robust near 0 and pi.
inline Vec3 AngleAxisFromRotation(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

/// World-to-camera pose of one scanline: x_cam = R X + t.
struct ScanlinePose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double row = 0.0;
};

enum class Frame { kFirst = 1, kSecond = 2 };

/// Pose of scanline `u` in the given frame. Frame 1 is anchored at [I, 0],
/// frame 2 at [R, t].
inline ScanlinePose ScanlinePoseAt(const MotionParams& params, Frame frame,
                                   double u,
                                   RotationMode mode = RotationMode::kExact) {
  const bool first = frame == Frame::kFirst;
  const Vec3& w = first ? params.w1 : params.w2;
  const Vec3& d = first ? params.d1 : params.d2;
  if (!HasAngularVelocity(params.model) && !w.isZero(0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "angular velocity given for a model without rotation rate");
  }
  if (!HasLinearVelocity(params.model) && !d.isZero(0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "linear velocity given for the perspective model");
  }
  const Mat3 R0 = first ? Mat3::Identity() : params.R;
  const Vec3 t0 = first ? Vec3::Zero() : params.t;

  ScanlinePose pose;
  pose.row = u;
  pose.t = t0 + u * d;
  if (HasAngularVelocity(params.model)) {
    const Mat3 Ru =
        mode == RotationMode::kExact ? RotationExact(w, u) : RotationSmall(w, u);
    pose.R = Ru * R0;
  } else {
    pose.R = R0;
  }
  return pose;
}

struct PairwiseEssential {
  Mat3 E = Mat3::Zero();
  bool degenerate = false;  // zero baseline between the two scanlines
};

/// Essential matrix between two scanline poses, x_j^T E x_i = 0.
inline PairwiseEssential PairwiseEssentialBetween(const ScanlinePose& pose_i,
                                                  const ScanlinePose& pose_j) {
  const Mat3 Rij = pose_j.R * pose_i.R.transpose();
  const Vec3 tij = pose_j.t - Rij * pose_i.t;
  PairwiseEssential out;
  out.E = Skew(tij) * Rij;
  const double scale = 1.0 + pose_i.t.norm() + pose_j.t.norm();
  out.degenerate = tij.norm() <= 1e-14 * scale;
  return out;
}

/// Exponents (power of u, power of v) of the lifted monomials, in the order
/// used for the rows and columns of the generalized essential matrices.
inline std::span<const std::pair<int, int>> MonomialExponents(
    CameraModel model) {
  static constexpr std::array<std::pair<int, int>, 3> kPersp{
      {{1, 0}, {0, 1}, {0, 0}}};
  static constexpr std::array<std::pair<int, int>, 4> kLinPB{
      {{1, 1}, {1, 0}, {0, 1}, {0, 0}}};
  static constexpr std::array<std::pair<int, int>, 5> kLinRS{
      {{2, 0}, {1, 1}, {1, 0}, {0, 1}, {0, 0}}};
  static constexpr std::array<std::pair<int, int>, 6> kUniPB{
      {{2, 1}, {2, 0}, {1, 1}, {1, 0}, {0, 1}, {0, 0}}};
  static constexpr std::array<std::pair<int, int>, 7> kUniRS{
      {{3, 0}, {2, 1}, {2, 0}, {1, 1}, {1, 0}, {0, 1}, {0, 0}}};
  switch (model) {
    case CameraModel::kPerspective: return kPersp;
    case CameraModel::kLinearPushBroom: return kLinPB;
    case CameraModel::kLinearRollingShutter: return kLinRS;
    case CameraModel::kUniformPushBroom: return kUniPB;
    case CameraModel::kUniformRollingShutter: return kUniRS;
  }
  return {};
}

/// Index of monomial u^pu v^pv in the model's lifting, or -1.
inline int MonomialIndex(CameraModel model, int pu, int pv) {
  const auto exps = MonomialExponents(model);
  for (std::size_t i = 0; i < exps.size(); ++i) {
    if (exps[i].first == pu && exps[i].second == pv) return static_cast<int>(i);
  }
  return -1;
}

inline VecX Lift(const ImagePoint& p, CameraModel model) {
  const auto exps = MonomialExponents(model);
  VecX out(static_cast<Eigen::Index>(exps.size()));
  for (std::size_t i = 0; i < exps.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] =
        std::pow(p.u, exps[i].first) * std::pow(p.v, exps[i].second);
  }
  return out;
}

/// d lift / du and d lift / dv.
inline std::pair<VecX, VecX> LiftJacobian(const ImagePoint& p,
                                          CameraModel model) {
  const auto exps = MonomialExponents(model);
  const auto n = static_cast<Eigen::Index>(exps.size());
  VecX du = VecX::Zero(n);
  VecX dv = VecX::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [a, b] = exps[static_cast<std::size_t>(i)];
    if (a > 0) du[i] = a * std::pow(p.u, a - 1) * std::pow(p.v, b);
    if (b > 0) dv[i] = b * std::pow(p.u, a) * std::pow(p.v, b - 1);
  }
  return {du, dv};
}

/// Viewing direction in the camera frame, normalized to unit depth. Push-broom
/// cameras image the plane x = 0; the row coordinate is the sweep time.
inline Vec3 CameraRay(const ImagePoint& p, CameraModel model) {
  return IsPushBroom(model) ? Vec3(0.0, p.v, 1.0) : Vec3(p.u, p.v, 1.0);
}

struct Triangulation {
  Vec3 X = Vec3::Zero();
  double depth1 = 0.0;  // along the first ray, in camera-1 units of z
  double depth2 = 0.0;
  bool valid = false;
};

/// Midpoint triangulation of two rays given by world-to-camera poses and
/// camera-frame directions with unit z component. Poses may carry
/// non-orthonormal rotations (small-rotation mode).
inline Triangulation TriangulateMidpoint(const ScanlinePose& pose1,
                                         const Vec3& ray1,
                                         const ScanlinePose& pose2,
                                         const Vec3& ray2) {
  const Mat3 R1inv = pose1.R.inverse();
  const Mat3 R2inv = pose2.R.inverse();
  const Vec3 c1 = -R1inv * pose1.t;
  const Vec3 c2 = -R2inv * pose2.t;
  const Vec3 r1 = R1inv * ray1;
  const Vec3 r2 = R2inv * ray2;
  // Solve [r1, -r2] [l1; l2] = c2 - c1 in the least-squares sense.
  Eigen::Matrix<double, 3, 2> A;
  A.col(0) = r1;
  A.col(1) = -r2;
  const Eigen::Matrix2d AtA = A.transpose() * A;
  Triangulation out;
  const double det = AtA.determinant();
  if (!(std::abs(det) > 1e-14 * AtA.squaredNorm())) return out;
  const Eigen::Vector2d l = AtA.ldlt().solve(A.transpose() * (c2 - c1));
  out.X = 0.5 * ((c1 + l[0] * r1) + (c2 + l[1] * r2));
  out.depth1 = l[0];
  out.depth2 = l[1];
  out.valid = std::isfinite(l[0]) && std::isfinite(l[1]);
  return out;
}

/// Cheirality of one correspondence under the given motion: the point
/// triangulated from the observed scanline poses lies in front of both.
inline bool InFrontOfBoth(const MotionParams& params, const Correspondence& c,
                          RotationMode mode = RotationMode::kSmall) {
  const ScanlinePose p1 = ScanlinePoseAt(params, Frame::kFirst, c.x1.u, mode);
  const ScanlinePose p2 = ScanlinePoseAt(params, Frame::kSecond, c.x2.u, mode);
  const Triangulation tri =
      TriangulateMidpoint(p1, CameraRay(c.x1, params.model), p2,
                          CameraRay(c.x2, params.model));
  return tri.valid && tri.depth1 > 0.0 && tri.depth2 > 0.0;
}

inline std::size_t CountInFront(const MotionParams& params,
                                std::span<const Correspondence> corrs,
                                RotationMode mode = RotationMode::kSmall) {
  std::size_t n = 0;
  for (const auto& c : corrs) n += InFrontOfBoth(params, c, mode) ? 1 : 0;
  return n;
}

/// Essential-matrix validity: det(E) and 2EE^TE - tr(EE^T)E, both made
/// scale-free by the appropriate power of ||E||.
inline double EssentialViolation(const Mat3& E) {
  const double n = E.norm();
  if (n == 0.0) return 0.0;
  const Mat3 En = E / n;
  const Mat3 EEt = En * En.transpose();
  const Mat3 cubic = 2.0 * EEt * En - EEt.trace() * En;
  return cubic.norm() + std::abs(En.determinant());
}

}  // namespace rsepi
