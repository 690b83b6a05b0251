#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rsepi {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// The five-model camera hierarchy, ordered by generalized essential
/// matrix dimension (3, 4, 5, 6, 7).
enum class CameraModel {
  kPerspective,
  kLinearPushBroom,
  kLinearRollingShutter,
  kUniformPushBroom,
  kUniformRollingShutter,
};

inline constexpr std::array<CameraModel, 5> kAllModels = {
    CameraModel::kPerspective, CameraModel::kLinearPushBroom,
    CameraModel::kLinearRollingShutter, CameraModel::kUniformPushBroom,
    CameraModel::kUniformRollingShutter};

inline int LiftedDim(CameraModel model) {
  switch (model) {
    case CameraModel::kPerspective: return 3;
    case CameraModel::kLinearPushBroom: return 4;
    case CameraModel::kLinearRollingShutter: return 5;
    case CameraModel::kUniformPushBroom: return 6;
    case CameraModel::kUniformRollingShutter: return 7;
  }
  return 0;
}

inline bool IsPushBroom(CameraModel model) {
  return model == CameraModel::kLinearPushBroom ||
         model == CameraModel::kUniformPushBroom;
}

inline bool HasAngularVelocity(CameraModel model) {
  return model == CameraModel::kUniformPushBroom ||
         model == CameraModel::kUniformRollingShutter;
}

inline bool HasLinearVelocity(CameraModel model) {
  return model != CameraModel::kPerspective;
}

/// Number of correspondences the linear solver needs.
inline int LinearPointCount(CameraModel model) {
  switch (model) {
    case CameraModel::kPerspective: return 8;
    case CameraModel::kLinearPushBroom: return 11;
    case CameraModel::kLinearRollingShutter: return 20;
    case CameraModel::kUniformPushBroom: return 31;
    case CameraModel::kUniformRollingShutter: return 44;
  }
  return 0;
}

/// Degrees of freedom of the motion, i.e. the minimal number of points.
inline int MinimalPointCount(CameraModel model) {
  switch (model) {
    case CameraModel::kPerspective: return 5;
    case CameraModel::kLinearPushBroom:
    case CameraModel::kLinearRollingShutter: return 11;
    case CameraModel::kUniformPushBroom:
    case CameraModel::kUniformRollingShutter: return 17;
  }
  return 0;
}

/// Polynomial degree of the epipolar curves in the second image.
inline int CurveDegree(CameraModel model) {
  switch (model) {
    case CameraModel::kPerspective: return 1;
    case CameraModel::kLinearPushBroom:
    case CameraModel::kLinearRollingShutter: return 2;
    default: return 3;
  }
}

inline std::string_view ModelName(CameraModel model) {
  switch (model) {
    case CameraModel::kPerspective: return "perspective";
    case CameraModel::kLinearPushBroom: return "linear-pb";
    case CameraModel::kLinearRollingShutter: return "linear-rs";
    case CameraModel::kUniformPushBroom: return "uniform-pb";
    case CameraModel::kUniformRollingShutter: return "uniform-rs";
  }
  return "unknown";
}

inline std::optional<CameraModel> ParseModel(std::string_view name) {
  for (CameraModel m : kAllModels) {
    if (ModelName(m) == name) return m;
  }
  return std::nullopt;
}

enum class ErrorCode {
  kInsufficientPoints,
  kDegenerateConfiguration,
  kNoRealSolution,
  kNearZeroVelocity,
  kCheiralityAmbiguous,
  kConvergenceFailed,
  kNonFinite,
  kNoConsensus,
  kFrustumExhausted,
  kZeroVector,
  kInvalidArgument,
  kIo,
};

inline std::string_view ErrorName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInsufficientPoints: return "InsufficientPoints";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kNoRealSolution: return "NoRealSolution";
    case ErrorCode::kNearZeroVelocity: return "NearZeroVelocity";
    case ErrorCode::kCheiralityAmbiguous: return "CheiralityAmbiguous";
    case ErrorCode::kConvergenceFailed: return "ConvergenceFailed";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNoConsensus: return "NoConsensus";
    case ErrorCode::kFrustumExhausted: return "FrustumExhausted";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Numerical thresholds shared by the solvers. Values are relative unless
/// noted otherwise.
struct Tolerances {
  // sigma_{n-1} / sigma_0 of the constraint matrix below which the
  // configuration is reported degenerate.
  double rank_deficiency = 1e-10;
  // ||read-off velocity block|| / ||F|| below which atom recovery gives up.
  double near_zero_velocity = 1e-8;
  // Absolute floor for Sampson denominators.
  double sampson_denominator = 1e-300;
};

inline const Tolerances& DefaultTolerances() {
  static const Tolerances tol;
  return tol;
}

/// A point in normalized (calibrated) image coordinates. `u` is the row
/// (scanline / sweep) coordinate, `v` the coordinate along the scanline.
struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
};

struct Correspondence {
  ImagePoint x1;
  ImagePoint x2;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// Relative motion between two frames. Frame 1 sits at [I, 0], frame 2 at
/// [R, t]. Velocities are expressed per unit of normalized row coordinate;
/// w is an angle-axis rate (radians), d a translation rate (scene units).
struct MotionParams {
  CameraModel model = CameraModel::kPerspective;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 w1 = Vec3::Zero();
  Vec3 w2 = Vec3::Zero();
  Vec3 d1 = Vec3::Zero();
  Vec3 d2 = Vec3::Zero();
};

/// Zeroes the velocities the model does not use.
inline MotionParams RestrictToModel(MotionParams p, CameraModel model) {
  p.model = model;
  if (!HasAngularVelocity(model)) {
    p.w1.setZero();
    p.w2.setZero();
  }
  if (!HasLinearVelocity(model)) {
    p.d1.setZero();
    p.d2.setZero();
  }
  return p;
}

/// Rescales t, d1 and d2 so that ||t|| = 1. Velocities keep their scale
/// relative to t.
inline MotionParams GaugeFixed(MotionParams p) {
  const double n = p.t.norm();
  if (n > 0.0) {
    p.t /= n;
    p.d1 /= n;
    p.d2 /= n;
  }
  return p;
}

}  // namespace rsepi
