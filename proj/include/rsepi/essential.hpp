#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "rsepi/geometry.hpp"
#include "rsepi/types.hpp"

namespace rsepi {

/// Generalized essential matrix of a camera model. The bilinear constraint
/// is lift(x2)^T F lift(x1) = 0, rows indexed by the second image.
struct GeneralizedEssential {
  CameraModel model = CameraModel::kPerspective;
  MatX F;
};

/// Scales F to unit Frobenius norm with the first significant entry
/// (row-major scan) positive.
inline MatX CanonicalScale(const MatX& F) {
  const double n = F.norm();
  if (n == 0.0) return F;
  MatX out = F / n;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      if (std::abs(out(r, c)) > 1e-12) {
        if (out(r, c) < 0.0) out = -out;
        return out;
      }
    }
  }
  return out;
}

/// Angle between two matrices viewed as vectors, sign-invariant.
inline double MatrixAngle(const MatX& a, const MatX& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return M_PI / 2.0;
  const double c = std::abs((a.array() * b.array()).sum()) / (na * nb);
  return std::acos(std::min(1.0, c));
}

/// 3x3 matrix-valued polynomial in (u2, u1): sum_{p,q} u2^p u1^q C[p][q].
class MatPoly {
 public:
  static constexpr int kMaxDegree = 3;

  MatPoly() {
    for (auto& row : c_) row.fill(Mat3::Zero());
  }

  static MatPoly Constant(const Mat3& m) {
    MatPoly p;
    p.c_[0][0] = m;
    return p;
  }

  /// u2^p u1^q m
  static MatPoly Term(int p, int q, const Mat3& m) {
    MatPoly out;
    out.c_[p][q] = m;
    return out;
  }

  const Mat3& Coeff(int p, int q) const { return c_[p][q]; }

  MatPoly operator+(const MatPoly& o) const {
    MatPoly out;
    for (int p = 0; p <= kMaxDegree; ++p)
      for (int q = 0; q <= kMaxDegree; ++q) out.c_[p][q] = c_[p][q] + o.c_[p][q];
    return out;
  }

  MatPoly operator-(const MatPoly& o) const {
    MatPoly out;
    for (int p = 0; p <= kMaxDegree; ++p)
      for (int q = 0; q <= kMaxDegree; ++q) out.c_[p][q] = c_[p][q] - o.c_[p][q];
    return out;
  }

  MatPoly operator*(const MatPoly& o) const {
    MatPoly out;
    for (int p1 = 0; p1 <= kMaxDegree; ++p1)
      for (int q1 = 0; q1 <= kMaxDegree; ++q1) {
        if (c_[p1][q1].isZero(0.0)) continue;
        for (int p2 = 0; p1 + p2 <= kMaxDegree; ++p2)
          for (int q2 = 0; q1 + q2 <= kMaxDegree; ++q2) {
            if (o.c_[p2][q2].isZero(0.0)) continue;
            out.c_[p1 + p2][q1 + q2] += c_[p1][q1] * o.c_[p2][q2];
          }
      }
    return out;
  }

  Mat3 Evaluate(double u2, double u1) const {
    Mat3 out = Mat3::Zero();
    double pu2 = 1.0;
    for (int p = 0; p <= kMaxDegree; ++p, pu2 *= u2) {
      double pu1 = 1.0;
      for (int q = 0; q <= kMaxDegree; ++q, pu1 *= u1) {
        out += pu2 * pu1 * c_[p][q];
      }
    }
    return out;
  }

 private:
  std::array<std::array<Mat3, kMaxDegree + 1>, kMaxDegree + 1> c_;
};

/// Scanline-pair essential matrix E(u1, u2) of the model under the
/// small-rotation kinematics:
///   E = [t + u2 d2]x A - u1 A [d1]x,  A = (I + u2[w2]x) R (I - u1[w1]x).
/// For rotation-free models A = R and this is exact.
inline MatPoly ScanlineEssentialPolynomial(const MotionParams& p) {
  const Mat3 I = Mat3::Identity();
  if (p.model == CameraModel::kPerspective) {
    return MatPoly::Constant(Skew(p.t) * p.R);
  }
  MatPoly A = MatPoly::Constant(p.R);
  if (HasAngularVelocity(p.model)) {
    const MatPoly left = MatPoly::Constant(I) + MatPoly::Term(1, 0, Skew(p.w2));
    const MatPoly right = MatPoly::Constant(I) - MatPoly::Term(0, 1, Skew(p.w1));
    A = left * A * right;
  }
  const MatPoly left_t =
      MatPoly::Constant(Skew(p.t)) + MatPoly::Term(1, 0, Skew(p.d2));
  return left_t * A - MatPoly::Term(0, 1, I) * A * MatPoly::Constant(Skew(p.d1));
}

/// Collects the coefficients of x2^T E(u1, u2) x1 onto the model's lifted
/// monomials. Rays are (u, v, 1) for rolling-shutter and perspective cameras
/// and (0, v, 1) for push-broom cameras.
inline MatX CollectLiftedCoefficients(const MatPoly& E, CameraModel model) {
  const int n = LiftedDim(model);
  MatX F = MatX::Zero(n, n);
  const bool pb = IsPushBroom(model);
  // Exponents of u and v contributed by ray component a.
  auto ray_monomial = [pb](int a, int& pu, int& pv) -> bool {
    switch (a) {
      case 0: pu = 1; pv = 0; return !pb;
      case 1: pu = 0; pv = 1; return true;
      default: pu = 0; pv = 0; return true;
    }
  };
  for (int p = 0; p <= MatPoly::kMaxDegree; ++p) {
    for (int q = 0; q <= MatPoly::kMaxDegree; ++q) {
      const Mat3& C = E.Coeff(p, q);
      if (C.isZero(0.0)) continue;
      for (int a = 0; a < 3; ++a) {
        int au, av;
        if (!ray_monomial(a, au, av)) continue;
        const int row = MonomialIndex(model, au + p, av);
        for (int b = 0; b < 3; ++b) {
          int bu, bv;
          if (!ray_monomial(b, bu, bv)) continue;
          if (C(a, b) == 0.0) continue;
          const int col = MonomialIndex(model, bu + q, bv);
          if (row < 0 || col < 0) {
            throw Error(ErrorCode::kInvalidArgument,
                        "scanline essential has terms outside the lifting");
          }
          F(row, col) += C(a, b);
        }
      }
    }
  }
  return F;
}

/// The three 3x3 essential matrices composing the linear rolling-shutter F:
/// E0 = [t]x R, E1 = [R d1]x R, E2 = [d2]x R, with
///   x2^T (E0 + u2 E2 - u1 E1) x1 = 0.
struct AtomicTriple {
  Mat3 E0 = Mat3::Zero();
  Mat3 E1 = Mat3::Zero();
  Mat3 E2 = Mat3::Zero();
};

inline AtomicTriple AtomsFromParams(const MotionParams& p) {
  AtomicTriple a;
  a.E0 = Skew(p.t) * p.R;
  a.E1 = Skew(p.R * p.d1) * p.R;
  a.E2 = Skew(p.d2) * p.R;
  return a;
}

/// Linear rolling-shutter 5x5 matrix assembled entry by entry from the atoms.
/// Lifting order (u^2, uv, u, v, 1); rows belong to the second image.
inline MatX LinearRsFromAtoms(const AtomicTriple& a) {
  const Mat3& E0 = a.E0;
  const Mat3& E1 = a.E1;
  const Mat3& E2 = a.E2;
  MatX F = MatX::Zero(5, 5);
  for (int j = 0; j < 3; ++j) {
    F(0, j + 2) = E2(0, j);
    F(1, j + 2) = E2(1, j);
  }
  for (int i = 0; i < 3; ++i) {
    F(i + 2, 0) = -E1(i, 0);
    F(i + 2, 1) = -E1(i, 1);
  }
  F(2, 2) = E0(0, 0) + E2(2, 0) - E1(0, 2);
  F(2, 3) = E0(0, 1) + E2(2, 1);
  F(2, 4) = E0(0, 2) + E2(2, 2);
  F(3, 2) = E0(1, 0) - E1(1, 2);
  F(4, 2) = E0(2, 0) - E1(2, 2);
  F(3, 3) = E0(1, 1);
  F(3, 4) = E0(1, 2);
  F(4, 3) = E0(2, 1);
  F(4, 4) = E0(2, 2);
  return F;
}

namespace detail {

inline void RequireModel(const MotionParams& p, CameraModel model) {
  if (p.model != model) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("expected ") + std::string(ModelName(model)) +
                    " parameters, got " + std::string(ModelName(p.model)));
  }
}

inline void RequireNoAngular(const MotionParams& p) {
  if (!p.w1.isZero(0.0) || !p.w2.isZero(0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "linear camera models take no angular velocity");
  }
}

}  // namespace detail

/// Unnormalized F of any model; the objective of the nonlinear solvers.
inline MatX AssembleF(const MotionParams& p) {
  switch (p.model) {
    case CameraModel::kPerspective:
      return Skew(p.t) * p.R;
    case CameraModel::kLinearRollingShutter:
      return LinearRsFromAtoms(AtomsFromParams(p));
    default:
      return CollectLiftedCoefficients(ScanlineEssentialPolynomial(p), p.model);
  }
}

inline GeneralizedEssential BuildPerspective(const MotionParams& p) {
  detail::RequireModel(p, CameraModel::kPerspective);
  return {p.model, CanonicalScale(Skew(p.t) * p.R)};
}

inline GeneralizedEssential BuildLinearRs(const MotionParams& p) {
  detail::RequireModel(p, CameraModel::kLinearRollingShutter);
  detail::RequireNoAngular(p);
  return {p.model, CanonicalScale(LinearRsFromAtoms(AtomsFromParams(p)))};
}

inline GeneralizedEssential BuildUniformRs(const MotionParams& p) {
  detail::RequireModel(p, CameraModel::kUniformRollingShutter);
  return {p.model, CanonicalScale(CollectLiftedCoefficients(
                       ScanlineEssentialPolynomial(p), p.model))};
}

inline GeneralizedEssential BuildLinearPb(const MotionParams& p) {
  detail::RequireModel(p, CameraModel::kLinearPushBroom);
  detail::RequireNoAngular(p);
  return {p.model, CanonicalScale(CollectLiftedCoefficients(
                       ScanlineEssentialPolynomial(p), p.model))};
}

inline GeneralizedEssential BuildUniformPb(const MotionParams& p) {
  detail::RequireModel(p, CameraModel::kUniformPushBroom);
  return {p.model, CanonicalScale(CollectLiftedCoefficients(
                       ScanlineEssentialPolynomial(p), p.model))};
}

inline GeneralizedEssential BuildEssential(const MotionParams& p) {
  switch (p.model) {
    case CameraModel::kPerspective: return BuildPerspective(p);
    case CameraModel::kLinearPushBroom: return BuildLinearPb(p);
    case CameraModel::kLinearRollingShutter: return BuildLinearRs(p);
    case CameraModel::kUniformPushBroom: return BuildUniformPb(p);
    case CameraModel::kUniformRollingShutter: return BuildUniformRs(p);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown camera model");
}

inline double Residual(const GeneralizedEssential& F, const ImagePoint& x1,
                       const ImagePoint& x2) {
  return Lift(x2, F.model).dot(F.F * Lift(x1, F.model));
}

struct CurveBounds {
  double u_min = -1.0;
  double u_max = 1.0;
  double v_min = -1.0;
  double v_max = 1.0;
};

struct EpipolarCurve {
  ImagePoint source;
  std::vector<ImagePoint> points;
  int degree = 1;
};

/// Samples the epipolar curve of x1 in the second image. For fixed u2 the
/// constraint is linear in v2, so each grid value yields at most one point.
inline EpipolarCurve SampleEpipolarCurve(const GeneralizedEssential& F,
                                         const ImagePoint& x1,
                                         const CurveBounds& bounds,
                                         int n_samples) {
  if (n_samples < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two samples");
  }
  EpipolarCurve curve;
  curve.source = x1;
  curve.degree = CurveDegree(F.model);
  const VecX g = F.F * Lift(x1, F.model);
  const auto exps = MonomialExponents(F.model);
  for (int k = 0; k < n_samples; ++k) {
    const double u2 = bounds.u_min + (bounds.u_max - bounds.u_min) * k /
                                         static_cast<double>(n_samples - 1);
    double c0 = 0.0;
    double c1 = 0.0;
    for (std::size_t i = 0; i < exps.size(); ++i) {
      const double term = g[static_cast<Eigen::Index>(i)] * std::pow(u2, exps[i].first);
      (exps[i].second == 0 ? c0 : c1) += term;
    }
    if (std::abs(c1) <= 1e-300) continue;
    const double v2 = -c0 / c1;
    if (v2 >= bounds.v_min && v2 <= bounds.v_max && std::isfinite(v2)) {
      curve.points.push_back({u2, v2});
    }
  }
  return curve;
}

}  // namespace rsepi
