#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "rsepi/essential.hpp"
#include "rsepi/geometry.hpp"
#include "rsepi/types.hpp"

namespace rsepi {

/// Affine map on lifted vectors: every non-constant monomial coordinate is
/// shifted by its centroid and scaled to unit RMS; the trailing 1 is kept.
/// Diagonal scaling preserves the zero top-left block of F.
struct NormalizationTransform {
  VecX mean;
  VecX scale;

  int dim() const { return static_cast<int>(mean.size()) + 1; }

  MatX Matrix() const {
    const int n = dim();
    MatX T = MatX::Identity(n, n);
    for (int k = 0; k < n - 1; ++k) {
      T(k, k) = scale[k];
      T(k, n - 1) = -scale[k] * mean[k];
    }
    return T;
  }

  VecX Apply(const VecX& lifted) const {
    VecX out = lifted;
    for (int k = 0; k < dim() - 1; ++k) out[k] = scale[k] * (lifted[k] - mean[k]);
    return out;
  }

  VecX Invert(const VecX& normalized) const {
    VecX out = normalized;
    for (int k = 0; k < dim() - 1; ++k) out[k] = normalized[k] / scale[k] + mean[k];
    return out;
  }
};

inline NormalizationTransform FitNormalization(std::span<const VecX> lifted) {
  if (lifted.empty()) {
    throw Error(ErrorCode::kInsufficientPoints, "no points to normalize");
  }
  const auto n = lifted.front().size();
  NormalizationTransform T;
  T.mean = VecX::Zero(n - 1);
  T.scale = VecX::Ones(n - 1);
  for (const auto& l : lifted) T.mean += l.head(n - 1);
  T.mean /= static_cast<double>(lifted.size());
  VecX ms = VecX::Zero(n - 1);
  for (const auto& l : lifted) ms += (l.head(n - 1) - T.mean).array().square().matrix();
  ms /= static_cast<double>(lifted.size());
  bool any_spread = false;
  for (Eigen::Index k = 0; k < n - 1; ++k) {
    const double rms = std::sqrt(ms[k]);
    const double ref = std::max(1.0, std::abs(T.mean[k]));
    if (rms > 1e-12 * ref) {
      T.scale[k] = 1.0 / rms;
      any_spread = true;
    }
  }
  if (!any_spread) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "all lifted points coincide");
  }
  return T;
}

struct NormalizedLifted {
  std::vector<VecX> lifted1;  // first image, normalized
  std::vector<VecX> lifted2;
  NormalizationTransform T1;
  NormalizationTransform T2;
};

inline NormalizedLifted NormalizeLifted(std::span<const Correspondence> corrs,
                                        CameraModel model) {
  NormalizedLifted out;
  std::vector<VecX> raw1;
  std::vector<VecX> raw2;
  raw1.reserve(corrs.size());
  raw2.reserve(corrs.size());
  for (const auto& c : corrs) {
    raw1.push_back(Lift(c.x1, model));
    raw2.push_back(Lift(c.x2, model));
  }
  out.T1 = FitNormalization(raw1);
  out.T2 = FitNormalization(raw2);
  out.lifted1.reserve(corrs.size());
  out.lifted2.reserve(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    out.lifted1.push_back(out.T1.Apply(raw1[i]));
    out.lifted2.push_back(out.T2.Apply(raw2[i]));
  }
  return out;
}

/// Entries of F that the model allows to be nonzero, row-major.
inline std::vector<std::pair<int, int>> SupportOf(CameraModel model) {
  const int n = LiftedDim(model);
  std::vector<std::pair<int, int>> support;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (model != CameraModel::kPerspective && r < 2 && c < 2) continue;
      support.emplace_back(r, c);
    }
  }
  return support;
}

struct LinearSolution {
  GeneralizedEssential F;
  MatX F_normalized;           // in the normalized lifted frame, unit norm
  NormalizationTransform T1;
  NormalizationTransform T2;
  VecX singular_values;        // of the constraint matrix, descending
  double residual_ratio = 0.0; // sigma_last / sigma_second_last
};

inline MatX ConstraintMatrix(const NormalizedLifted& nl, CameraModel model) {
  const auto support = SupportOf(model);
  const auto rows = static_cast<Eigen::Index>(nl.lifted1.size());
  MatX A(rows, static_cast<Eigen::Index>(support.size()));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const VecX& l1 = nl.lifted1[static_cast<std::size_t>(i)];
    const VecX& l2 = nl.lifted2[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < support.size(); ++k) {
      A(i, static_cast<Eigen::Index>(k)) = l2[support[k].first] * l1[support[k].second];
    }
  }
  return A;
}

/// DLT estimate of the model's generalized essential matrix from at least
/// LinearPointCount(model) correspondences.
inline LinearSolution SolveLinear(std::span<const Correspondence> corrs,
                                  CameraModel model,
                                  const Tolerances& tol = DefaultTolerances()) {
  const int needed = LinearPointCount(model);
  if (static_cast<int>(corrs.size()) < needed) {
    throw Error(ErrorCode::kInsufficientPoints,
                std::string(ModelName(model)) + " needs " +
                    std::to_string(needed) + " correspondences, got " +
                    std::to_string(corrs.size()));
  }
  const NormalizedLifted nl = NormalizeLifted(corrs, model);
  const auto support = SupportOf(model);
  const auto unknowns = static_cast<Eigen::Index>(support.size());
  MatX A = ConstraintMatrix(nl, model);
  if (A.rows() < unknowns) {
    A.conservativeResize(unknowns, Eigen::NoChange);
    A.bottomRows(unknowns - static_cast<Eigen::Index>(corrs.size())).setZero();
  }
  Eigen::JacobiSVD<MatX> svd(A, Eigen::ComputeFullV);
  const VecX& sv = svd.singularValues();
  const double s0 = sv[0];
  const double s_second_last = sv[unknowns - 2];
  if (!(s0 > 0.0) || s_second_last / s0 < tol.rank_deficiency) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "constraint matrix is rank deficient");
  }
  const VecX f = svd.matrixV().col(unknowns - 1);

  const int n = LiftedDim(model);
  MatX Fn = MatX::Zero(n, n);
  for (Eigen::Index k = 0; k < unknowns; ++k) {
    Fn(support[static_cast<std::size_t>(k)].first,
       support[static_cast<std::size_t>(k)].second) = f[k];
  }
  LinearSolution out;
  out.F_normalized = Fn;
  out.T1 = nl.T1;
  out.T2 = nl.T2;
  out.singular_values = sv;
  out.residual_ratio = sv[unknowns - 1] / s_second_last;
  // lift2^T F lift1 = (T2 lift2)^T Fn (T1 lift1)
  MatX F = nl.T2.Matrix().transpose() * Fn * nl.T1.Matrix();
  for (int r = 0; r < 2 && model != CameraModel::kPerspective; ++r)
    for (int c = 0; c < 2; ++c) F(r, c) = 0.0;
  out.F = {model, CanonicalScale(F)};
  return out;
}

/// Candidate (R, t) pairs of an essential matrix: the twisted pair times the
/// sign of t. t has unit norm.
inline std::array<std::pair<Mat3, Vec3>, 4> DecomposeEssential(const Mat3& E) {
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  if (U.determinant() < 0.0) U.col(2) *= -1.0;
  if (V.determinant() < 0.0) V.col(2) *= -1.0;
  Mat3 W;
  W << 0.0, -1.0, 0.0,
       1.0, 0.0, 0.0,
       0.0, 0.0, 1.0;
  const Mat3 Ra = U * W * V.transpose();
  const Mat3 Rb = U * W.transpose() * V.transpose();
  const Vec3 t = U.col(2);
  return {{{Ra, t}, {Ra, -t}, {Rb, t}, {Rb, -t}}};
}

/// Global-shutter relative pose: normalized 8-point estimate followed by
/// essential decomposition and cheirality.
inline MotionParams SolveEightPoint(std::span<const Correspondence> corrs,
                                    const Tolerances& tol = DefaultTolerances()) {
  const LinearSolution lin = SolveLinear(corrs, CameraModel::kPerspective, tol);
  const Mat3 E = lin.F.F;
  MotionParams best;
  std::size_t best_count = 0;
  bool have = false;
  for (const auto& [R, t] : DecomposeEssential(E)) {
    MotionParams p;
    p.model = CameraModel::kPerspective;
    p.R = R;
    p.t = t;
    const std::size_t n = CountInFront(p, corrs);
    if (!have || n > best_count) {
      best = p;
      best_count = n;
      have = true;
    }
  }
  if (2 * best_count <= corrs.size()) {
    throw Error(ErrorCode::kCheiralityAmbiguous,
                "no pose candidate places a majority of points in front");
  }
  return best;
}

namespace detail {

/// a1 l1^2 + a2 l1 l2 + a3 l2^2 + a4
using Quadric2 = Eigen::Vector4d;

inline Mat3 CompleteThirdColumn(const Mat3& C, const Eigen::Vector2d& lambda) {
  Mat3 E = C;
  E.col(2) = lambda[0] * C.col(0) + lambda[1] * C.col(1);
  return E;
}

inline Eigen::Matrix<double, 9, 1> TraceConstraint(const Mat3& E) {
  const Mat3 EEt = E * E.transpose();
  const Mat3 T = 2.0 * EEt * E - EEt.trace() * E;
  return Eigen::Map<const Eigen::Matrix<double, 9, 1>>(T.data());
}

/// Coefficients of the six quadratic scalar equations (first two columns of
/// the trace constraint) in (lambda1, lambda2). They contain no odd terms, so
/// four evaluations determine them exactly.
inline std::array<Quadric2, 6> QuadraticEquations(const Mat3& C) {
  const auto T00 = TraceConstraint(CompleteThirdColumn(C, {0.0, 0.0}));
  const auto T10 = TraceConstraint(CompleteThirdColumn(C, {1.0, 0.0}));
  const auto T01 = TraceConstraint(CompleteThirdColumn(C, {0.0, 1.0}));
  const auto T11 = TraceConstraint(CompleteThirdColumn(C, {1.0, 1.0}));
  std::array<Quadric2, 6> eqs;
  // Column-major storage: entries 0..5 are columns 0 and 1.
  for (int k = 0; k < 6; ++k) {
    const double a4 = T00[k];
    const double a1 = T10[k] - a4;
    const double a3 = T01[k] - a4;
    const double a2 = T11[k] - a1 - a3 - a4;
    eqs[static_cast<std::size_t>(k)] = Quadric2(a1, a2, a3, a4);
  }
  return eqs;
}

inline double EvalQuadric(const Quadric2& q, const Eigen::Vector2d& l) {
  return q[0] * l[0] * l[0] + q[1] * l[0] * l[1] + q[2] * l[1] * l[1] + q[3];
}

/// Real roots of a x^2 + b x + c = 0 (a may vanish).
inline std::vector<double> RealQuadraticRoots(double a, double b, double c) {
  std::vector<double> roots;
  const double scale = std::max({std::abs(a), std::abs(b), std::abs(c)});
  if (scale == 0.0) return roots;
  a /= scale;
  b /= scale;
  c /= scale;
  if (std::abs(a) < 1e-14) {
    if (std::abs(b) > 1e-14) roots.push_back(-c / b);
    return roots;
  }
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) {
    if (disc > -1e-12 * (b * b + std::abs(4.0 * a * c))) {
      disc = 0.0;
    } else {
      return roots;
    }
  }
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
  if (q != 0.0) {
    roots.push_back(q / a);
    roots.push_back(c / q);
  } else {
    roots.push_back(0.0);
  }
  return roots;
}

/// Solves two equations of the form l^T A l + k = 0. Eliminating k gives a
/// homogeneous quadratic fixing the direction of l; either equation then
/// fixes its length up to sign.
inline std::vector<Eigen::Vector2d> SolveQuadricPair(const Quadric2& q1,
                                                     const Quadric2& q2) {
  std::vector<Eigen::Vector2d> out;
  const Eigen::Vector3d h = q2[3] * q1.head<3>() - q1[3] * q2.head<3>();
  std::vector<Eigen::Vector2d> dirs;
  if (std::abs(h[0]) >= std::abs(h[2])) {
    for (double s : RealQuadraticRoots(h[0], h[1], h[2])) {  // l1 / l2 = s
      dirs.emplace_back(s, 1.0);
    }
    if (std::abs(h[0]) < 1e-14 * h.norm()) dirs.emplace_back(1.0, 0.0);
  } else {
    for (double s : RealQuadraticRoots(h[2], h[1], h[0])) {  // l2 / l1 = s
      dirs.emplace_back(1.0, s);
    }
    if (std::abs(h[2]) < 1e-14 * h.norm()) dirs.emplace_back(0.0, 1.0);
  }
  for (Eigen::Vector2d d : dirs) {
    d.normalize();
    const double a1 = EvalQuadric(q1, d) - q1[3];
    const double a2 = EvalQuadric(q2, d) - q2[3];
    const bool use1 = std::abs(a1) >= std::abs(a2);
    const double a = use1 ? a1 : a2;
    const double k = use1 ? q1[3] : q2[3];
    if (a == 0.0) continue;
    const double s2 = -k / a;
    if (s2 < 0.0) continue;
    const double s = std::sqrt(s2);
    out.push_back(s * d);
    if (s > 0.0) out.push_back(-s * d);
  }
  return out;
}

/// Gauss-Newton polish of lambda on all six quadratic equations.
inline Eigen::Vector2d PolishLambda(const std::array<Quadric2, 6>& eqs,
                                    Eigen::Vector2d l) {
  for (int it = 0; it < 5; ++it) {
    Eigen::Matrix<double, 6, 2> J;
    Eigen::Matrix<double, 6, 1> r;
    for (int k = 0; k < 6; ++k) {
      const Quadric2& q = eqs[static_cast<std::size_t>(k)];
      r[k] = EvalQuadric(q, l);
      J(k, 0) = 2.0 * q[0] * l[0] + q[1] * l[1];
      J(k, 1) = q[1] * l[0] + 2.0 * q[2] * l[1];
    }
    const Eigen::Vector2d step = J.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) break;
    l += step;
    if (step.norm() <= 1e-15 * (1.0 + l.norm())) break;
  }
  return l;
}

/// Third-column completions of a rank-2 essential matrix whose first two
/// columns are known. Picks the best-conditioned pair of the six quadratic
/// equations: the largest, then the one most independent of it.
inline std::vector<Mat3> CompleteEssentialColumns(const Mat3& C) {
  const auto eqs = QuadraticEquations(C);
  std::size_t first = 0;
  for (std::size_t k = 1; k < eqs.size(); ++k) {
    if (eqs[k].norm() > eqs[first].norm()) first = k;
  }
  const Eigen::Vector4d u = eqs[first].normalized();
  std::size_t second = first == 0 ? 1 : 0;
  double best = -1.0;
  for (std::size_t k = 0; k < eqs.size(); ++k) {
    if (k == first) continue;
    const double indep = (eqs[k] - eqs[k].dot(u) * u).norm();
    if (indep > best) {
      best = indep;
      second = k;
    }
  }
  std::vector<Mat3> out;
  for (const auto& l : SolveQuadricPair(eqs[first], eqs[second])) {
    out.push_back(CompleteThirdColumn(C, PolishLambda(eqs, l)));
  }
  return out;
}

}  // namespace detail

struct AtomCandidate {
  AtomicTriple atoms;
  double violation = 0.0;  // summed essential-matrix violation of E0, E1, E2
};

/// All real completions of the atoms of a linear rolling-shutter F, ranked by
/// essential-matrix violation (best first).
inline std::vector<AtomCandidate> RecoverAtomCandidates(
    const GeneralizedEssential& F, const Tolerances& tol = DefaultTolerances()) {
  if (F.model != CameraModel::kLinearRollingShutter || F.F.rows() != 5 ||
      F.F.cols() != 5) {
    throw Error(ErrorCode::kInvalidArgument,
                "atom recovery needs a 5x5 linear rolling-shutter matrix");
  }
  const MatX& M = F.F;
  const double fnorm = M.norm();
  Mat3 C1 = Mat3::Zero();  // first two columns of E1
  Mat3 C2t = Mat3::Zero(); // first two rows of E2, transposed into columns
  for (int i = 0; i < 3; ++i) {
    C1(i, 0) = -M(i + 2, 0);
    C1(i, 1) = -M(i + 2, 1);
    C2t(i, 0) = M(0, i + 2);
    C2t(i, 1) = M(1, i + 2);
  }
  if (C1.norm() < tol.near_zero_velocity * fnorm) {
    throw Error(ErrorCode::kNearZeroVelocity,
                "first-frame velocity block vanishes; use the perspective model");
  }
  if (C2t.norm() < tol.near_zero_velocity * fnorm) {
    throw Error(ErrorCode::kNearZeroVelocity,
                "second-frame velocity block vanishes; use the perspective model");
  }
  const auto E1s = detail::CompleteEssentialColumns(C1);
  const auto E2ts = detail::CompleteEssentialColumns(C2t);
  if (E1s.empty() || E2ts.empty()) {
    throw Error(ErrorCode::kNoRealSolution,
                "rank/trace completion has no real solution");
  }
  std::vector<AtomCandidate> out;
  for (const Mat3& E1 : E1s) {
    for (const Mat3& E2t : E2ts) {
      const Mat3 E2 = E2t.transpose();
      Mat3 E0;
      E0(0, 0) = M(2, 2) - E2(2, 0) + E1(0, 2);
      E0(0, 1) = M(2, 3) - E2(2, 1);
      E0(0, 2) = M(2, 4) - E2(2, 2);
      E0(1, 0) = M(3, 2) + E1(1, 2);
      E0(2, 0) = M(4, 2) + E1(2, 2);
      E0(1, 1) = M(3, 3);
      E0(1, 2) = M(3, 4);
      E0(2, 1) = M(4, 3);
      E0(2, 2) = M(4, 4);
      AtomCandidate cand;
      cand.atoms = {E0, E1, E2};
      cand.violation = EssentialViolation(E0) + EssentialViolation(E1) +
                       EssentialViolation(E2);
      out.push_back(cand);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AtomCandidate& a, const AtomCandidate& b) {
                     return a.violation < b.violation;
                   });
  return out;
}

inline AtomicTriple RecoverAtoms(const GeneralizedEssential& F,
                                 const Tolerances& tol = DefaultTolerances()) {
  return RecoverAtomCandidates(F, tol).front().atoms;
}

/// Splits the atoms into (R, t, d1, d2), picking the twisted-pair candidate by
/// cheirality of the rolling-shutter triangulation. Output has ||t|| = 1.
inline MotionParams DecomposeAtoms(const AtomicTriple& atoms,
                                   std::span<const Correspondence> corrs) {
  MotionParams best;
  std::size_t best_count = 0;
  bool have = false;
  for (const auto& [R, t] : DecomposeEssential(atoms.E0)) {
    const Mat3 base = Skew(t) * R;
    const double s = (atoms.E0.array() * base.array()).sum() / base.squaredNorm();
    if (s == 0.0) continue;
    MotionParams p;
    p.model = CameraModel::kLinearRollingShutter;
    p.R = R;
    p.t = t;
    p.d1 = R.transpose() * Vee(atoms.E1 * R.transpose()) / s;
    p.d2 = Vee(atoms.E2 * R.transpose()) / s;
    const std::size_t n = CountInFront(p, corrs);
    if (!have || n > best_count) {
      best = p;
      best_count = n;
      have = true;
    }
  }
  if (!have || 2 * best_count <= corrs.size()) {
    throw Error(ErrorCode::kCheiralityAmbiguous,
                "no pose candidate places a majority of points in front");
  }
  return GaugeFixed(best);
}

/// Linear 20-point relative pose for linear rolling-shutter cameras.
inline MotionParams SolveTwentyPoint(std::span<const Correspondence> corrs,
                                     const Tolerances& tol = DefaultTolerances()) {
  const LinearSolution lin =
      SolveLinear(corrs, CameraModel::kLinearRollingShutter, tol);
  const auto candidates = RecoverAtomCandidates(lin.F, tol);
  // Fall through the ranked completions until one decomposes.
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    try {
      return DecomposeAtoms(candidates[i].atoms, corrs);
    } catch (const Error&) {
      if (i + 1 == candidates.size()) throw;
    }
  }
  throw Error(ErrorCode::kNoRealSolution, "no atom candidate");
}

}  // namespace rsepi
