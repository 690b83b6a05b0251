#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rsepi/essential.hpp"
#include "rsepi/geometry.hpp"
#include "rsepi/linear.hpp"
#include "rsepi/types.hpp"

namespace rsepi {

enum class SampsonVariant {
  // Denominator sums the squared components of F lift(x1) and F^T lift(x2).
  kLifted,
  // Denominator is the squared gradient of the residual with respect to the
  // four image coordinates (chain rule through the lifting).
  kJacobianExact,
};

/// One summand of the Sampson error, or nullopt when the denominator falls
/// below `floor`.
inline std::optional<double> PerPointSampson(
    const MatX& F, CameraModel model, const ImagePoint& x1,
    const ImagePoint& x2, SampsonVariant variant = SampsonVariant::kLifted,
    double floor = DefaultTolerances().sampson_denominator) {
  const VecX l1 = Lift(x1, model);
  const VecX l2 = Lift(x2, model);
  const VecX Fl1 = F * l1;
  const VecX Ftl2 = F.transpose() * l2;
  const double r = l2.dot(Fl1);
  double den = 0.0;
  if (variant == SampsonVariant::kLifted) {
    den = Fl1.squaredNorm() + Ftl2.squaredNorm();
  } else {
    const auto [du1, dv1] = LiftJacobian(x1, model);
    const auto [du2, dv2] = LiftJacobian(x2, model);
    const double a = Ftl2.dot(du1);
    const double b = Ftl2.dot(dv1);
    const double c = Fl1.dot(du2);
    const double d = Fl1.dot(dv2);
    den = a * a + b * b + c * c + d * d;
  }
  if (!(den >= floor)) return std::nullopt;
  return r * r / den;
}

inline std::optional<double> PerPointSampson(
    const GeneralizedEssential& F, const ImagePoint& x1, const ImagePoint& x2,
    SampsonVariant variant = SampsonVariant::kLifted) {
  return PerPointSampson(F.F, F.model, x1, x2, variant);
}

struct SampsonSum {
  double error = 0.0;
  std::size_t skipped = 0;  // terms with a vanishing denominator
};

inline SampsonSum SampsonError(const MatX& F, CameraModel model,
                               std::span<const Correspondence> corrs,
                               SampsonVariant variant = SampsonVariant::kLifted) {
  SampsonSum out;
  for (const auto& c : corrs) {
    if (const auto e = PerPointSampson(F, model, c.x1, c.x2, variant)) {
      out.error += *e;
    } else {
      ++out.skipped;
    }
  }
  return out;
}

inline SampsonSum SampsonError(const GeneralizedEssential& F,
                               std::span<const Correspondence> corrs,
                               SampsonVariant variant = SampsonVariant::kLifted) {
  return SampsonError(F.F, F.model, corrs, variant);
}

/// Flat parameter vector: angle-axis of R, t, [w1, w2,] d1, d2.
inline int ParamDim(CameraModel model) {
  switch (model) {
    case CameraModel::kPerspective: return 6;
    case CameraModel::kLinearPushBroom:
    case CameraModel::kLinearRollingShutter: return 12;
    default: return 18;
  }
}

inline VecX ToParamVector(const MotionParams& p) {
  VecX x(ParamDim(p.model));
  x.segment<3>(0) = AngleAxisFromRotation(p.R);
  x.segment<3>(3) = p.t;
  int k = 6;
  if (HasAngularVelocity(p.model)) {
    x.segment<3>(k) = p.w1;
    x.segment<3>(k + 3) = p.w2;
    k += 6;
  }
  if (HasLinearVelocity(p.model)) {
    x.segment<3>(k) = p.d1;
    x.segment<3>(k + 3) = p.d2;
  }
  return x;
}

inline MotionParams FromParamVector(const VecX& x, CameraModel model) {
  MotionParams p;
  p.model = model;
  p.R = RotationFromAngleAxis(x.segment<3>(0));
  p.t = x.segment<3>(3);
  int k = 6;
  if (HasAngularVelocity(model)) {
    p.w1 = x.segment<3>(k);
    p.w2 = x.segment<3>(k + 3);
    k += 6;
  }
  if (HasLinearVelocity(model)) {
    p.d1 = x.segment<3>(k);
    p.d2 = x.segment<3>(k + 3);
  }
  return p;
}

struct SampsonConfig {
  int max_iterations = 200;
  double gradient_tolerance = 1e-16;
  double step_tolerance = 1e-12;
  // Relative central-difference step.
  double diff_step = 1e-7;
  // Objective minimized by the solvers. The lifted form admits near-zero
  // values for motions far from the truth, so the solvers default to the
  // chain-rule form.
  SampsonVariant variant = SampsonVariant::kJacobianExact;
  // Minimal solver: objective below which a start counts as converged.
  double objective_threshold = 1e-12;
  int restarts = 10;
  std::uint64_t seed = 0;
};

struct RefineResult {
  MotionParams params;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int iterations = 0;
};

namespace detail {

/// Lifted vectors (and their image-coordinate derivatives) of a
/// correspondence set. They do not depend on the motion, so the optimizer
/// computes them once.
struct LiftedSet {
  MatX l1, l2;        // lifted dim x n
  MatX du1, dv1, du2, dv2;
};

inline LiftedSet LiftAll(std::span<const Correspondence> corrs,
                         CameraModel model) {
  const auto dim = static_cast<Eigen::Index>(LiftedDim(model));
  const auto n = static_cast<Eigen::Index>(corrs.size());
  LiftedSet s{MatX(dim, n), MatX(dim, n), MatX(dim, n),
              MatX(dim, n), MatX(dim, n), MatX(dim, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = corrs[static_cast<std::size_t>(i)];
    s.l1.col(i) = Lift(c.x1, model);
    s.l2.col(i) = Lift(c.x2, model);
    auto [du1, dv1] = LiftJacobian(c.x1, model);
    auto [du2, dv2] = LiftJacobian(c.x2, model);
    s.du1.col(i) = du1;
    s.dv1.col(i) = dv1;
    s.du2.col(i) = du2;
    s.dv2.col(i) = dv2;
  }
  return s;
}

/// Signed square roots of the Sampson summands, so that the squared norm is
/// the Sampson error. Degenerate terms contribute zero.
inline VecX SampsonResiduals(const MatX& F, const LiftedSet& s,
                             SampsonVariant variant) {
  const double floor = DefaultTolerances().sampson_denominator;
  const MatX Fl1 = F * s.l1;
  const MatX Ftl2 = F.transpose() * s.l2;
  VecX r(s.l1.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double e = s.l2.col(i).dot(Fl1.col(i));
    double den;
    if (variant == SampsonVariant::kLifted) {
      den = Fl1.col(i).squaredNorm() + Ftl2.col(i).squaredNorm();
    } else {
      const double a = Ftl2.col(i).dot(s.du1.col(i));
      const double b = Ftl2.col(i).dot(s.dv1.col(i));
      const double c = Fl1.col(i).dot(s.du2.col(i));
      const double d = Fl1.col(i).dot(s.dv2.col(i));
      den = a * a + b * b + c * c + d * d;
    }
    r[i] = den >= floor ? e / std::sqrt(den) : 0.0;
  }
  return r;
}

inline VecX GaugeFixVector(const VecX& x, CameraModel model) {
  return ToParamVector(GaugeFixed(FromParamVector(x, model)));
}

}  // namespace detail

/// Sampson error of the model F built from `p`.
inline double SampsonObjective(const MotionParams& p,
                               std::span<const Correspondence> corrs,
                               SampsonVariant variant = SampsonVariant::kLifted) {
  return detail::SampsonResiduals(AssembleF(p), detail::LiftAll(corrs, p.model),
                                  variant)
      .squaredNorm();
}

/// Levenberg-Marquardt minimization of the Sampson error over the motion
/// parameters, with numeric Jacobians. Only decreasing steps are accepted.
inline RefineResult Refine(const MotionParams& init,
                           std::span<const Correspondence> corrs,
                           CameraModel model, const SampsonConfig& cfg = {}) {
  const MotionParams start = GaugeFixed(RestrictToModel(init, model));
  VecX x = ToParamVector(start);
  if (!x.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "initial parameters are not finite");
  }
  const detail::LiftedSet lifted = detail::LiftAll(corrs, model);
  auto residuals = [&](const VecX& xv) {
    return detail::SampsonResiduals(AssembleF(FromParamVector(xv, model)),
                                    lifted, cfg.variant);
  };
  VecX r = residuals(x);
  double cost = r.squaredNorm();
  if (!std::isfinite(cost)) {
    throw Error(ErrorCode::kNonFinite, "Sampson objective is not finite at init");
  }
  RefineResult out;
  out.initial_objective = cost;

  const auto n = x.size();
  auto jacobian = [&](const VecX& xv) {
    MatX J(r.size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double h = cfg.diff_step * std::max(1.0, std::abs(xv[j]));
      VecX xp = xv, xm = xv;
      xp[j] += h;
      xm[j] -= h;
      J.col(j) = (residuals(xp) - residuals(xm)) / (2.0 * h);
    }
    return J;
  };

  MatX J = jacobian(x);
  MatX JtJ = J.transpose() * J;
  VecX g = J.transpose() * r;
  double mu = 1e-4 * std::max(JtJ.diagonal().maxCoeff(), 1e-300);
  double nu = 2.0;
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    if (cost == 0.0 || g.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance) break;
    const VecX diag = JtJ.diagonal().cwiseMax(1e-12 * JtJ.diagonal().maxCoeff());
    MatX A = JtJ;
    A.diagonal() += mu * diag;
    const VecX step = A.ldlt().solve(-g);
    if (!step.allFinite()) {
      mu *= nu;
      nu *= 2.0;
      continue;
    }
    if (step.norm() <= cfg.step_tolerance * (x.norm() + cfg.step_tolerance)) break;
    const VecX x_new = detail::GaugeFixVector(x + step, model);
    const VecX r_new = residuals(x_new);
    const double cost_new = r_new.squaredNorm();
    if (!std::isfinite(cost_new)) {
      throw Error(ErrorCode::kNonFinite,
                  "Sampson objective became non-finite during the search");
    }
    const double predicted = step.dot(mu * diag.cwiseProduct(step) - g);
    const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
    if (cost_new < cost && rho > 0.0) {
      const double rel = (cost - cost_new) / cost;
      x = x_new;
      r = r_new;
      cost = cost_new;
      J = jacobian(x);
      JtJ = J.transpose() * J;
      g = J.transpose() * r;
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      if (rel < 1e-15) break;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (mu > 1e300) break;
    }
  }
  MotionParams result = FromParamVector(x, model);
  // The objective cannot tell (t, d) from -(t, d); cheirality can.
  MotionParams flipped = result;
  flipped.t = -flipped.t;
  flipped.d1 = -flipped.d1;
  flipped.d2 = -flipped.d2;
  if (CountInFront(flipped, corrs) > CountInFront(result, corrs)) result = flipped;
  out.params = GaugeFixed(result);
  out.final_objective = cost;
  out.iterations = it;
  return out;
}

/// The rotation-free counterpart of a model, used as an intermediate stage.
inline CameraModel LinearCounterpart(CameraModel model) {
  switch (model) {
    case CameraModel::kUniformRollingShutter:
      return CameraModel::kLinearRollingShutter;
    case CameraModel::kUniformPushBroom:
      return CameraModel::kLinearPushBroom;
    default:
      return model;
  }
}

/// Refines `init` in `model`, passing through the rotation-free counterpart
/// first when the model carries angular velocities.
inline RefineResult RefineStaged(const MotionParams& init,
                                 std::span<const Correspondence> corrs,
                                 CameraModel model, const SampsonConfig& cfg) {
  const CameraModel lin = LinearCounterpart(model);
  if (lin == model || HasAngularVelocity(init.model)) {
    return Refine(init, corrs, model, cfg);
  }
  const RefineResult stage = Refine(init, corrs, lin, cfg);
  RefineResult out = Refine(stage.params, corrs, model, cfg);
  out.initial_objective = stage.initial_objective;
  return out;
}

/// `base` with velocities replaced by random ones of log-uniform magnitude.
inline MotionParams RandomVelocityStart(const MotionParams& base,
                                        CameraModel model, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto direction = [&] {
    Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    return Vec3(v.normalized());
  };
  MotionParams init = RestrictToModel(base, model);
  if (HasLinearVelocity(model)) {
    init.d1 = std::pow(10.0, -2.0 + 3.0 * unit(rng)) * direction();
    init.d2 = std::pow(10.0, -2.0 + 3.0 * unit(rng)) * direction();
  }
  if (HasAngularVelocity(model)) {
    init.w1 = std::pow(10.0, -3.0 + 3.0 * unit(rng)) * direction();
    init.w2 = std::pow(10.0, -3.0 + 3.0 * unit(rng)) * direction();
  }
  return init;
}

/// Refines every start in `inits`, then `cfg.restarts` random velocity
/// restarts around the first one, and keeps the lowest objective. Stops early
/// once a result reaches `cfg.objective_threshold`.
inline RefineResult RefineMultiStart(std::span<const MotionParams> inits,
                                     std::span<const Correspondence> corrs,
                                     CameraModel model,
                                     const SampsonConfig& cfg = {}) {
  if (inits.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no initial motion");
  }
  std::mt19937_64 rng(cfg.seed);
  std::optional<RefineResult> best;
  auto done = [&] {
    return best && best->final_objective <= cfg.objective_threshold;
  };
  auto consider = [&](const MotionParams& init) {
    try {
      RefineResult res = RefineStaged(init, corrs, model, cfg);
      if (!best || res.final_objective < best->final_objective) best = res;
    } catch (const Error&) {
    }
  };
  for (const auto& init : inits) {
    if (done()) break;
    consider(init);
  }
  for (int k = 0; k < cfg.restarts && !done() && HasLinearVelocity(model); ++k) {
    consider(RandomVelocityStart(inits.front(), model, rng));
  }
  if (!best) {
    throw Error(ErrorCode::kConvergenceFailed, "every start failed");
  }
  return *best;
}

/// Multi-start Sampson minimization from as few as MinimalPointCount(model)
/// correspondences. Starts from the global-shutter pose with zero velocities
/// and from `restarts` seeded random velocity perturbations of it.
inline RefineResult MinimalSolve(std::span<const Correspondence> corrs,
                                 CameraModel model,
                                 const SampsonConfig& cfg = {}) {
  const int needed = MinimalPointCount(model);
  if (static_cast<int>(corrs.size()) < needed) {
    throw Error(ErrorCode::kInsufficientPoints,
                std::string(ModelName(model)) + " needs " +
                    std::to_string(needed) + " correspondences, got " +
                    std::to_string(corrs.size()));
  }
  std::vector<MotionParams> inits;
  if (corrs.size() >= 8) {
    try {
      inits.push_back(SolveEightPoint(corrs));
    } catch (const Error&) {
    }
  }
  if (inits.empty()) {
    // Too few points (or a degenerate sample) for the 8-point start.
    std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int k = 0; k < 4; ++k) {
      MotionParams p;
      p.R = RotationFromAngleAxis(
          0.2 * Vec3(gauss(rng), gauss(rng), gauss(rng)));
      p.t = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
      inits.push_back(p);
    }
  }
  // Small samples admit several exact solutions, so every start is run.
  // Among the converged ones, prefer full cheirality, then the slowest motion.
  std::mt19937_64 rng(cfg.seed);
  for (int k = 0; k < cfg.restarts && HasLinearVelocity(model); ++k) {
    inits.push_back(RandomVelocityStart(inits.front(), model, rng));
  }
  std::optional<RefineResult> best;
  std::size_t best_front = 0;
  double best_speed = 0.0;
  std::optional<RefineResult> lowest;
  for (const auto& init : inits) {
    RefineResult res;
    try {
      res = RefineStaged(init, corrs, model, cfg);
    } catch (const Error&) {
      continue;
    }
    if (!lowest || res.final_objective < lowest->final_objective) lowest = res;
    if (res.final_objective > cfg.objective_threshold) continue;
    const std::size_t front = CountInFront(res.params, corrs);
    const double speed = res.params.d1.squaredNorm() + res.params.d2.squaredNorm() +
                         res.params.w1.squaredNorm() + res.params.w2.squaredNorm();
    if (!best || front > best_front || (front == best_front && speed < best_speed)) {
      best = res;
      best_front = front;
      best_speed = speed;
    }
  }
  if (!best) {
    throw Error(ErrorCode::kConvergenceFailed,
                "no start reached the objective threshold (lowest " +
                    (lowest ? std::to_string(lowest->final_objective)
                            : std::string("n/a")) +
                    ")");
  }
  return *best;
}

}  // namespace rsepi
