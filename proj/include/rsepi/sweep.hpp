#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "rsepi/essential.hpp"
#include "rsepi/linear.hpp"
#include "rsepi/nonlinear.hpp"
#include "rsepi/synth.hpp"
#include "rsepi/types.hpp"

namespace rsepi {

enum class SweepKind { kNoise, kFocal, kVelocity };

inline std::string_view SweepKindName(SweepKind k) {
  switch (k) {
    case SweepKind::kNoise: return "noise";
    case SweepKind::kFocal: return "focal";
    case SweepKind::kVelocity: return "velocity";
  }
  return "unknown";
}

inline std::optional<SweepKind> ParseSweepKind(std::string_view s) {
  for (SweepKind k : {SweepKind::kNoise, SweepKind::kFocal, SweepKind::kVelocity})
    if (SweepKindName(k) == s) return k;
  return std::nullopt;
}

struct SweepConfig {
  SweepKind kind = SweepKind::kNoise;
  std::vector<double> grid;
  SceneConfig scene;
  // Linear solver of the scene model (F angle; pose for linear-RS).
  bool run_linear = true;
  // Global-shutter fit versus nonlinear fit of the scene model.
  bool run_nonlinear = true;
  SampsonConfig sampson;
};

/// Labels of the solvers recorded by a sweep.
inline constexpr const char* kLabelLinear = "linear";
inline constexpr const char* kLabelGlobalShutter = "gs";
inline constexpr const char* kLabelRollingShutter = "rs";

struct TrialRecord {
  double sweep_value = 0.0;
  int trial = 0;
  std::string model;  // solver label
  double e_R = std::numeric_limits<double>::quiet_NaN();
  double e_T = std::numeric_limits<double>::quiet_NaN();
  double F_angle = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct Quartiles {
  double q1 = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double q3 = std::numeric_limits<double>::quiet_NaN();
};

/// Quartiles with linear interpolation between order statistics; NaNs are
/// ignored.
inline Quartiles ComputeQuartiles(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }),
          v.end());
  Quartiles q;
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

struct AggregateRecord {
  double sweep_value = 0.0;
  std::string model;
  int trials = 0;
  int failures = 0;
  Quartiles e_R, e_T, F_angle;
};

struct ExperimentReport {
  SweepKind kind = SweepKind::kNoise;
  std::string scene_model;
  std::vector<TrialRecord> records;
  std::vector<AggregateRecord> aggregates;

  const AggregateRecord* Find(double value, std::string_view label) const {
    for (const auto& a : aggregates)
      if (a.sweep_value == value && a.model == label) return &a;
    return nullptr;
  }
};

/// Aggregates per (sweep value, solver), in first-appearance order.
inline std::vector<AggregateRecord> Aggregate(const std::vector<TrialRecord>& records) {
  std::vector<std::pair<double, std::string>> keys;
  std::map<std::pair<double, std::string>, std::vector<const TrialRecord*>> groups;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.sweep_value, r.model);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<AggregateRecord> out;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    AggregateRecord a;
    a.sweep_value = key.first;
    a.model = key.second;
    a.trials = static_cast<int>(g.size());
    std::vector<double> r, t, f;
    for (const auto* rec : g) {
      if (rec->status != "ok") ++a.failures;
      r.push_back(rec->e_R);
      t.push_back(rec->e_T);
      f.push_back(rec->F_angle);
    }
    a.e_R = ComputeQuartiles(r);
    a.e_T = ComputeQuartiles(t);
    a.F_angle = ComputeQuartiles(f);
    out.push_back(a);
  }
  return out;
}

/// Scene of one grid point.
inline SceneConfig ApplySweepValue(SceneConfig scene, SweepKind kind, double value) {
  switch (kind) {
    case SweepKind::kNoise:
      scene.noise_sigma = value;
      break;
    case SweepKind::kFocal:
      scene.intrinsics = IntrinsicsForFocal(value, scene.intrinsics.width,
                                            scene.intrinsics.height);
      break;
    case SweepKind::kVelocity:
      scene.linear_speed = value;
      break;
  }
  return scene;
}

namespace detail {

inline std::string StatusOf(const Error& e) { return std::string(ErrorName(e.code())); }

}  // namespace detail

/// Solves one trial with every configured solver.
inline std::vector<TrialRecord> EvaluateTrial(const SyntheticTrial& trial,
                                              const SweepConfig& cfg, double value,
                                              int index) {
  const CameraModel model = cfg.scene.model;
  const MatX F_gt = AssembleF(trial.gt);
  std::vector<TrialRecord> out;
  auto record = [&](const char* label) {
    TrialRecord r;
    r.sweep_value = value;
    r.trial = index;
    r.model = label;
    return r;
  };
  std::optional<MotionParams> linear_pose;
  if (cfg.run_linear) {
    TrialRecord r = record(kLabelLinear);
    try {
      const LinearSolution lin = SolveLinear(trial.corrs, model);
      r.F_angle = MatrixAngle(lin.F.F, F_gt);
      if (model == CameraModel::kLinearRollingShutter) {
        linear_pose = SolveTwentyPoint(trial.corrs);
        r.e_R = ErrorRotation(linear_pose->R, trial.gt.R);
        r.e_T = ErrorTranslation(linear_pose->t, trial.gt.t);
      } else if (model == CameraModel::kPerspective) {
        linear_pose = SolveEightPoint(trial.corrs);
        r.e_R = ErrorRotation(linear_pose->R, trial.gt.R);
        r.e_T = ErrorTranslation(linear_pose->t, trial.gt.t);
      }
    } catch (const Error& e) {
      r.status = detail::StatusOf(e);
    }
    out.push_back(r);
  }
  if (cfg.run_nonlinear) {
    TrialRecord g = record(kLabelGlobalShutter);
    std::optional<MotionParams> gs;
    try {
      gs = Refine(SolveEightPoint(trial.corrs), trial.corrs,
                  CameraModel::kPerspective, cfg.sampson)
               .params;
      g.e_R = ErrorRotation(gs->R, trial.gt.R);
      g.e_T = ErrorTranslation(gs->t, trial.gt.t);
    } catch (const Error& e) {
      g.status = detail::StatusOf(e);
    }
    out.push_back(g);

    TrialRecord r = record(kLabelRollingShutter);
    std::vector<MotionParams> inits;
    if (gs) inits.push_back(*gs);
    if (linear_pose && model != CameraModel::kPerspective) inits.push_back(*linear_pose);
    try {
      if (inits.empty()) throw Error(ErrorCode::kConvergenceFailed, "no initialization");
      SampsonConfig sc = cfg.sampson;
      sc.seed = TrialSeed(cfg.scene.seed, static_cast<std::uint64_t>(index));
      sc.objective_threshold = 0.0;
      const RefineResult res = RefineMultiStart(inits, trial.corrs, model, sc);
      r.e_R = ErrorRotation(res.params.R, trial.gt.R);
      r.e_T = ErrorTranslation(res.params.t, trial.gt.t);
      r.F_angle = MatrixAngle(AssembleF(res.params), F_gt);
    } catch (const Error& e) {
      r.status = detail::StatusOf(e);
    }
    out.push_back(r);
  }
  return out;
}

/// Runs `cfg.scene.trials` trials per grid value. Trial i uses the same seed
/// at every grid value.
inline ExperimentReport RunSweep(const SweepConfig& cfg) {
  if (cfg.grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty sweep grid");
  ExperimentReport report;
  report.kind = cfg.kind;
  report.scene_model = std::string(ModelName(cfg.scene.model));
  for (double value : cfg.grid) {
    const SceneConfig scene = ApplySweepValue(cfg.scene, cfg.kind, value);
    ValidateConfig(scene);
    for (int i = 0; i < scene.trials; ++i) {
      SyntheticTrial trial;
      try {
        trial = GenerateTrial(scene, static_cast<std::uint64_t>(i));
      } catch (const Error& e) {
        for (const char* label : {kLabelLinear, kLabelGlobalShutter, kLabelRollingShutter}) {
          if ((label == kLabelLinear && !cfg.run_linear) ||
              (label != kLabelLinear && !cfg.run_nonlinear))
            continue;
          TrialRecord r;
          r.sweep_value = value;
          r.trial = i;
          r.model = label;
          r.status = detail::StatusOf(e);
          report.records.push_back(r);
        }
        continue;
      }
      auto recs = EvaluateTrial(trial, cfg, value, i);
      report.records.insert(report.records.end(), recs.begin(), recs.end());
    }
  }
  report.aggregates = Aggregate(report.records);
  return report;
}

}  // namespace rsepi
