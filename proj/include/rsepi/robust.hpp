#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rsepi/essential.hpp"
#include "rsepi/linear.hpp"
#include "rsepi/nonlinear.hpp"
#include "rsepi/types.hpp"

namespace rsepi {

struct RansacConfig {
  // Final inlier test on the per-point Sampson term of the fitted model
  // (squared normalized units).
  double threshold = 1e-6;
  // Inlier test for global-shutter hypotheses inside the loop. Looser than
  // `threshold` because rolling-shutter inliers do not fit a global-shutter
  // model exactly.
  double hypothesis_threshold = 1e-4;
  int max_iterations = 1000;
  double confidence = 0.999;
  std::uint64_t seed = 0;
  // Sample MinimalPointCount(model) points and solve the model itself instead
  // of using 8-point global-shutter hypotheses.
  bool model_minimal_hypotheses = false;
  // Reclassify/refine rounds after consensus.
  int max_refine_rounds = 5;
};

struct RansacResult {
  MotionParams params;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  int iterations = 0;
  // Sampson error of `params` over its inliers.
  double error = 0.0;
  // Global-shutter fit refined over the same inliers, for comparison.
  MotionParams gs_params;
  double gs_error = 0.0;
};

namespace detail {

inline CorrespondenceSet Select(std::span<const Correspondence> corrs,
                                const std::vector<bool>& mask) {
  CorrespondenceSet out;
  for (std::size_t i = 0; i < corrs.size(); ++i)
    if (mask[i]) out.push_back(corrs[i]);
  return out;
}

inline std::vector<bool> Classify(const MatX& F, CameraModel model,
                                  std::span<const Correspondence> corrs,
                                  double threshold, SampsonVariant variant) {
  std::vector<bool> mask(corrs.size(), false);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto e = PerPointSampson(F, model, corrs[i].x1, corrs[i].x2, variant);
    mask[i] = e && *e <= threshold;
  }
  return mask;
}

/// Inlier mask plus the truncated Sampson cost sum_i min(e_i, threshold),
/// which ranks hypotheses with equal support by how well they fit it.
struct Consensus {
  std::vector<bool> mask;
  double cost = 0.0;
};

inline Consensus Score(const MatX& F, CameraModel model,
                       std::span<const Correspondence> corrs, double threshold,
                       SampsonVariant variant) {
  Consensus out;
  out.mask.assign(corrs.size(), false);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto e = PerPointSampson(F, model, corrs[i].x1, corrs[i].x2, variant);
    out.mask[i] = e && *e <= threshold;
    out.cost += out.mask[i] ? *e : threshold;
  }
  return out;
}

inline std::size_t Count(const std::vector<bool>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

/// k distinct indices out of n (partial Fisher-Yates).
inline std::vector<std::size_t> SampleIndices(std::size_t n, std::size_t k,
                                              std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

inline int AdaptiveBound(double inlier_ratio, std::size_t sample,
                         double confidence, int max_iterations) {
  const double p = std::pow(inlier_ratio, static_cast<double>(sample));
  if (p >= 1.0) return 1;
  if (p <= 0.0) return max_iterations;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p);
  if (!std::isfinite(n) || n > max_iterations) return max_iterations;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

}  // namespace detail

/// Robust estimation: hypotheses on random samples, consensus by per-point
/// Sampson term, then refinement with `model` over the consensus set and
/// repeated reclassification until the inlier set is stable.
inline RansacResult Ransac(std::span<const Correspondence> corrs,
                           CameraModel model, const RansacConfig& rcfg = {},
                           const SampsonConfig& cfg = {}) {
  if (!(rcfg.threshold > 0.0) || !(rcfg.hypothesis_threshold > 0.0) ||
      !(rcfg.confidence > 0.0 && rcfg.confidence < 1.0) ||
      rcfg.max_iterations <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid RANSAC configuration");
  }
  const std::size_t sample =
      rcfg.model_minimal_hypotheses
          ? static_cast<std::size_t>(MinimalPointCount(model))
          : std::size_t{8};
  const std::size_t needed =
      std::max(sample, static_cast<std::size_t>(MinimalPointCount(model)));
  if (corrs.size() < needed) {
    throw Error(ErrorCode::kInsufficientPoints,
                "RANSAC needs at least " + std::to_string(needed) +
                    " correspondences, got " + std::to_string(corrs.size()));
  }

  std::mt19937_64 rng(rcfg.seed);
  std::vector<bool> best_mask;
  std::size_t best_count = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  int bound = rcfg.max_iterations;
  int it = 0;
  for (; it < bound; ++it) {
    const auto idx = detail::SampleIndices(corrs.size(), sample, rng);
    CorrespondenceSet subset;
    for (std::size_t i : idx) subset.push_back(corrs[i]);
    detail::Consensus hyp;
    try {
      if (rcfg.model_minimal_hypotheses) {
        SampsonConfig scfg = cfg;
        scfg.seed = cfg.seed + static_cast<std::uint64_t>(it);
        const RefineResult fit = MinimalSolve(subset, model, scfg);
        hyp = detail::Score(AssembleF(fit.params), model, corrs, rcfg.threshold,
                            cfg.variant);
      } else {
        const LinearSolution fit = SolveLinear(subset, CameraModel::kPerspective);
        hyp = detail::Score(fit.F.F, CameraModel::kPerspective, corrs,
                            rcfg.hypothesis_threshold, cfg.variant);
      }
    } catch (const Error&) {
      continue;
    }
    // Strict comparison: the earliest iteration wins ties.
    if (hyp.cost < best_cost) {
      best_cost = hyp.cost;
      const std::size_t count = detail::Count(hyp.mask);
      best_count = count;
      best_mask = std::move(hyp.mask);
      const double ratio = static_cast<double>(count) / corrs.size();
      bound = std::min(rcfg.max_iterations,
                       detail::AdaptiveBound(ratio, sample, rcfg.confidence,
                                             rcfg.max_iterations));
    }
  }
  if (best_count < 2 * sample) {
    throw Error(ErrorCode::kNoConsensus,
                "best consensus has " + std::to_string(best_count) + " of " +
                    std::to_string(corrs.size()) + " correspondences");
  }

  RansacResult out;
  out.iterations = std::min(it, bound);
  std::vector<bool> mask = best_mask;
  CorrespondenceSet consensus = detail::Select(corrs, mask);

  // The global-shutter test is loose, so the consensus can hold outliers.
  // Prune it with the model's own linear solver before any refinement.
  const std::size_t linear_sample = static_cast<std::size_t>(LinearPointCount(model));
  if (model != CameraModel::kPerspective && consensus.size() >= linear_sample) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < corrs.size(); ++i)
      if (mask[i]) members.push_back(i);
    std::vector<bool> inner_best;
    std::size_t inner_count = 0;
    double inner_cost = std::numeric_limits<double>::infinity();
    int inner_bound = rcfg.max_iterations;
    for (int k = 0; k < inner_bound; ++k) {
      const auto pick = detail::SampleIndices(members.size(), linear_sample, rng);
      CorrespondenceSet subset;
      for (std::size_t j : pick) subset.push_back(corrs[members[j]]);
      detail::Consensus hyp;
      try {
        // The 20-point chain projects the linear estimate onto valid motions;
        // other models are scored with the linear estimate itself.
        const MatX F = model == CameraModel::kLinearRollingShutter
                           ? AssembleF(SolveTwentyPoint(subset))
                           : SolveLinear(subset, model).F.F;
        hyp = detail::Score(F, model, corrs, rcfg.threshold, cfg.variant);
      } catch (const Error&) {
        continue;
      }
      if (hyp.cost < inner_cost) {
        inner_cost = hyp.cost;
        inner_count = detail::Count(hyp.mask);
        inner_best = std::move(hyp.mask);
        std::size_t within = 0;
        for (std::size_t i : members) within += inner_best[i] ? 1 : 0;
        inner_bound = detail::AdaptiveBound(
            static_cast<double>(within) / members.size(), linear_sample,
            rcfg.confidence, rcfg.max_iterations);
      }
    }
    if (inner_count >= needed && inner_count >= 8) {
      mask = std::move(inner_best);
      consensus = detail::Select(corrs, mask);
    }
  }

  // Global-shutter pose of the consensus set seeds the model refinement. On
  // strongly distorted data its decomposition can fail; other seeds remain.
  std::optional<MotionParams> gs;
  try {
    gs = Refine(SolveEightPoint(consensus), consensus, CameraModel::kPerspective, cfg).params;
  } catch (const Error&) {
    if (model == CameraModel::kPerspective) throw;
  }
  std::vector<MotionParams> inits;
  if (gs) inits.push_back(*gs);
  if (model == CameraModel::kLinearRollingShutter &&
      static_cast<int>(consensus.size()) >= LinearPointCount(model)) {
    try {
      inits.push_back(SolveTwentyPoint(consensus));
    } catch (const Error&) {
    }
  }
  SampsonConfig mcfg = cfg;
  // Stop early only on an exact fit.
  mcfg.objective_threshold = 1e-20 * static_cast<double>(consensus.size());
  if (inits.empty()) {
    throw Error(ErrorCode::kCheiralityAmbiguous, "no usable initial pose for refinement");
  }
  MotionParams params =
      model == CameraModel::kPerspective
          ? *gs
          : RefineMultiStart(inits, consensus, model, mcfg).params;

  for (int round = 0; round < rcfg.max_refine_rounds; ++round) {
    std::vector<bool> next = detail::Classify(AssembleF(params), model, corrs,
                                              rcfg.threshold, cfg.variant);
    if (detail::Count(next) < needed || next == mask) break;
    mask = std::move(next);
    consensus = detail::Select(corrs, mask);
    params = Refine(params, consensus, model, cfg).params;
  }
  // Final classification against the returned parameters.
  mask = detail::Classify(AssembleF(params), model, corrs, rcfg.threshold,
                          cfg.variant);
  consensus = detail::Select(corrs, mask);
  if (consensus.size() < needed) {
    throw Error(ErrorCode::kNoConsensus, "refined model keeps too few inliers");
  }

  out.params = params;
  out.inliers = mask;
  out.inlier_count = detail::Count(mask);
  out.error = SampsonObjective(params, consensus, cfg.variant);
  // Global-shutter comparison fit; falls back to the model's pose without
  // velocities when the 8-point decomposition is unusable.
  auto gs_fallback = [&] {
    return gs ? *gs
              : Refine(RestrictToModel(params, CameraModel::kPerspective), consensus,
                       CameraModel::kPerspective, cfg)
                    .params;
  };
  if (out.inlier_count >= 8) {
    try {
      out.gs_params = Refine(SolveEightPoint(consensus), consensus,
                             CameraModel::kPerspective, cfg)
                          .params;
    } catch (const Error&) {
      out.gs_params = gs_fallback();
    }
  } else {
    out.gs_params = gs_fallback();
  }
  out.gs_error = SampsonObjective(out.gs_params, consensus, cfg.variant);
  return out;
}

}  // namespace rsepi
