// Command-line front-end: synthetic data, solvers, sweeps, curves, audits.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rsepi/rsepi.hpp"

namespace {

using rsepi::CameraModel;
using rsepi::Error;
using rsepi::ErrorCode;
using rsepi::Json;

enum ExitCode {
  kOk = 0,
  kUsage = 2,
  kIoError = 3,
  kInsufficientPoints = 10,
  kDegenerate = 11,
  kNoConsensus = 12,
  kSolverError = 13,
};

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return kIoError;
    case ErrorCode::kInvalidArgument: return kUsage;
    case ErrorCode::kInsufficientPoints: return kInsufficientPoints;
    case ErrorCode::kDegenerateConfiguration: return kDegenerate;
    case ErrorCode::kNoConsensus: return kNoConsensus;
    default: return kSolverError;
  }
}

void Log(const std::string& msg) { std::clog << "[rsepi] " << msg << "\n"; }

CameraModel RequireModel(const std::string& name) {
  const auto m = rsepi::ParseModel(name);
  if (!m) throw Error(ErrorCode::kInvalidArgument, "unknown model '" + name + "'");
  return *m;
}

rsepi::SampsonVariant RequireVariant(const std::string& name) {
  if (name == "lifted") return rsepi::SampsonVariant::kLifted;
  if (name == "jacobian-exact") return rsepi::SampsonVariant::kJacobianExact;
  throw Error(ErrorCode::kInvalidArgument, "unknown Sampson variant '" + name + "'");
}

std::vector<double> ParseGrid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad grid value '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "empty grid");
  return out;
}

struct SceneOptions {
  std::string model = "linear-rs";
  int points = 100;
  double noise = 0.0;
  double focal = 640.0;
  int width = 640;
  int height = 480;
  double linear_speed = 1e-3;
  double angular_speed = 1e-4;
  double max_rotation = 0.5;
  double depth_min = 3.0;
  double depth_max = 8.0;
  std::string rotation_mode = "exact";
  std::uint64_t seed = 1;
  int trials = 200;

  void Register(CLI::App* app, bool with_trials) {
    app->add_option("--model", model, "Camera model of the generated data")
        ->check(CLI::IsMember({"perspective", "linear-pb", "linear-rs",
                               "uniform-pb", "uniform-rs"}));
    app->add_option("--points", points, "Correspondences per trial");
    app->add_option("--noise", noise, "Noise sigma in normalized coordinates");
    app->add_option("--focal", focal, "Focal length in pixels");
    app->add_option("--width", width, "Image width in pixels");
    app->add_option("--height", height, "Image height in pixels");
    app->add_option("--linear-speed", linear_speed, "Translation rate per pixel row");
    app->add_option("--angular-speed", angular_speed, "Rotation rate (rad) per pixel row");
    app->add_option("--max-rotation", max_rotation, "Largest relative rotation (rad)");
    app->add_option("--depth-min", depth_min, "Nearest point depth");
    app->add_option("--depth-max", depth_max, "Farthest point depth");
    app->add_option("--rotation-mode", rotation_mode, "exact or small")
        ->check(CLI::IsMember({"exact", "small"}));
    app->add_option("--seed", seed, "Random seed");
    if (with_trials) app->add_option("--trials", trials, "Trials per grid value");
  }

  rsepi::SceneConfig Build() const {
    rsepi::SceneConfig c;
    c.model = RequireModel(model);
    c.intrinsics = rsepi::IntrinsicsForFocal(focal, width, height);
    c.num_points = points;
    c.noise_sigma = noise;
    c.linear_speed = linear_speed;
    c.angular_speed = angular_speed;
    c.max_rotation = max_rotation;
    c.depth_min = depth_min;
    c.depth_max = depth_max;
    c.rotation_mode = rotation_mode == "small" ? rsepi::RotationMode::kSmall
                                               : rsepi::RotationMode::kExact;
    c.seed = seed;
    c.trials = trials;
    rsepi::ValidateConfig(c);
    return c;
  }
};

// ---- synth ----------------------------------------------------------------

struct SynthOptions {
  SceneOptions scene;
  std::string out;
  std::string gt;
};

int RunSynth(const SynthOptions& o) {
  const rsepi::SceneConfig cfg = o.scene.Build();
  const rsepi::SyntheticTrial trial = rsepi::Generate(cfg);
  const auto file = rsepi::MakeCorrespondenceFile(trial.corrs, cfg.intrinsics, cfg.model);
  rsepi::SaveCorrespondences(o.out, file);
  if (!o.gt.empty()) {
    Json j = rsepi::ParamsToJson(trial.gt);
    rsepi::WriteJsonFile(o.gt, Json{{"params", j}});
  }
  Log("wrote " + std::to_string(trial.corrs.size()) + " " +
      std::string(rsepi::ModelName(cfg.model)) + " correspondences to " + o.out);
  return kOk;
}

// ---- solve ----------------------------------------------------------------

struct SolveOptions {
  std::string input;
  std::string model;
  std::string chain = "linear";
  bool no_refine = false;
  std::string sampson = "jacobian-exact";
  double threshold = 1e-6;
  double hypothesis_threshold = 1e-4;
  int iterations = 1000;
  double confidence = 0.999;
  std::uint64_t seed = 0;
  int max_iterations = 200;
  std::string out;
  std::string gt;
};

Json ResidualStats(const rsepi::MotionParams& p, const rsepi::CorrespondenceSet& corrs,
                   rsepi::SampsonVariant variant) {
  const rsepi::MatX F = rsepi::AssembleF(p);
  std::vector<double> terms;
  double algebraic = 0.0;
  std::size_t skipped = 0;
  for (const auto& c : corrs) {
    const auto e = rsepi::PerPointSampson(F, p.model, c.x1, c.x2, variant);
    if (e) {
      terms.push_back(*e);
    } else {
      ++skipped;
    }
    const double r = rsepi::Residual({p.model, F}, c.x1, c.x2);
    algebraic += r * r;
  }
  double total = 0.0;
  for (double t : terms) total += t;
  const auto q = rsepi::ComputeQuartiles(terms);
  const double max = terms.empty() ? 0.0 : *std::max_element(terms.begin(), terms.end());
  return Json{{"points", corrs.size()},
              {"sampson_total", total},
              {"sampson_median", rsepi::detail::Number(q.median)},
              {"sampson_max", max},
              {"skipped", skipped},
              {"algebraic_rms",
               corrs.empty() ? 0.0 : std::sqrt(algebraic / static_cast<double>(corrs.size()))}};
}

int RunSolve(const SolveOptions& o) {
  const auto file = rsepi::LoadCorrespondences(o.input);
  CameraModel model;
  if (!o.model.empty()) {
    model = RequireModel(o.model);
  } else if (file.model) {
    model = *file.model;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "no --model given and the file has no model hint");
  }
  const rsepi::CorrespondenceSet corrs = file.Normalized();
  rsepi::SampsonConfig scfg;
  scfg.variant = RequireVariant(o.sampson);
  scfg.seed = o.seed;
  scfg.max_iterations = o.max_iterations;

  Json out;
  rsepi::MotionParams params;
  std::optional<std::vector<bool>> inliers;
  std::string algorithm;

  if (o.chain == "linear") {
    const int n = rsepi::LinearPointCount(model);
    algorithm = std::to_string(n) + "-point linear";
    Log("model " + std::string(rsepi::ModelName(model)) + ", " +
        std::to_string(corrs.size()) + " points, algorithm " + algorithm);
    switch (model) {
      case CameraModel::kPerspective:
        params = rsepi::SolveEightPoint(corrs);
        break;
      case CameraModel::kLinearRollingShutter:
        try {
          params = rsepi::SolveTwentyPoint(corrs);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNearZeroVelocity) throw;
          Log("velocity blocks vanish; falling back to the 8-point global-shutter "
              "solution with zero velocities");
          params = rsepi::RestrictToModel(rsepi::SolveEightPoint(corrs), model);
        }
        break;
      default: {
        // No closed-form motion extraction for these models: the linear
        // estimate is reported, the motion comes from refinement.
        const auto lin = rsepi::SolveLinear(corrs, model);
        out["linear_residual_ratio"] = lin.residual_ratio;
        Log("motion for " + std::string(rsepi::ModelName(model)) +
            " is obtained by refinement from the 8-point initialization");
        params = rsepi::RefineMultiStart(
                     std::vector<rsepi::MotionParams>{rsepi::SolveEightPoint(corrs)},
                     corrs, model, scfg)
                     .params;
        break;
      }
    }
    if (!o.no_refine) {
      params = rsepi::Refine(params, corrs, model, scfg).params;
      algorithm += " + refine";
    }
  } else if (o.chain == "minimal") {
    algorithm = "minimal multi-start";
    Log("model " + std::string(rsepi::ModelName(model)) + ", " +
        std::to_string(corrs.size()) + " points, algorithm " + algorithm);
    params = rsepi::MinimalSolve(corrs, model, scfg).params;
  } else if (o.chain == "ransac") {
    algorithm = "ransac + refine";
    Log("model " + std::string(rsepi::ModelName(model)) + ", " +
        std::to_string(corrs.size()) + " points, algorithm " + algorithm);
    rsepi::RansacConfig rcfg;
    rcfg.threshold = o.threshold;
    rcfg.hypothesis_threshold = o.hypothesis_threshold;
    rcfg.max_iterations = o.iterations;
    rcfg.confidence = o.confidence;
    rcfg.seed = o.seed;
    const auto res = rsepi::Ransac(corrs, model, rcfg, scfg);
    params = res.params;
    inliers = res.inliers;
    out["ransac"] = Json{{"iterations", res.iterations},
                         {"inlier_count", res.inlier_count},
                         {"error", res.error},
                         {"gs_error", res.gs_error}};
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown chain '" + o.chain + "'");
  }

  params = rsepi::GaugeFixed(params);
  out["model"] = std::string(rsepi::ModelName(model));
  out["algorithm"] = algorithm;
  out["params"] = rsepi::ParamsToJson(params);
  rsepi::CorrespondenceSet used = corrs;
  if (inliers) {
    used.clear();
    for (std::size_t i = 0; i < corrs.size(); ++i)
      if ((*inliers)[i]) used.push_back(corrs[i]);
    out["inliers"] = *inliers;
  }
  out["residuals"] = ResidualStats(params, used, scfg.variant);
  if (!o.gt.empty()) {
    const Json g = rsepi::ReadJsonFile(o.gt);
    const rsepi::MotionParams gt = rsepi::ParamsFromJson(g.contains("params") ? g["params"] : g);
    out["errors"] = Json{{"e_R", rsepi::ErrorRotation(params.R, gt.R)},
                         {"e_T", rsepi::ErrorTranslation(params.t, gt.t)},
                         {"e_T_signed", rsepi::ErrorTranslationSigned(params.t, gt.t)}};
  }
  if (o.out.empty()) {
    std::cout << std::setw(2) << out << "\n";
  } else {
    rsepi::WriteJsonFile(o.out, out);
  }
  return kOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepOptions {
  SceneOptions scene;
  std::string kind = "noise";
  std::string grid;
  bool no_linear = false;
  bool no_nonlinear = false;
  std::string sampson = "jacobian-exact";
  std::string csv;
  std::string json;
};

int RunSweepCmd(const SweepOptions& o) {
  rsepi::SweepConfig cfg;
  const auto kind = rsepi::ParseSweepKind(o.kind);
  if (!kind) throw Error(ErrorCode::kInvalidArgument, "unknown sweep kind '" + o.kind + "'");
  cfg.kind = *kind;
  cfg.grid = ParseGrid(o.grid);
  cfg.scene = o.scene.Build();
  cfg.run_linear = !o.no_linear;
  cfg.run_nonlinear = !o.no_nonlinear;
  cfg.sampson.variant = RequireVariant(o.sampson);
  Log(std::string(rsepi::SweepKindName(cfg.kind)) + " sweep over " +
      std::to_string(cfg.grid.size()) + " values, " + std::to_string(cfg.scene.trials) +
      " trials each, model " + std::string(rsepi::ModelName(cfg.scene.model)));
  const auto report = rsepi::RunSweep(cfg);
  if (!o.csv.empty()) {
    std::ofstream os(o.csv);
    if (!os) throw Error(ErrorCode::kIo, "cannot write " + o.csv);
    rsepi::WriteReportCsv(os, report);
  }
  const Json j = rsepi::ReportToJson(report);
  if (!o.json.empty()) {
    rsepi::WriteJsonFile(o.json, j);
  } else if (o.csv.empty()) {
    std::cout << std::setw(2) << j << "\n";
  }
  return kOk;
}

// ---- curves ---------------------------------------------------------------

struct CurvesOptions {
  std::string params;
  std::string points;
  int samples = 200;
  std::string out;
};

int RunCurves(const CurvesOptions& o) {
  const Json pj = rsepi::ReadJsonFile(o.params);
  const rsepi::MotionParams p = rsepi::ParamsFromJson(pj.contains("params") ? pj["params"] : pj);
  const auto file = rsepi::LoadCorrespondences(o.points);
  const rsepi::Intrinsics k = file.GetIntrinsics();
  const rsepi::GeneralizedEssential F = rsepi::BuildEssential(p);
  std::vector<rsepi::EpipolarCurve> curves;
  std::size_t total = 0;
  for (const auto& c : file.Normalized()) {
    curves.push_back(rsepi::SampleEpipolarCurve(F, c.x1, k.NormalizedBounds(), o.samples));
    total += curves.back().points.size();
  }
  if (total == 0) Log("warning: no epipolar curve intersects the image bounds");
  Log("sampled " + std::to_string(curves.size()) + " curves of degree " +
      std::to_string(rsepi::CurveDegree(p.model)) + " for " +
      std::string(rsepi::ModelName(p.model)));
  if (o.out.empty()) {
    rsepi::WriteCurvesCsv(std::cout, curves, k);
  } else {
    std::ofstream os(o.out);
    if (!os) throw Error(ErrorCode::kIo, "cannot write " + o.out);
    rsepi::WriteCurvesCsv(os, curves, k);
  }
  return kOk;
}

// ---- audit ----------------------------------------------------------------

struct AuditOptions {
  std::string input;
  std::string params;
};

int RunAudit(const AuditOptions& o) {
  const auto file = rsepi::LoadCorrespondences(o.input);
  const Json pj = rsepi::ReadJsonFile(o.params);
  const rsepi::MotionParams p = rsepi::ParamsFromJson(pj.contains("params") ? pj["params"] : pj);
  const auto corrs = file.Normalized();
  const std::size_t front = rsepi::CountInFront(p, corrs, rsepi::RotationMode::kExact);
  const Json out{{"model", std::string(rsepi::ModelName(p.model))},
                 {"points", corrs.size()},
                 {"cheirality_pass", front},
                 {"cheirality_fraction",
                  static_cast<double>(front) / static_cast<double>(corrs.size())},
                 {"residuals", ResidualStats(p, corrs, rsepi::SampsonVariant::kLifted)}};
  std::cout << std::setw(2) << out << "\n";
  return kOk;
}

void ReportError(const std::string& name, const std::string& message, int code) {
  std::cerr << Json{{"error", name}, {"message", message}, {"exit_code", code}}.dump()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative pose for rolling-shutter and push-broom cameras"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic correspondence file");
  synth.scene.Register(synth_cmd, false);
  synth_cmd->add_option("--out", synth.out, "Correspondence file to write")->required();
  synth_cmd->add_option("--gt", synth.gt, "Ground-truth params JSON to write");

  SolveOptions solve;
  auto* solve_cmd = app.add_subcommand("solve", "Estimate relative motion from a file");
  solve_cmd->add_option("--input", solve.input, "Correspondence file")->required();
  solve_cmd->add_option("--model", solve.model, "Camera model (default: file hint)");
  solve_cmd->add_option("--chain", solve.chain, "linear, minimal or ransac")
      ->check(CLI::IsMember({"linear", "minimal", "ransac"}));
  solve_cmd->add_flag("--no-refine", solve.no_refine, "Skip refinement after the linear solver");
  solve_cmd->add_option("--sampson", solve.sampson, "lifted or jacobian-exact")
      ->check(CLI::IsMember({"lifted", "jacobian-exact"}));
  solve_cmd->add_option("--threshold", solve.threshold, "Inlier threshold (Sampson units)");
  solve_cmd->add_option("--hypothesis-threshold", solve.hypothesis_threshold,
                        "Inlier threshold for global-shutter hypotheses");
  solve_cmd->add_option("--iterations", solve.iterations, "RANSAC iteration cap");
  solve_cmd->add_option("--confidence", solve.confidence, "RANSAC confidence");
  solve_cmd->add_option("--seed", solve.seed, "Random seed");
  solve_cmd->add_option("--max-iterations", solve.max_iterations, "Refinement iteration cap");
  solve_cmd->add_option("--out", solve.out, "Result JSON (default: stdout)");
  solve_cmd->add_option("--gt", solve.gt, "Ground-truth params JSON for error metrics");

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a synthetic sweep experiment");
  sweep.scene.Register(sweep_cmd, true);
  sweep_cmd->add_option("--kind", sweep.kind, "noise, focal or velocity")
      ->check(CLI::IsMember({"noise", "focal", "velocity"}));
  sweep_cmd->add_option("--grid", sweep.grid, "Comma-separated sweep values")->required();
  sweep_cmd->add_flag("--no-linear", sweep.no_linear, "Skip the linear solver");
  sweep_cmd->add_flag("--no-nonlinear", sweep.no_nonlinear, "Skip the nonlinear fits");
  sweep_cmd->add_option("--sampson", sweep.sampson, "lifted or jacobian-exact")
      ->check(CLI::IsMember({"lifted", "jacobian-exact"}));
  sweep_cmd->add_option("--csv", sweep.csv, "Per-trial CSV output");
  sweep_cmd->add_option("--json", sweep.json, "Aggregate JSON output");

  CurvesOptions curves;
  auto* curves_cmd = app.add_subcommand("curves", "Sample epipolar curves for plotting");
  curves_cmd->add_option("--params", curves.params, "Params JSON")->required();
  curves_cmd->add_option("--points", curves.points, "Correspondence file (first-image points)")
      ->required();
  curves_cmd->add_option("--samples", curves.samples, "Samples per curve");
  curves_cmd->add_option("--out", curves.out, "CSV output (default: stdout)");

  AuditOptions audit;
  auto* audit_cmd = app.add_subcommand("audit", "Check cheirality and residuals of a file");
  audit_cmd->add_option("--input", audit.input, "Correspondence file")->required();
  audit_cmd->add_option("--params", audit.params, "Params JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    ReportError("Usage", e.what(), kUsage);
    return kUsage;
  }

  try {
    if (synth_cmd->parsed()) return RunSynth(synth);
    if (solve_cmd->parsed()) return RunSolve(solve);
    if (sweep_cmd->parsed()) return RunSweepCmd(sweep);
    if (curves_cmd->parsed()) return RunCurves(curves);
    if (audit_cmd->parsed()) return RunAudit(audit);
  } catch (const Error& e) {
    const int code = ExitCodeFor(e.code());
    ReportError(std::string(rsepi::ErrorName(e.code())), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    ReportError("Internal", e.what(), kSolverError);
    return kSolverError;
  }
  return kUsage;
}
