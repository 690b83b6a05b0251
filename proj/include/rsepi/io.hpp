#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsepi/essential.hpp"
#include "rsepi/geometry.hpp"
#include "rsepi/synth.hpp"
#include "rsepi/sweep.hpp"
#include "rsepi/types.hpp"

namespace rsepi {

/// Text correspondence file. Layout:
///
///   rsepi-correspondences 1
///   model linear-rs            (optional hint)
///   intrinsics fx fy cx cy height
///   count N
///   u1 v1 u2 v2                (N rows, pixels; u is the row coordinate)
///
/// Lines starting with '#' are comments. Pixel values are kept verbatim so
/// that load/save round-trips exactly.
struct CorrespondenceFile {
  int version = 1;
  std::optional<CameraModel> model;
  double fx = 640.0, fy = 640.0, cx = 320.0, cy = 240.0;
  int height = 480;
  std::vector<std::array<double, 4>> rows;

  Intrinsics GetIntrinsics() const {
    Intrinsics k;
    k.fx = fx;
    k.fy = fy;
    k.cx = cx;
    k.cy = cy;
    k.height = height;
    k.width = static_cast<int>(std::lround(2.0 * cx));
    return k;
  }

  CorrespondenceSet Normalized() const {
    const Intrinsics k = GetIntrinsics();
    CorrespondenceSet out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      out.push_back({k.ToNormalized(r[0], r[1]), k.ToNormalized(r[2], r[3])});
    }
    return out;
  }
};

inline CorrespondenceFile MakeCorrespondenceFile(const CorrespondenceSet& corrs,
                                                 const Intrinsics& k,
                                                 std::optional<CameraModel> model) {
  CorrespondenceFile f;
  f.model = model;
  f.fx = k.fx;
  f.fy = k.fy;
  f.cx = k.cx;
  f.cy = k.cy;
  f.height = k.height;
  for (const auto& c : corrs) {
    const auto [r1, c1] = k.ToPixel(c.x1);
    const auto [r2, c2] = k.ToPixel(c.x2);
    f.rows.push_back({r1, c1, r2, c2});
  }
  return f;
}

inline void ValidateFile(const CorrespondenceFile& f) {
  if (!(f.fx > 0 && f.fy > 0 && f.height > 0)) {
    throw Error(ErrorCode::kIo, "intrinsics must be positive");
  }
  if (f.rows.empty()) throw Error(ErrorCode::kIo, "no correspondences");
}

inline void WriteCorrespondences(std::ostream& os, const CorrespondenceFile& f) {
  os << std::setprecision(17);
  os << "rsepi-correspondences " << f.version << "\n";
  if (f.model) os << "model " << ModelName(*f.model) << "\n";
  os << "intrinsics " << f.fx << " " << f.fy << " " << f.cx << " " << f.cy << " "
     << f.height << "\n";
  os << "count " << f.rows.size() << "\n";
  for (const auto& r : f.rows) {
    os << r[0] << " " << r[1] << " " << r[2] << " " << r[3] << "\n";
  }
}

inline CorrespondenceFile ReadCorrespondences(std::istream& is) {
  CorrespondenceFile f;
  std::string line;
  bool have_magic = false, have_intrinsics = false;
  long count = -1;
  auto fail = [](const std::string& what) { return Error(ErrorCode::kIo, what); };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (!have_magic) {
      std::string magic;
      ls >> magic >> f.version;
      if (magic != "rsepi-correspondences" || !ls) throw fail("missing file header");
      if (f.version != 1) throw fail("unsupported version " + std::to_string(f.version));
      have_magic = true;
      continue;
    }
    std::string key;
    ls >> key;
    if (key == "model") {
      std::string name;
      ls >> name;
      f.model = ParseModel(name);
      if (!f.model) throw fail("unknown model '" + name + "'");
    } else if (key == "intrinsics") {
      ls >> f.fx >> f.fy >> f.cx >> f.cy >> f.height;
      if (!ls) throw fail("malformed intrinsics line");
      have_intrinsics = true;
    } else if (key == "count") {
      ls >> count;
      if (!ls || count < 0) throw fail("malformed count line");
      break;
    } else {
      throw fail("unexpected header line '" + line + "'");
    }
  }
  if (!have_magic || !have_intrinsics || count < 0) throw fail("incomplete header");
  while (static_cast<long>(f.rows.size()) < count && std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::array<double, 4> r{};
    ls >> r[0] >> r[1] >> r[2] >> r[3];
    if (!ls) throw fail("malformed correspondence row '" + line + "'");
    f.rows.push_back(r);
  }
  if (static_cast<long>(f.rows.size()) != count) {
    throw fail("expected " + std::to_string(count) + " rows, read " +
               std::to_string(f.rows.size()));
  }
  ValidateFile(f);
  return f;
}

inline CorrespondenceFile LoadCorrespondences(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  return ReadCorrespondences(is);
}

inline void SaveCorrespondences(const std::string& path, const CorrespondenceFile& f) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  WriteCorrespondences(os, f);
  if (!os) throw Error(ErrorCode::kIo, "write failed for " + path);
}

using Json = nlohmann::ordered_json;

namespace detail {

inline Json VecJson(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 JsonVec(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::kIo, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

/// NaN and infinities become null.
inline Json Number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace detail

inline Json ParamsToJson(const MotionParams& p) {
  Json j;
  j["model"] = std::string(ModelName(p.model));
  Json R = Json::array();
  for (int r = 0; r < 3; ++r) R.push_back(Json::array({p.R(r, 0), p.R(r, 1), p.R(r, 2)}));
  j["R"] = R;
  j["angle_axis"] = detail::VecJson(AngleAxisFromRotation(p.R));
  j["t"] = detail::VecJson(p.t);
  j["w1"] = detail::VecJson(p.w1);
  j["w2"] = detail::VecJson(p.w2);
  j["d1"] = detail::VecJson(p.d1);
  j["d2"] = detail::VecJson(p.d2);
  return j;
}

inline MotionParams ParamsFromJson(const Json& j) {
  try {
    MotionParams p;
    const auto model = ParseModel(j.at("model").get<std::string>());
    if (!model) throw Error(ErrorCode::kIo, "unknown model in params JSON");
    p.model = *model;
    const Json& R = j.at("R");
    if (!R.is_array() || R.size() != 3) throw Error(ErrorCode::kIo, "R must be 3x3");
    for (int r = 0; r < 3; ++r) p.R.row(r) = detail::JsonVec(R[r]).transpose();
    p.t = detail::JsonVec(j.at("t"));
    if (j.contains("w1")) p.w1 = detail::JsonVec(j["w1"]);
    if (j.contains("w2")) p.w2 = detail::JsonVec(j["w2"]);
    if (j.contains("d1")) p.d1 = detail::JsonVec(j["d1"]);
    if (j.contains("d2")) p.d2 = detail::JsonVec(j["d2"]);
    return RestrictToModel(p, p.model);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed params JSON: ") + e.what());
  }
}

inline Json ReadJsonFile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, path + ": " + e.what());
  }
}

inline void WriteJsonFile(const std::string& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  os << std::setw(2) << j << "\n";
  if (!os) throw Error(ErrorCode::kIo, "write failed for " + path);
}

inline void WriteReportCsv(std::ostream& os, const ExperimentReport& report) {
  os << std::setprecision(17);
  os << "sweep_value,trial,model,e_R,e_T,F_angle,status\n";
  auto num = [&](double x) {
    if (std::isnan(x)) {
      os << "nan";
    } else {
      os << x;
    }
  };
  for (const auto& r : report.records) {
    num(r.sweep_value);
    os << "," << r.trial << "," << r.model << ",";
    num(r.e_R);
    os << ",";
    num(r.e_T);
    os << ",";
    num(r.F_angle);
    os << "," << r.status << "\n";
  }
}

inline Json ReportToJson(const ExperimentReport& report) {
  auto quart = [](const Quartiles& q) {
    return Json{{"q1", detail::Number(q.q1)},
                {"median", detail::Number(q.median)},
                {"q3", detail::Number(q.q3)}};
  };
  Json j;
  j["kind"] = std::string(SweepKindName(report.kind));
  j["scene_model"] = report.scene_model;
  j["aggregates"] = Json::array();
  for (const auto& a : report.aggregates) {
    j["aggregates"].push_back(Json{{"sweep_value", a.sweep_value},
                                   {"model", a.model},
                                   {"trials", a.trials},
                                   {"failures", a.failures},
                                   {"e_R", quart(a.e_R)},
                                   {"e_T", quart(a.e_T)},
                                   {"F_angle", quart(a.F_angle)}});
  }
  return j;
}

/// CSV of epipolar curves in pixel coordinates, one row per sample.
inline void WriteCurvesCsv(std::ostream& os, const std::vector<EpipolarCurve>& curves,
                           const Intrinsics& k) {
  os << std::setprecision(17);
  os << "curve_id,u,v,degree,source_u,source_v\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto [su, sv] = k.ToPixel(curves[i].source);
    for (const auto& p : curves[i].points) {
      const auto [u, v] = k.ToPixel(p);
      os << i << "," << u << "," << v << "," << curves[i].degree << "," << su << ","
         << sv << "\n";
    }
  }
}

}  // namespace rsepi
