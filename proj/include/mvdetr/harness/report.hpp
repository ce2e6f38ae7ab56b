/* Copyright 2026 The MVDeTr Toolkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Run reports (JSON) and PGM heatmap dumps.

#ifndef MVDETR_HARNESS_REPORT_HPP_
#define MVDETR_HARNESS_REPORT_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include "mvdetr/decode_eval.hpp"
#include "mvdetr/harness/gradcheck.hpp"
#include "mvdetr/harness/pipeline.hpp"
#include "mvdetr/harness/scene.hpp"
#include "mvdetr/serialization.hpp"

namespace mvdetr::harness {

/// A report is a JSON object. Wall-clock numbers and the thread count live
/// under "timings" only, so two runs with the same seed differ in nothing else.
struct RunReport {
  Json doc = Json::object();

  explicit RunReport(const std::string& command) { doc["command"] = command; }

  void timing(const std::string& key, double seconds) { doc["timings"][key] = seconds; }
  void timings(const std::map<std::string, double>& t) {
    for (const auto& [k, v] : t) timing(k, v);
  }
  Json& operator[](const std::string& key) { return doc[key]; }

  Json without_timings() const {
    Json j = doc;
    j.erase("timings");
    return j;
  }
};

/// True when every number in `j` is finite.
inline bool all_finite(const Json& j) {
  if (j.is_number_float()) return std::isfinite(j.get<double>());
  if (j.is_structured()) {
    for (const auto& v : j) {
      if (!all_finite(v)) return false;
    }
  }
  return true;
}

inline Json to_json(const EvalReport& r) {
  return {{"moda", r.moda},           {"modp", r.modp}, {"precision", r.precision},
          {"recall", r.recall},       {"tp", r.tp},     {"fp", r.fp},
          {"fn", r.fn},               {"num_gt", r.num_gt}};
}

inline Json to_json(const GradcheckResult& g) {
  Json errs = Json::object();
  for (const auto& [k, v] : g.max_rel_error) errs[k] = v;
  return {{"max_rel_error", errs},
          {"worst", g.worst()},
          {"zero_upstream_max_abs", g.zero_upstream_max_abs},
          {"instances", g.instances}};
}

inline Json to_json(const std::vector<Detection>& dets) {
  Json a = Json::array();
  for (const auto& d : dets) a.push_back({d.position.x, d.position.y, d.score});
  return a;
}

inline Json to_json(const PipelineResult& r) {
  Json j = {{"eval", to_json(r.eval)},
            {"detections", to_json(r.detections)},
            {"num_detections", r.detections.size()}};
  j["loss"] = r.loss ? to_json(*r.loss) : Json(nullptr);
  return j;
}

inline Json to_json(const FitResult& r) {
  return {{"loss_log", r.loss_log},
          {"updates", r.updates},
          {"initial", to_json(r.initial)},
          {"final", to_json(r.final)},
          {"loss_ratio", r.loss_log.front() > 0.0 ? r.loss_log.back() / r.loss_log.front() : 0.0},
          {"eval", to_json(r.eval)}};
}

inline Json to_json(const CoherenceResult& r) {
  Json fails = Json::array();
  for (const auto& f : r.failures) {
    fails.push_back({{"camera", f.camera},
                     {"pedestrian", f.pedestrian},
                     {"expected", {f.expected.row, f.expected.col}},
                     {"observed", {f.observed.row, f.observed.col}}});
  }
  return {{"checked", r.checked}, {"passed", r.passed}, {"failures", fails}};
}

inline Json to_json(const SceneSpec& s) {
  Json cams = Json::array();
  for (const auto& c : s.calibrations) cams.push_back(mvdetr::to_json(c));
  return {{"cameras", s.num_cameras()},
          {"calibrations", cams},
          {"grid", mvdetr::to_json(s.grid)},
          {"pedestrians", s.pedestrians},
          {"min_separation", s.min_separation},
          {"edge_margin", s.edge_margin},
          {"person_height", s.person_height},
          {"person_width", s.person_width},
          {"image_size", {s.image_size.height, s.image_size.width}},
          {"feature_stride", s.feature_stride},
          {"feature_channels", s.feature_channels},
          {"recipe", s.recipe == FeatureRecipe::kImpulse ? "impulse" : "gaussian_blob"},
          {"blob_radius", s.blob_radius},
          {"ring_distance", s.ring_distance},
          {"camera_height", s.camera_height}};
}

inline SceneSpec scene_spec_from_json(const Json& j, SceneSpec base = {}) {
  using mvdetr::detail::get_or;
  base.cameras = get_or(j, "cameras", base.cameras);
  if (j.contains("calibrations")) {
    base.calibrations.clear();
    for (const auto& c : j.at("calibrations")) base.calibrations.push_back(calibration_from_json(c));
  }
  if (j.contains("grid")) base.grid = grid_from_json(j.at("grid"));
  base.pedestrians = get_or(j, "pedestrians", base.pedestrians);
  base.min_separation = get_or(j, "min_separation", base.min_separation);
  base.edge_margin = get_or(j, "edge_margin", base.edge_margin);
  base.person_height = get_or(j, "person_height", base.person_height);
  base.person_width = get_or(j, "person_width", base.person_width);
  if (j.contains("image_size")) {
    const auto v = mvdetr::detail::get_array(j, "image_size", 2);
    base.image_size = {static_cast<int>(v[0]), static_cast<int>(v[1])};
  }
  base.feature_stride = get_or(j, "feature_stride", base.feature_stride);
  base.feature_channels = get_or(j, "feature_channels", base.feature_channels);
  if (j.contains("recipe")) {
    const auto r = j.at("recipe").get<std::string>();
    if (r == "impulse") {
      base.recipe = FeatureRecipe::kImpulse;
    } else if (r == "gaussian_blob") {
      base.recipe = FeatureRecipe::kGaussianBlob;
    } else {
      throw InvalidConfig("unknown feature recipe '" + r + "'");
    }
  }
  base.blob_radius = get_or(j, "blob_radius", base.blob_radius);
  base.ring_distance = get_or(j, "ring_distance", base.ring_distance);
  base.camera_height = get_or(j, "camera_height", base.camera_height);
  base.validate();
  return base;
}

/// Binary greyscale PGM of one channel, linearly scaled from [lo, hi] to
/// [0, 255]. With lo == hi the range is taken from the data.
inline void write_pgm(const std::string& path, const FeatureMap& map, int channel = 0,
                      double lo = 0.0, double hi = 0.0) {
  if (lo == hi) {
    lo = 1e300;
    hi = -1e300;
    for (int y = 0; y < map.height(); ++y) {
      for (int x = 0; x < map.width(); ++x) {
        lo = std::min(lo, map.at(channel, y, x));
        hi = std::max(hi, map.at(channel, y, x));
      }
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const double v = std::clamp((map.at(channel, y, x) - lo) / span, 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

}  // namespace mvdetr::harness

#endif  // MVDETR_HARNESS_REPORT_HPP_
