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

// JSON encodings of calibration, grid and run-config blocks, plus the named
// tensor container used for parameter checkpoints. Field names are listed in
// docs/formats.md. Doubles are written in shortest round-trip form, so a
// write/read cycle reproduces every value bit for bit.

#ifndef MVDETR_SERIALIZATION_HPP_
#define MVDETR_SERIALIZATION_HPP_

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvdetr/augmentation.hpp"
#include "mvdetr/core.hpp"
#include "mvdetr/decode_eval.hpp"
#include "mvdetr/geometry.hpp"
#include "mvdetr/losses.hpp"

namespace mvdetr {

using Json = nlohmann::json;

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline std::vector<double> get_array(const Json& j, const char* key,
                                     std::size_t n) {
  if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != n) {
    throw FormatError(std::string("field '") + key + "' needs " +
                      std::to_string(n) + " numbers");
  }
  return v;
}

}  // namespace detail

inline Json to_json(const Mat3& m) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

inline Json to_json(const CameraCalibration& c) {
  return {{"intrinsic", to_json(c.intrinsic)},
          {"rotation", to_json(c.rotation)},
          {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}},
          {"image_size", {c.image_size.height, c.image_size.width}}};
}

inline CameraCalibration calibration_from_json(const Json& j) {
  CameraCalibration c;
  const auto a = detail::get_array(j, "intrinsic", 9);
  const auto r = detail::get_array(j, "rotation", 9);
  const auto t = detail::get_array(j, "translation", 3);
  const auto s = detail::get_array(j, "image_size", 2);
  for (int i = 0; i < 9; ++i) {
    c.intrinsic(i / 3, i % 3) = a[i];
    c.rotation(i / 3, i % 3) = r[i];
  }
  c.translation = Vec3(t[0], t[1], t[2]);
  c.image_size = {static_cast<int>(s[0]), static_cast<int>(s[1])};
  c.validate();
  return c;
}

inline Json to_json(const GroundGrid& g) {
  return {{"origin", {g.origin.x, g.origin.y}},
          {"cell_size", g.cell_size},
          {"dims", {g.dims.height, g.dims.width}},
          {"downsample_r", g.downsample_r}};
}

inline GroundGrid grid_from_json(const Json& j) {
  GroundGrid g;
  const auto o = detail::get_array(j, "origin", 2);
  const auto d = detail::get_array(j, "dims", 2);
  g.origin = {o[0], o[1]};
  g.cell_size = j.at("cell_size").get<double>();
  g.dims = {static_cast<int>(d[0]), static_cast<int>(d[1])};
  g.downsample_r = detail::get_or(j, "downsample_r", 4);
  g.validate();
  return g;
}

inline Json to_json(const AugmentationConfig& a) {
  return {{"flip_prob", a.flip_prob},
          {"scale_range", {a.scale_range.lo, a.scale_range.hi}},
          {"crop_range", {a.crop_range.lo, a.crop_range.hi}},
          {"image_size", {a.image_size.height, a.image_size.width}}};
}

inline AugmentationConfig augmentation_from_json(const Json& j,
                                                 AugmentationConfig base = {}) {
  base.flip_prob = detail::get_or(j, "flip_prob", base.flip_prob);
  if (j.contains("scale_range")) {
    const auto v = detail::get_array(j, "scale_range", 2);
    base.scale_range = {v[0], v[1]};
  }
  if (j.contains("crop_range")) {
    const auto v = detail::get_array(j, "crop_range", 2);
    base.crop_range = {v[0], v[1]};
  }
  if (j.contains("image_size")) {
    const auto v = detail::get_array(j, "image_size", 2);
    base.image_size = {static_cast<int>(v[0]), static_cast<int>(v[1])};
  }
  base.validate();
  return base;
}

inline Json to_json(const LossConfig& l) {
  return {{"alpha", l.alpha},
          {"beta", l.beta},
          {"box_weight", l.box_weight},
          {"sigma_cells", l.sigma_cells}};
}

inline LossConfig loss_from_json(const Json& j, LossConfig base = {}) {
  base.alpha = detail::get_or(j, "alpha", base.alpha);
  base.beta = detail::get_or(j, "beta", base.beta);
  base.box_weight = detail::get_or(j, "box_weight", base.box_weight);
  base.sigma_cells = detail::get_or(j, "sigma_cells", base.sigma_cells);
  base.validate();
  return base;
}

inline Json to_json(const DecodeConfig& d) {
  return {{"score_thresh", d.score_thresh}, {"max_det", d.max_det}, {"window", d.window}};
}

inline DecodeConfig decode_from_json(const Json& j, DecodeConfig base = {}) {
  base.score_thresh = detail::get_or(j, "score_thresh", base.score_thresh);
  base.max_det = detail::get_or(j, "max_det", base.max_det);
  base.window = detail::get_or(j, "window", base.window);
  return base;
}

/// Calibration document: {"cameras": [...], "grid": {...}}.
struct CalibrationSet {
  std::vector<CameraCalibration> cameras;
  GroundGrid grid;
};

inline Json to_json(const CalibrationSet& s) {
  Json cams = Json::array();
  for (const auto& c : s.cameras) cams.push_back(to_json(c));
  return {{"cameras", cams}, {"grid", to_json(s.grid)}};
}

inline CalibrationSet calibration_set_from_json(const Json& j) {
  CalibrationSet s;
  if (!j.contains("cameras") || !j.at("cameras").is_array()) {
    throw FormatError("calibration document needs a 'cameras' array");
  }
  for (const auto& c : j.at("cameras")) s.cameras.push_back(calibration_from_json(c));
  if (!j.contains("grid")) throw FormatError("calibration document needs 'grid'");
  s.grid = grid_from_json(j.at("grid"));
  return s;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;  // row-major

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline constexpr const char* kCheckpointFormat = "mvdetr-checkpoint";

inline Json checkpoint_to_json(const std::vector<NamedTensor>& tensors) {
  Json ts = Json::array();
  for (const auto& t : tensors) {
    ts.push_back({{"name", t.name}, {"shape", t.shape}, {"data", t.data}});
  }
  return {{"format", kCheckpointFormat}, {"version", 1}, {"tensors", ts}};
}

inline std::vector<NamedTensor> checkpoint_from_json(const Json& j) {
  if (detail::get_or<std::string>(j, "format", "") != kCheckpointFormat) {
    throw FormatError("not a checkpoint document");
  }
  std::vector<NamedTensor> out;
  for (const auto& e : j.at("tensors")) {
    NamedTensor t{e.at("name").get<std::string>(), e.at("shape").get<std::vector<int>>(),
                  e.at("data").get<std::vector<double>>()};
    std::size_t n = 1;
    for (int s : t.shape) n *= static_cast<std::size_t>(s);
    if (n != t.data.size()) {
      throw FormatError("tensor '" + t.name + "' shape does not match data length");
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace mvdetr

#endif  // MVDETR_SERIALIZATION_HPP_
