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

// Harness configuration file. Every block is optional; missing fields keep
// their defaults.
//
//   {
//     "scene":        {...},   // SceneSpec, used by project/augcheck/pipeline
//     "model":        {...},   // d_model, heads, points, layers, ffn_multiple
//     "augmentation": {...},
//     "loss":         {...},
//     "decode":       {...},
//     "head":         "oracle" | "model",
//     "checkpoint":   "path",  // model weights for pipeline with head=model
//     "fit":          {"steps": 200, "lr": 0.01, "scene": {...}},
//     "gradcheck":    {"height", "width", "d_model", "heads", "points",
//                      "cameras", "instances", "step", "margin"},
//     "augcheck":     {"scenes": 50}
//   }

#ifndef MVDETR_HARNESS_CONFIG_HPP_
#define MVDETR_HARNESS_CONFIG_HPP_

#include <optional>
#include <string>

#include "mvdetr/harness/gradcheck.hpp"
#include "mvdetr/harness/model.hpp"
#include "mvdetr/harness/pipeline.hpp"
#include "mvdetr/harness/report.hpp"
#include "mvdetr/harness/scene.hpp"
#include "mvdetr/serialization.hpp"

namespace mvdetr::harness {

struct HarnessConfig {
  SceneSpec scene;
  SceneSpec fit_scene = fit_scene_spec();
  std::optional<Json> model;  // raw block; cameras come from the scene
  AugmentationConfig augmentation;
  LossConfig loss;
  DecodeConfig decode;
  HeadMode head = HeadMode::kOracle;
  std::string checkpoint;
  int fit_steps = 200;
  double fit_lr = 0.01;
  GradcheckSizes gradcheck;
  int augcheck_scenes = 50;

  /// Model shape for a scene with `cameras` views and `channels` features.
  ModelConfig model_for(int cameras, int channels) const {
    ModelConfig c = small_model_config(cameras, channels);
    if (model) {
      Json m = *model;
      m["cameras"] = cameras;
      c = model_config_from_json(m, c);
    }
    return c;
  }
};

inline HarnessConfig harness_config_from_json(const Json& j) {
  using mvdetr::detail::get_or;
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  HarnessConfig c;
  if (j.contains("scene")) c.scene = scene_spec_from_json(j.at("scene"));
  if (j.contains("model")) c.model = j.at("model");
  if (j.contains("augmentation")) c.augmentation = augmentation_from_json(j.at("augmentation"));
  if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"));
  if (j.contains("decode")) c.decode = decode_from_json(j.at("decode"));
  if (j.contains("head")) {
    const auto h = j.at("head").get<std::string>();
    if (h == "oracle") {
      c.head = HeadMode::kOracle;
    } else if (h == "model") {
      c.head = HeadMode::kModel;
    } else {
      throw InvalidConfig("head must be 'oracle' or 'model', got '" + h + "'");
    }
  }
  c.checkpoint = get_or<std::string>(j, "checkpoint", "");
  if (j.contains("fit")) {
    const Json& f = j.at("fit");
    c.fit_steps = get_or(f, "steps", c.fit_steps);
    c.fit_lr = get_or(f, "lr", c.fit_lr);
    if (f.contains("scene")) c.fit_scene = scene_spec_from_json(f.at("scene"), fit_scene_spec());
  }
  if (j.contains("gradcheck")) {
    const Json& g = j.at("gradcheck");
    GradcheckSizes& s = c.gradcheck;
    s.height = get_or(g, "height", s.height);
    s.width = get_or(g, "width", s.width);
    s.shape.d_model = get_or(g, "d_model", s.shape.d_model);
    s.shape.heads = get_or(g, "heads", s.shape.heads);
    s.shape.points = get_or(g, "points", s.shape.points);
    s.shape.cameras = get_or(g, "cameras", s.shape.cameras);
    s.instances = get_or(g, "instances", s.instances);
    s.step = get_or(g, "step", s.step);
    s.margin = get_or(g, "margin", s.margin);
    s.validate();
  }
  if (j.contains("augcheck")) {
    c.augcheck_scenes = get_or(j.at("augcheck"), "scenes", c.augcheck_scenes);
    if (c.augcheck_scenes < 1) throw InvalidConfig("augcheck needs at least one scene");
  }
  return c;
}

inline Json to_json(const GradcheckSizes& s) {
  return {{"height", s.height},       {"width", s.width},
          {"d_model", s.shape.d_model}, {"heads", s.shape.heads},
          {"points", s.shape.points},   {"cameras", s.shape.cameras},
          {"instances", s.instances},   {"step", s.step},
          {"margin", s.margin}};
}

/// Config echo for reports. The augmentation image size echoed is the scene's,
/// which is what the harness uses.
inline Json to_json(const HarnessConfig& c) {
  AugmentationConfig aug = c.augmentation;
  aug.image_size = c.scene.image_size;
  Json j = {{"scene", to_json(c.scene)},
            {"augmentation", mvdetr::to_json(aug)},
            {"loss", mvdetr::to_json(c.loss)},
            {"decode", mvdetr::to_json(c.decode)},
            {"head", c.head == HeadMode::kOracle ? "oracle" : "model"},
            {"checkpoint", c.checkpoint},
            {"fit", {{"steps", c.fit_steps}, {"lr", c.fit_lr}, {"scene", to_json(c.fit_scene)}}},
            {"gradcheck", to_json(c.gradcheck)},
            {"augcheck", {{"scenes", c.augcheck_scenes}}}};
  j["model"] = to_json(c.model_for(c.scene.num_cameras(), c.scene.feature_channels));
  return j;
}

}  // namespace mvdetr::harness

#endif  // MVDETR_HARNESS_CONFIG_HPP_
