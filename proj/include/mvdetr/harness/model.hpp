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

// Parameters of the detector head that sits on top of the oracle features:
// shadow transformer, across-view aggregation, ground heads and a shared
// per-view head. Tensors are enumerated by name for updates and checkpoints.

#ifndef MVDETR_HARNESS_MODEL_HPP_
#define MVDETR_HARNESS_MODEL_HPP_

#include <functional>
#include <string>
#include <vector>

#include "mvdetr/encoder.hpp"
#include "mvdetr/serialization.hpp"

namespace mvdetr::harness {

struct ModelConfig {
  AttentionShape shape;  // shape.cameras must match the scene
  int layers = 3;
  int ffn_multiple = 4;

  void validate() const {
    shape.validate();
    if (layers < 0) throw InvalidConfig("layers must be >= 0");
    if (ffn_multiple < 1) throw InvalidConfig("ffn_multiple must be >= 1");
  }
};

/// Desk-scale head: width equals the oracle feature channels.
inline ModelConfig small_model_config(int cameras, int channels = 8) {
  ModelConfig c;
  c.shape = {channels, 2, 2, cameras};
  return c;
}

/// out = weight * in + bias, applied per pixel.
struct AffineHead {
  MatrixXd weight;
  VectorXd bias;

  static AffineHead init(int out, int in, Rng& rng) {
    AffineHead h{MatrixXd::Zero(out, in), VectorXd::Zero(out)};
    const double lim = std::sqrt(6.0 / (in + out));
    for (Eigen::Index i = 0; i < h.weight.size(); ++i) h.weight.data()[i] = rng.uniform(-lim, lim);
    return h;
  }
};

inline constexpr int kViewHeadChannels = 5;  // score, off_row, off_col, h, w

// Score logits start at sigmoid^-1(0.1).
inline constexpr double kScorePriorBias = -2.19;

struct ModelParams {
  ModelConfig config;
  ShadowTransformer encoder;
  AggregationParams aggregation;  // d x (C * d)
  AffineHead ground_score;        // 1 x 2d
  AffineHead ground_offset;       // 2 x 2d
  AffineHead view_head;           // 5 x d

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int d = cfg.shape.d_model;
    ModelParams p;
    p.config = cfg;
    p.encoder = ShadowTransformer::init(cfg.shape, cfg.layers, cfg.ffn_multiple, rng);
    p.aggregation = AggregationParams::init(cfg.shape.cameras, d, d, rng);
    p.ground_score = AffineHead::init(1, 2 * d, rng);
    p.ground_offset = AffineHead::init(2, 2 * d, rng);
    p.view_head = AffineHead::init(kViewHeadChannels, d, rng);
    p.ground_score.bias[0] = kScorePriorBias;
    p.view_head.bias[0] = kScorePriorBias;
    return p;
  }

  /// Same structure with every tensor zeroed; used to hold gradients.
  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, MatrixXd* m, VectorXd* v) {
      if (m) m->setZero();
      if (v) v->setZero();
    });
    return z;
  }

  /// Calls fn(name, matrix, nullptr) or fn(name, nullptr, vector) for every
  /// trainable tensor in a fixed order.
  void visit(const std::function<void(const std::string&, MatrixXd*, VectorXd*)>& fn) {
    for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
      const std::string pre = "encoder." + std::to_string(l) + ".";
      EncoderLayerParams& L = encoder.layers[l];
      ShadowAttentionParams& a = L.attention;
      for (std::size_t m = 0; m < a.out_proj.size(); ++m) {
        fn(pre + "attn.out_proj." + std::to_string(m), &a.out_proj[m], nullptr);
        fn(pre + "attn.value_proj." + std::to_string(m), &a.value_proj[m], nullptr);
      }
      fn(pre + "attn.offset_weight", &a.offset_weight, nullptr);
      fn(pre + "attn.offset_bias", nullptr, &a.offset_bias);
      fn(pre + "attn.logit_weight", &a.logit_weight, nullptr);
      fn(pre + "attn.logit_bias", nullptr, &a.logit_bias);
      fn(pre + "attn.camera_embedding", &a.camera_embedding, nullptr);
      fn(pre + "ffn.w1", &L.ffn.w1, nullptr);
      fn(pre + "ffn.b1", nullptr, &L.ffn.b1);
      fn(pre + "ffn.w2", &L.ffn.w2, nullptr);
      fn(pre + "ffn.b2", nullptr, &L.ffn.b2);
      fn(pre + "norm1.gamma", nullptr, &L.norm1.gamma);
      fn(pre + "norm1.beta", nullptr, &L.norm1.beta);
      fn(pre + "norm2.gamma", nullptr, &L.norm2.gamma);
      fn(pre + "norm2.beta", nullptr, &L.norm2.beta);
    }
    fn("aggregation.weight", &aggregation.weight, nullptr);
    fn("aggregation.bias", nullptr, &aggregation.bias);
    fn("ground_score.weight", &ground_score.weight, nullptr);
    fn("ground_score.bias", nullptr, &ground_score.bias);
    fn("ground_offset.weight", &ground_offset.weight, nullptr);
    fn("ground_offset.bias", nullptr, &ground_offset.bias);
    fn("view_head.weight", &view_head.weight, nullptr);
    fn("view_head.bias", nullptr, &view_head.bias);
  }

  /// Flat views of every tensor, in visit order.
  std::vector<std::span<double>> flat() {
    std::vector<std::span<double>> out;
    visit([&](const std::string&, MatrixXd* m, VectorXd* v) {
      if (m) out.emplace_back(m->data(), static_cast<std::size_t>(m->size()));
      if (v) out.emplace_back(v->data(), static_cast<std::size_t>(v->size()));
    });
    return out;
  }

  bool all_finite() {
    bool ok = true;
    for (auto s : flat())
      for (double x : s) ok = ok && std::isfinite(x);
    return ok;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto s : flat()) n += s.size();
    return n;
  }
};

inline Json to_json(const ModelConfig& c) {
  return {{"d_model", c.shape.d_model}, {"heads", c.shape.heads},
          {"points", c.shape.points},   {"cameras", c.shape.cameras},
          {"layers", c.layers},         {"ffn_multiple", c.ffn_multiple}};
}

inline ModelConfig model_config_from_json(const Json& j, ModelConfig base = {}) {
  base.shape.d_model = mvdetr::detail::get_or(j, "d_model", base.shape.d_model);
  base.shape.heads = mvdetr::detail::get_or(j, "heads", base.shape.heads);
  base.shape.points = mvdetr::detail::get_or(j, "points", base.shape.points);
  base.shape.cameras = mvdetr::detail::get_or(j, "cameras", base.shape.cameras);
  base.layers = mvdetr::detail::get_or(j, "layers", base.layers);
  base.ffn_multiple = mvdetr::detail::get_or(j, "ffn_multiple", base.ffn_multiple);
  base.validate();
  return base;
}

/// Row-major named tensors, ready for checkpoint_to_json.
inline std::vector<NamedTensor> to_tensors(ModelParams& p) {
  std::vector<NamedTensor> out;
  p.visit([&](const std::string& name, MatrixXd* m, VectorXd* v) {
    NamedTensor t;
    t.name = name;
    if (m) {
      t.shape = {static_cast<int>(m->rows()), static_cast<int>(m->cols())};
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index c = 0; c < m->cols(); ++c) t.data.push_back((*m)(r, c));
    } else {
      t.shape = {static_cast<int>(v->size())};
      t.data.assign(v->data(), v->data() + v->size());
    }
    out.push_back(std::move(t));
  });
  return out;
}

/// Fills `p` (already shaped by ModelParams::init with the same config) from
/// named tensors. Names and shapes must match exactly.
inline void load_tensors(ModelParams& p, const std::vector<NamedTensor>& ts) {
  std::size_t i = 0;
  p.visit([&](const std::string& name, MatrixXd* m, VectorXd* v) {
    if (i >= ts.size() || ts[i].name != name) {
      throw FormatError("checkpoint tensor " + std::to_string(i) + " should be '" + name + "'");
    }
    const NamedTensor& t = ts[i++];
    if (m) {
      if (t.shape != std::vector<int>{static_cast<int>(m->rows()), static_cast<int>(m->cols())}) {
        throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
      }
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = t.data[r * m->cols() + c];
    } else {
      if (t.shape != std::vector<int>{static_cast<int>(v->size())}) {
        throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
      }
      for (Eigen::Index r = 0; r < v->size(); ++r) (*v)[r] = t.data[r];
    }
  });
  if (i != ts.size()) throw FormatError("checkpoint has extra tensors");
}

inline Json model_checkpoint_to_json(ModelParams& p) {
  Json j = mvdetr::checkpoint_to_json(to_tensors(p));
  j["model"] = to_json(p.config);
  return j;
}

inline ModelParams model_from_checkpoint(const Json& j) {
  if (!j.contains("model")) throw FormatError("checkpoint lacks a 'model' block");
  ModelParams p = ModelParams::init(model_config_from_json(j.at("model")), 0);
  load_tensors(p, mvdetr::checkpoint_from_json(j));
  return p;
}

}  // namespace mvdetr::harness

#endif  // MVDETR_HARNESS_MODEL_HPP_
