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

// Multiview deformable ("shadow") attention.
//
// For a query at ground cell p of camera c, every head m looks at K sampling
// points in each of the C projected maps:
//
//   out = sum_m W_m sum_{c'} sum_k a[m,c',k] * W'_m * f_{c'}(p + dp[m,c',k])
//
// where the offsets dp and the weights a are affine functions of the query
// vector, and the weights of each head are normalized jointly over (c', k)
// with an exponential normalization. The query is the projected feature at p
// plus a sinusoidal ground position embedding plus a learned camera embedding.
//
// Sampling point layout: index (m * C + c') * K + k. Offsets are stored as
// (dx, dy) = (column, row) displacements in cells.

#ifndef MVDETR_SHADOW_ATTENTION_HPP_
#define MVDETR_SHADOW_ATTENTION_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "mvdetr/core.hpp"
#include "mvdetr/sampler.hpp"

namespace mvdetr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct AttentionShape {
  int d_model = 128;
  int heads = 8;
  int points = 4;
  int cameras = 7;

  int d_head() const { return d_model / heads; }
  int num_points() const { return heads * cameras * points; }
  int point_index(int m, int c, int k) const {
    return (m * cameras + c) * points + k;
  }

  void validate() const {
    if (d_model <= 0 || heads <= 0 || points <= 0 || cameras <= 0) {
      throw InvalidConfig("attention sizes must be positive");
    }
    if (d_model % heads != 0) {
      throw InvalidConfig("heads must divide d_model");
    }
  }
};

struct ShadowAttentionParams {
  AttentionShape shape;
  std::vector<MatrixXd> out_proj;    // W_m, d_model x d_head
  std::vector<MatrixXd> value_proj;  // W'_m, d_head x d_model
  MatrixXd offset_weight;            // 2 * num_points x d_model
  VectorXd offset_bias;
  MatrixXd logit_weight;             // num_points x d_model
  VectorXd logit_bias;
  MatrixXd camera_embedding;         // cameras x d_model

  static ShadowAttentionParams zeros(const AttentionShape& s) {
    s.validate();
    ShadowAttentionParams p;
    p.shape = s;
    p.out_proj.assign(s.heads, MatrixXd::Zero(s.d_model, s.d_head()));
    p.value_proj.assign(s.heads, MatrixXd::Zero(s.d_head(), s.d_model));
    p.offset_weight = MatrixXd::Zero(2 * s.num_points(), s.d_model);
    p.offset_bias = VectorXd::Zero(2 * s.num_points());
    p.logit_weight = MatrixXd::Zero(s.num_points(), s.d_model);
    p.logit_bias = VectorXd::Zero(s.num_points());
    p.camera_embedding = MatrixXd::Zero(s.cameras, s.d_model);
    return p;
  }

  /// Glorot-uniform value/output transforms, small random camera embeddings,
  /// zero offset/weight predictor weights. Offset biases put head m's points
  /// on a ring in direction 2*pi*m/M at radii 1..K cells, so attention starts
  /// uniform over distinct reference points.
  static ShadowAttentionParams init(const AttentionShape& s, Rng& rng) {
    ShadowAttentionParams p = zeros(s);
    const double lim = std::sqrt(6.0 / (s.d_model + s.d_head()));
    for (int m = 0; m < s.heads; ++m) {
      for (Eigen::Index i = 0; i < p.out_proj[m].size(); ++i) {
        p.out_proj[m].data()[i] = rng.uniform(-lim, lim);
      }
      for (Eigen::Index i = 0; i < p.value_proj[m].size(); ++i) {
        p.value_proj[m].data()[i] = rng.uniform(-lim, lim);
      }
    }
    for (Eigen::Index i = 0; i < p.camera_embedding.size(); ++i) {
      p.camera_embedding.data()[i] = 0.1 * rng.normal();
    }
    for (int m = 0; m < s.heads; ++m) {
      const double theta = 2.0 * M_PI * m / s.heads;
      for (int c = 0; c < s.cameras; ++c) {
        for (int k = 0; k < s.points; ++k) {
          const int idx = s.point_index(m, c, k);
          p.offset_bias[2 * idx] = (k + 1) * std::cos(theta);
          p.offset_bias[2 * idx + 1] = (k + 1) * std::sin(theta);
        }
      }
    }
    return p;
  }

  bool all_finite() const {
    for (const auto& w : out_proj) if (!w.allFinite()) return false;
    for (const auto& w : value_proj) if (!w.allFinite()) return false;
    return offset_weight.allFinite() && offset_bias.allFinite() &&
           logit_weight.allFinite() && logit_bias.allFinite() &&
           camera_embedding.allFinite();
  }
};

/// Per-query sampling offsets and normalized weights.
struct AttentionProbe {
  Cell position;
  int camera = 0;
  std::vector<Point2> offsets;  // num_points, (dx, dy) in cells
  std::vector<double> weights;  // num_points, each head sums to 1
};

/// 2-D sinusoidal embedding of a ground position. The first half of the
/// channels encodes the row, the second half the column; each half holds
/// (sin, cos) pairs over geometrically spaced frequencies.
inline VectorXd position_embedding(int d_model, double row, double col) {
  VectorXd e = VectorXd::Zero(d_model);
  const int half = d_model / 2;
  auto encode = [&](double pos, int base, int width) {
    for (int i = 0; i < width; ++i) {
      const int pair = i / 2;
      const double freq =
          std::pow(10000.0, -2.0 * pair / std::max(1, width));
      e[base + i] = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  };
  encode(row, 0, half);
  encode(col, half, half);
  return e;
}

inline void check_attention_inputs(std::span<const FeatureMap> fmaps,
                                   const AttentionShape& s) {
  if (static_cast<int>(fmaps.size()) != s.cameras) {
    throw ShapeMismatch("expected " + std::to_string(s.cameras) +
                        " maps, got " + std::to_string(fmaps.size()));
  }
  require_same_shapes(fmaps, "mv_deform_attn");
  if (fmaps[0].channels() != s.d_model) {
    throw ShapeMismatch("map channels " + std::to_string(fmaps[0].channels()) +
                        " != d_model " + std::to_string(s.d_model));
  }
}

inline VectorXd map_vector(const FeatureMap& f, Cell p) {
  VectorXd v(f.channels());
  for (int d = 0; d < f.channels(); ++d) v[d] = f.at(d, p.row, p.col);
  return v;
}

/// Query vector of camera c at cell p.
inline VectorXd attention_query(std::span<const FeatureMap> fmaps, Cell p,
                                int camera,
                                const ShadowAttentionParams& params) {
  return map_vector(fmaps[camera], p) +
         position_embedding(params.shape.d_model, p.row, p.col) +
         params.camera_embedding.row(camera).transpose();
}

/// Exponential normalization per head over its (camera, point) logits.
inline std::vector<double> normalize_head_weights(const VectorXd& logits,
                                                  const AttentionShape& s) {
  std::vector<double> w(logits.size());
  const int per_head = s.cameras * s.points;
  for (int m = 0; m < s.heads; ++m) {
    const int b = m * per_head;
    double mx = logits[b];
    for (int i = 1; i < per_head; ++i) mx = std::max(mx, logits[b + i]);
    double sum = 0.0;
    for (int i = 0; i < per_head; ++i) {
      w[b + i] = std::exp(logits[b + i] - mx);
      sum += w[b + i];
    }
    for (int i = 0; i < per_head; ++i) w[b + i] /= sum;
  }
  return w;
}

inline AttentionProbe predict_offsets_weights(const VectorXd& query,
                                              const ShadowAttentionParams& params) {
  const AttentionShape& s = params.shape;
  if (query.size() != s.d_model) {
    throw ShapeMismatch("query width != d_model");
  }
  AttentionProbe probe;
  const VectorXd off = params.offset_weight * query + params.offset_bias;
  const VectorXd logits = params.logit_weight * query + params.logit_bias;
  probe.offsets.resize(s.num_points());
  for (int i = 0; i < s.num_points(); ++i) {
    probe.offsets[i] = {off[2 * i], off[2 * i + 1]};
  }
  probe.weights = normalize_head_weights(logits, s);
  return probe;
}

inline Point2 sample_location(Cell p, Point2 offset) {
  return {p.col + offset.x, p.row + offset.y};
}

/// Attention output for a given probe (offsets and weights held fixed).
inline VectorXd deform_attn_with_probe(std::span<const FeatureMap> fmaps,
                                       const AttentionProbe& probe,
                                       const ShadowAttentionParams& params) {
  const AttentionShape& s = params.shape;
  VectorXd out = VectorXd::Zero(s.d_model);
  VectorXd acc(s.d_model);
  VectorXd v(s.d_model);
  for (int m = 0; m < s.heads; ++m) {
    acc.setZero();
    for (int c = 0; c < s.cameras; ++c) {
      for (int k = 0; k < s.points; ++k) {
        const int idx = s.point_index(m, c, k);
        const double a = probe.weights[idx];
        if (a == 0.0) continue;
        bilinear_sample(fmaps[c],
                        sample_location(probe.position, probe.offsets[idx]),
                        std::span<double>(v.data(), v.size()));
        acc += a * v;
      }
    }
    out += params.out_proj[m] * (params.value_proj[m] * acc);
  }
  return out;
}

inline VectorXd mv_deform_attn(std::span<const FeatureMap> fmaps, Cell p,
                               int camera, const ShadowAttentionParams& params) {
  check_attention_inputs(fmaps, params.shape);
  AttentionProbe probe =
      predict_offsets_weights(attention_query(fmaps, p, camera, params), params);
  probe.position = p;
  probe.camera = camera;
  return deform_attn_with_probe(fmaps, probe, params);
}

// ---------------------------------------------------------------------------
// Backward.
// ---------------------------------------------------------------------------

struct AttentionGrads {
  std::vector<FeatureMap> fmaps;
  std::vector<MatrixXd> out_proj;
  std::vector<MatrixXd> value_proj;
  MatrixXd offset_weight;
  VectorXd offset_bias;
  MatrixXd logit_weight;
  VectorXd logit_bias;
  MatrixXd camera_embedding;
  // Gradients wrt the probe of the most recent single-query backward call.
  std::vector<Point2> offsets;
  std::vector<double> weights;

  static AttentionGrads zeros(const ShadowAttentionParams& p,
                              std::span<const FeatureMap> fmaps) {
    AttentionGrads g;
    g.fmaps.reserve(fmaps.size());
    for (const auto& f : fmaps) {
      g.fmaps.emplace_back(f.channels(), f.height(), f.width(), f.plane(),
                           f.camera());
    }
    g.zero_params(p);
    return g;
  }

  /// Parameter part only (no feature map gradients).
  static AttentionGrads param_zeros(const ShadowAttentionParams& p) {
    AttentionGrads g;
    g.zero_params(p);
    return g;
  }

  void zero_params(const ShadowAttentionParams& p) {
    const AttentionShape& s = p.shape;
    out_proj.assign(s.heads, MatrixXd::Zero(s.d_model, s.d_head()));
    value_proj.assign(s.heads, MatrixXd::Zero(s.d_head(), s.d_model));
    offset_weight = MatrixXd::Zero(p.offset_weight.rows(), p.offset_weight.cols());
    offset_bias = VectorXd::Zero(p.offset_bias.size());
    logit_weight = MatrixXd::Zero(p.logit_weight.rows(), p.logit_weight.cols());
    logit_bias = VectorXd::Zero(p.logit_bias.size());
    camera_embedding =
        MatrixXd::Zero(p.camera_embedding.rows(), p.camera_embedding.cols());
    offsets.assign(s.num_points(), Point2{});
    weights.assign(s.num_points(), 0.0);
  }

  void add_params(const AttentionGrads& o) {
    for (std::size_t m = 0; m < out_proj.size(); ++m) {
      out_proj[m] += o.out_proj[m];
      value_proj[m] += o.value_proj[m];
    }
    offset_weight += o.offset_weight;
    offset_bias += o.offset_bias;
    logit_weight += o.logit_weight;
    logit_bias += o.logit_bias;
    camera_embedding += o.camera_embedding;
  }
};

/// Backward of deform_attn_with_probe. Accumulates into grads.fmaps and the
/// value/output transforms, and overwrites grads.offsets / grads.weights with
/// the gradient wrt the probe.
inline void deform_attn_with_probe_backward(std::span<const FeatureMap> fmaps,
                                            const AttentionProbe& probe,
                                            const ShadowAttentionParams& params,
                                            const VectorXd& upstream,
                                            AttentionGrads& grads) {
  const AttentionShape& s = params.shape;
  grads.offsets.assign(s.num_points(), Point2{});
  grads.weights.assign(s.num_points(), 0.0);
  const bool want_maps = !grads.fmaps.empty();
  VectorXd acc(s.d_model);
  VectorXd v(s.d_model);
  VectorXd dv(s.d_model);
  for (int m = 0; m < s.heads; ++m) {
    acc.setZero();
    for (int c = 0; c < s.cameras; ++c) {
      for (int k = 0; k < s.points; ++k) {
        const int idx = s.point_index(m, c, k);
        bilinear_sample(fmaps[c],
                        sample_location(probe.position, probe.offsets[idx]),
                        std::span<double>(v.data(), v.size()));
        acc += probe.weights[idx] * v;
      }
    }
    const VectorXd head_value = params.value_proj[m] * acc;
    grads.out_proj[m] += upstream * head_value.transpose();
    const VectorXd t = params.out_proj[m].transpose() * upstream;
    grads.value_proj[m] += t * acc.transpose();
    const VectorXd d_acc = params.value_proj[m].transpose() * t;
    for (int c = 0; c < s.cameras; ++c) {
      for (int k = 0; k < s.points; ++k) {
        const int idx = s.point_index(m, c, k);
        const Point2 loc = sample_location(probe.position, probe.offsets[idx]);
        bilinear_sample(fmaps[c], loc, std::span<double>(v.data(), v.size()));
        grads.weights[idx] = d_acc.dot(v);
        const double a = probe.weights[idx];
        dv = a * d_acc;
        const SampleGrad sg = bilinear_sample_backward(
            fmaps[c], loc, std::span<const double>(dv.data(), dv.size()));
        grads.offsets[idx] = sg.grad_pt;
        if (want_maps) {
          scatter_sample_grad(sg.taps,
                              std::span<const double>(dv.data(), dv.size()),
                              grads.fmaps[c]);
        }
      }
    }
  }
}

/// Full backward of mv_deform_attn for one query, accumulating into grads.
/// Returns the gradient wrt the query vector. The query's own feature term
/// is included in grads.fmaps[camera] at p.
inline VectorXd mv_deform_attn_backward_accumulate(
    std::span<const FeatureMap> fmaps, Cell p, int camera,
    const ShadowAttentionParams& params, const VectorXd& upstream,
    AttentionGrads& grads) {
  const AttentionShape& s = params.shape;
  const VectorXd query = attention_query(fmaps, p, camera, params);
  AttentionProbe probe = predict_offsets_weights(query, params);
  probe.position = p;
  probe.camera = camera;
  deform_attn_with_probe_backward(fmaps, probe, params, upstream, grads);

  VectorXd d_off(2 * s.num_points());
  for (int i = 0; i < s.num_points(); ++i) {
    d_off[2 * i] = grads.offsets[i].x;
    d_off[2 * i + 1] = grads.offsets[i].y;
  }
  VectorXd d_logit(s.num_points());
  const int per_head = s.cameras * s.points;
  for (int m = 0; m < s.heads; ++m) {
    const int b = m * per_head;
    double dot = 0.0;
    for (int i = 0; i < per_head; ++i) {
      dot += probe.weights[b + i] * grads.weights[b + i];
    }
    for (int i = 0; i < per_head; ++i) {
      d_logit[b + i] = probe.weights[b + i] * (grads.weights[b + i] - dot);
    }
  }
  grads.offset_weight += d_off * query.transpose();
  grads.offset_bias += d_off;
  grads.logit_weight += d_logit * query.transpose();
  grads.logit_bias += d_logit;
  const VectorXd d_query = params.offset_weight.transpose() * d_off +
                           params.logit_weight.transpose() * d_logit;
  grads.camera_embedding.row(camera) += d_query.transpose();
  if (!grads.fmaps.empty()) {
    for (int d = 0; d < s.d_model; ++d) {
      grads.fmaps[camera].at(d, p.row, p.col) += d_query[d];
    }
  }
  return d_query;
}

inline AttentionGrads mv_deform_attn_backward(std::span<const FeatureMap> fmaps,
                                              Cell p, int camera,
                                              const ShadowAttentionParams& params,
                                              const VectorXd& upstream) {
  check_attention_inputs(fmaps, params.shape);
  AttentionGrads g = AttentionGrads::zeros(params, fmaps);
  mv_deform_attn_backward_accumulate(fmaps, p, camera, params, upstream, g);
  return g;
}

}  // namespace mvdetr

#endif  // MVDETR_SHADOW_ATTENTION_HPP_
