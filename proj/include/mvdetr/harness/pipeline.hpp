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

// End-to-end runs on a synthetic scene:
//   [augment] -> de-augment -> project -> pool -> shadow transformer ->
//   aggregate -> upsample -> heads -> decode -> evaluate
// plus the loss, its backward pass, the toy gradient-descent fit and the
// augmentation coherence check.

#ifndef MVDETR_HARNESS_PIPELINE_HPP_
#define MVDETR_HARNESS_PIPELINE_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvdetr/augmentation.hpp"
#include "mvdetr/decode_eval.hpp"
#include "mvdetr/encoder.hpp"
#include "mvdetr/geometry.hpp"
#include "mvdetr/harness/model.hpp"
#include "mvdetr/harness/scene.hpp"
#include "mvdetr/losses.hpp"

namespace mvdetr::harness {

enum class HeadMode {
  kOracle,  // score read off the projected blob channel
  kModel,   // learned ground heads
};

struct PipelineOptions {
  bool augment = false;
  std::uint64_t aug_seed = 0;
  AugmentationConfig augmentation;  // image_size is taken from the scene
  LossConfig loss;
  DecodeConfig decode;
  HeadMode head = HeadMode::kOracle;
  int threads = 1;
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Inputs that do not depend on the model parameters.
// ---------------------------------------------------------------------------

struct PreparedView {
  AffineAugmentation aug;       // image pixels
  FeatureMap features;          // augmented, image plane
  ViewAnnotations annotations;  // augmented
  std::vector<HeatPoint> feet;  // visible foot points, (row, col) pixels
};

struct Prepared {
  GroundGrid grid;       // fine grid
  GroundGrid heat_grid;  // one cell per heatmap cell
  int stride = 1;
  std::vector<PreparedView> views;
  std::vector<FeatureMap> projected;  // per view, on heat_grid
  std::vector<FeatureMap> pooled;     // encoder input
  FeatureMap skip;                    // mean of projected
  std::vector<HeatPoint> ground_points;  // fine-grid coordinates
  std::vector<Point2> positions;
};

inline Prepared prepare(const Scene& scene, const PipelineOptions& opt) {
  Prepared p;
  p.grid = scene.spec.grid;
  p.heat_grid = p.grid.heatmap_grid();
  p.stride = scene.spec.feature_stride;
  p.positions = scene.positions;
  AugmentationConfig acfg = opt.augmentation;
  acfg.image_size = scene.spec.image_size;
  const int cams = scene.num_cameras();
  for (int c = 0; c < cams; ++c) {
    PreparedView v;
    if (opt.augment) v.aug = sample_augmentation(opt.aug_seed * 1000003ULL + c, acfg);
    const AffineAugmentation on_features = v.aug.rescaled(1.0 / p.stride);
    v.features = opt.augment ? apply_to_image(on_features, scene.features[c]) : scene.features[c];
    v.annotations = opt.augment ? apply_to_annotations(v.aug, scene.views[c]) : scene.views[c];
    for (const auto& a : v.annotations.pedestrians) {
      if (a.visible) v.feet.push_back({a.foot.y, a.foot.x});
    }
    const FeatureMap restored =
        opt.augment ? invert_on_features(on_features, v.features) : v.features;
    const Mat3 hf = feature_homography(scene.homographies[c], p.stride);
    p.projected.push_back(project_feature_map(restored, hf, p.heat_grid, opt.threads));
    p.pooled.push_back(avg_pool2(p.projected.back()));
    p.views.push_back(std::move(v));
  }
  p.skip = FeatureMap::ground(p.projected[0].channels(), p.projected[0].height(),
                              p.projected[0].width());
  for (const auto& m : p.projected) {
    auto dst = p.skip.values();
    auto src = m.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] / cams;
  }
  for (const Point2& pos : scene.positions) p.ground_points.push_back(p.grid.world_to_fine(pos));
  return p;
}

// ---------------------------------------------------------------------------
// Per-pixel affine heads.
// ---------------------------------------------------------------------------

inline FeatureMap apply_head(const AffineHead& head, const FeatureMap& in) {
  FeatureMap out(static_cast<int>(head.weight.rows()), in.height(), in.width(), in.plane(),
                 in.camera());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      const VectorXd o = head.weight * map_vector(in, {y, x}) + head.bias;
      for (int k = 0; k < o.size(); ++k) out.at(k, y, x) = o[k];
    }
  }
  return out;
}

/// Accumulates weight/bias gradients; adds the input gradient to `grad_in`
/// when given.
inline void apply_head_backward(const AffineHead& head, const FeatureMap& in,
                                const FeatureMap& grad_out, AffineHead& grads,
                                FeatureMap* grad_in) {
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      const VectorXd g = map_vector(grad_out, {y, x});
      if (g.isZero(0.0)) continue;
      grads.weight += g * map_vector(in, {y, x}).transpose();
      grads.bias += g;
      if (grad_in) {
        const VectorXd gi = head.weight.transpose() * g;
        for (int k = 0; k < gi.size(); ++k) grad_in->at(k, y, x) += gi[k];
      }
    }
  }
}

inline FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out(a.channels() + b.channels(), a.height(), a.width(), a.plane(), a.camera());
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int k = 0; k < a.channels(); ++k) out.at(k, y, x) = a.at(k, y, x);
      for (int k = 0; k < b.channels(); ++k) out.at(a.channels() + k, y, x) = b.at(k, y, x);
    }
  }
  return out;
}

/// Clamped logistic scores from channel `ch` of `logits`, plus d score / d logit.
inline std::pair<std::vector<double>, std::vector<double>> squash(const FeatureMap& logits,
                                                                  int ch) {
  std::vector<double> s, ds;
  s.reserve(static_cast<std::size_t>(logits.height()) * logits.width());
  ds.reserve(s.capacity());
  for (int y = 0; y < logits.height(); ++y) {
    for (int x = 0; x < logits.width(); ++x) {
      const double raw = sigmoid(logits.at(ch, y, x));
      const double c = clamp_score(raw);
      s.push_back(c);
      ds.push_back(c == raw ? raw * (1.0 - raw) : 0.0);
    }
  }
  return {s, ds};
}

// ---------------------------------------------------------------------------
// Model forward / loss / backward.
// ---------------------------------------------------------------------------

struct LossBreakdown {
  GroundLossTerms ground;
  std::vector<ViewLossTerms> views;  // views with at least one visible pedestrian
  std::vector<int> view_ids;
  double total = 0.0;
};

inline Json to_json(const LossBreakdown& l) {
  Json views = Json::array();
  for (std::size_t i = 0; i < l.views.size(); ++i) {
    views.push_back({{"camera", l.view_ids[i]},
                     {"det", l.views[i].det},
                     {"off", l.views[i].off},
                     {"box", l.views[i].box}});
  }
  return {{"total", l.total}, {"ground_det", l.ground.det}, {"ground_off", l.ground.off},
          {"views", views}};
}

struct ModelForward {
  std::vector<std::vector<FeatureMap>> acts;
  FeatureMap aggregated;
  FeatureMap head_input;  // [upsampled aggregate; skip]
  FeatureMap score_logit;
  FeatureMap score;       // clamped probabilities, 1 channel
  FeatureMap offset;      // 2 channels
  std::vector<FeatureMap> view_out;  // 5 channels per view
};

inline ModelForward model_forward(const Prepared& p, const ModelParams& m, int threads) {
  if (m.config.shape.cameras != static_cast<int>(p.views.size())) {
    throw ShapeMismatch("model expects " + std::to_string(m.config.shape.cameras) +
                        " cameras, scene has " + std::to_string(p.views.size()));
  }
  if (m.config.shape.d_model != p.skip.channels()) {
    throw ShapeMismatch("model width " + std::to_string(m.config.shape.d_model) +
                        " differs from feature channels " + std::to_string(p.skip.channels()));
  }
  ModelForward f;
  f.acts = shadow_transformer_forward(p.pooled, m.encoder, threads);
  f.aggregated = aggregate_views(f.acts.back(), m.aggregation);
  f.head_input = concat_channels(upsample_nearest2(f.aggregated, p.skip.dims()), p.skip);
  f.score_logit = apply_head(m.ground_score, f.head_input);
  f.score = FeatureMap::ground(1, p.skip.height(), p.skip.width());
  const auto [s, ds] = squash(f.score_logit, 0);
  std::copy(s.begin(), s.end(), f.score.values().begin());
  f.offset = apply_head(m.ground_offset, f.head_input);
  for (const auto& v : p.views) f.view_out.push_back(apply_head(m.view_head, v.features));
  return f;
}

struct LossAndGrad {
  LossBreakdown loss;
  ModelParams grads;
};

/// Total loss of a forward pass and, when `want_grads`, its gradient with
/// respect to every model tensor.
inline LossAndGrad model_loss(const Prepared& p, const ModelParams& m, const ModelForward& f,
                              const LossConfig& cfg, bool want_grads, int threads) {
  LossAndGrad r;
  const Dims hd = p.heat_grid.dims;
  const int ds = p.grid.downsample_r;
  const HeatmapTarget gt = gaussian_target(p.ground_points, hd, ds, cfg.sigma_cells);
  const auto [gs, gds] = squash(f.score_logit, 0);
  const LossValue det = focal_loss(gs, gt, cfg.alpha, cfg.beta);
  const MapLoss off = offset_loss(f.offset, p.ground_points, ds);
  r.loss.ground = {det.value, off.value};

  struct ViewGrad {
    int view;
    std::vector<double> det_grad, dsq;
    FeatureMap off_grad, box_grad;
  };
  std::vector<ViewGrad> vgrads;
  for (std::size_t c = 0; c < p.views.size(); ++c) {
    const PreparedView& v = p.views[c];
    if (v.feet.empty()) continue;
    const FeatureMap& out = f.view_out[c];
    const HeatmapTarget vt = gaussian_target(v.feet, out.dims(), p.stride, cfg.sigma_cells);
    if (vt.count == 0) continue;
    const auto [vs, vds] = squash(out, 0);
    const LossValue vdet = focal_loss(vs, vt, cfg.alpha, cfg.beta);
    FeatureMap off_map(2, out.height(), out.width(), out.plane(), out.camera());
    FeatureMap box_map(2, out.height(), out.width(), out.plane(), out.camera());
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        off_map.at(0, y, x) = out.at(1, y, x);
        off_map.at(1, y, x) = out.at(2, y, x);
        box_map.at(0, y, x) = out.at(3, y, x);
        box_map.at(1, y, x) = out.at(4, y, x);
      }
    }
    const MapLoss voff = offset_loss(off_map, v.feet, p.stride);
    const MapLoss vbox = bbox_loss(box_map, v.annotations, p.stride);
    r.loss.views.push_back({vdet.value, voff.value, vbox.value});
    r.loss.view_ids.push_back(static_cast<int>(c));
    if (want_grads) vgrads.push_back({static_cast<int>(c), vdet.grad, vds, voff.grad, vbox.grad});
  }
  r.loss.total = total_loss(r.loss.ground, r.loss.views, cfg.box_weight);
  if (!want_grads) return r;

  r.grads = m.zeros_like();
  // Ground heads.
  FeatureMap d_score = FeatureMap::ground(1, hd.height, hd.width);
  for (std::size_t i = 0; i < gs.size(); ++i) d_score.values()[i] = det.grad[i] * gds[i];
  FeatureMap d_input = FeatureMap::ground(f.head_input.channels(), hd.height, hd.width);
  apply_head_backward(m.ground_score, f.head_input, d_score, r.grads.ground_score, &d_input);
  apply_head_backward(m.ground_offset, f.head_input, off.grad, r.grads.ground_offset, &d_input);

  // Back through upsample, aggregation and the encoder; the skip half of the
  // head input has no parameters upstream.
  const int d = m.config.shape.d_model;
  FeatureMap d_up = FeatureMap::ground(d, hd.height, hd.width);
  for (int k = 0; k < d; ++k)
    for (int y = 0; y < hd.height; ++y)
      for (int x = 0; x < hd.width; ++x) d_up.at(k, y, x) = d_input.at(k, y, x);
  const FeatureMap d_agg = upsample_nearest2_backward(d_up, f.aggregated.dims());
  AggregationBackward ab = aggregate_views_backward(f.acts.back(), m.aggregation, d_agg);
  r.grads.aggregation = ab.grads;
  const ShadowTransformerBackward tb =
      shadow_transformer_backward(f.acts, m.encoder, std::move(ab.grad_inputs), threads);
  for (std::size_t l = 0; l < tb.layer_grads.size(); ++l) {
    const EncoderLayerGrads& lg = tb.layer_grads[l];
    EncoderLayerParams& dst = r.grads.encoder.layers[l];
    dst.attention.out_proj = lg.attention.out_proj;
    dst.attention.value_proj = lg.attention.value_proj;
    dst.attention.offset_weight = lg.attention.offset_weight;
    dst.attention.offset_bias = lg.attention.offset_bias;
    dst.attention.logit_weight = lg.attention.logit_weight;
    dst.attention.logit_bias = lg.attention.logit_bias;
    dst.attention.camera_embedding = lg.attention.camera_embedding;
    dst.ffn = {lg.ffn.w1, lg.ffn.b1, lg.ffn.w2, lg.ffn.b2};
    dst.norm1.gamma = lg.norm1.gamma;
    dst.norm1.beta = lg.norm1.beta;
    dst.norm2.gamma = lg.norm2.gamma;
    dst.norm2.beta = lg.norm2.beta;
  }

  // Shared per-view head, weighted by 1 / C as in the total loss.
  const double inv_c = vgrads.empty() ? 0.0 : 1.0 / vgrads.size();
  for (const ViewGrad& vg : vgrads) {
    const FeatureMap& out = f.view_out[vg.view];
    FeatureMap g(kViewHeadChannels, out.height(), out.width(), out.plane(), out.camera());
    std::size_t i = 0;
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x, ++i) {
        g.at(0, y, x) = inv_c * vg.det_grad[i] * vg.dsq[i];
        g.at(1, y, x) = inv_c * vg.off_grad.at(0, y, x);
        g.at(2, y, x) = inv_c * vg.off_grad.at(1, y, x);
        g.at(3, y, x) = inv_c * cfg.box_weight * vg.box_grad.at(0, y, x);
        g.at(4, y, x) = inv_c * cfg.box_weight * vg.box_grad.at(1, y, x);
      }
    }
    apply_head_backward(m.view_head, p.views[vg.view].features, g, r.grads.view_head, nullptr);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Oracle head: the score is the geometric mean of the projected blob channel
// over the views that see the cell, so a cell lights up only where the
// shadows of all those views cross.
// ---------------------------------------------------------------------------

inline constexpr int kBlobChannel = 0;
inline constexpr int kMaskChannel = 1;

inline FeatureMap oracle_score(std::span<const FeatureMap> projected, int min_views = 2) {
  const int h = projected[0].height();
  const int w = projected[0].width();
  FeatureMap s = FeatureMap::ground(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int seen = 0;
      double log_sum = 0.0;
      for (const auto& m : projected) {
        if (!(m.at(kMaskChannel, y, x) > 0.5)) continue;
        ++seen;
        log_sum += std::log(std::max(m.at(kBlobChannel, y, x), 1e-300));
      }
      if (seen >= std::min<int>(min_views, static_cast<int>(projected.size()))) {
        s.at(0, y, x) = std::exp(log_sum / seen);
      }
    }
  }
  return s;
}

/// Sub-cell offsets from the score centroid of each 3x3 window.
inline FeatureMap oracle_offset(const FeatureMap& score) {
  FeatureMap o = FeatureMap::ground(2, score.height(), score.width());
  for (int y = 0; y < score.height(); ++y) {
    for (int x = 0; x < score.width(); ++x) {
      double sw = 0.0, sy = 0.0, sx = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!score.contains(y + dy, x + dx)) continue;
          const double v = score.at(0, y + dy, x + dx);
          sw += v;
          sy += v * dy;
          sx += v * dx;
        }
      }
      o.at(0, y, x) = 0.5 + (sw > 0.0 ? sy / sw : 0.0);
      o.at(1, y, x) = 0.5 + (sw > 0.0 ? sx / sw : 0.0);
    }
  }
  return o;
}

// ---------------------------------------------------------------------------
// Runs.
// ---------------------------------------------------------------------------

struct PipelineResult {
  std::vector<Detection> detections;
  EvalReport eval;
  std::optional<LossBreakdown> loss;  // absent when the scene has no pedestrians
  FeatureMap score;
  std::map<std::string, double> timings;
};

inline PipelineResult run_pipeline(const Scene& scene, const ModelParams& model,
                                   const PipelineOptions& opt) {
  PipelineResult r;
  Stopwatch t0;
  const Prepared p = prepare(scene, opt);
  r.timings["prepare_s"] = t0.seconds();
  Stopwatch t1;
  const ModelForward f = model_forward(p, model, opt.threads);
  r.timings["model_s"] = t1.seconds();
  if (!p.ground_points.empty()) {
    try {
      r.loss = model_loss(p, model, f, opt.loss, false, opt.threads).loss;
    } catch (const EmptyTarget&) {
      r.loss.reset();
    }
  }
  Stopwatch t2;
  FeatureMap offset;
  if (opt.head == HeadMode::kOracle) {
    r.score = oracle_score(p.projected);
    offset = oracle_offset(r.score);
  } else {
    r.score = f.score;
    offset = f.offset;
  }
  r.detections = decode_heatmap(r.score, offset, p.grid, opt.decode);
  const std::vector<Frame> frames{{0, r.detections, scene.positions}};
  if (!scene.positions.empty()) r.eval = evaluate(frames, kMatchThreshold, opt.threads);
  r.timings["decode_eval_s"] = t2.seconds();
  return r;
}

struct FitOptions {
  int steps = 200;
  double lr = 0.01;
  PipelineOptions pipeline;
};

struct FitResult {
  std::vector<double> loss_log;  // loss before each update, then the final loss
  int updates = 0;
  LossBreakdown initial;
  LossBreakdown final;
  EvalReport eval;  // model head after the last update
  double seconds = 0.0;
};

/// Plain gradient descent on every model tensor over one prepared scene.
inline FitResult fit_toy(const Scene& scene, ModelParams& model, const FitOptions& opt) {
  if (opt.steps < 1) throw InvalidConfig("fit needs steps >= 1");
  if (!(opt.lr >= 0.0)) throw InvalidConfig("learning rate must be >= 0");
  if (scene.positions.empty()) throw EmptyTarget("fit needs at least one pedestrian");
  Stopwatch clock;
  FitResult r;
  const Prepared p = prepare(scene, opt.pipeline);
  const int threads = opt.pipeline.threads;
  for (int step = 0;; ++step) {
    const ModelForward f = model_forward(p, model, threads);
    const bool last = step == opt.steps;
    LossAndGrad lg = model_loss(p, model, f, opt.pipeline.loss, !last, threads);
    if (!std::isfinite(lg.loss.total)) {
      throw DivergedLoss("loss is " + std::to_string(lg.loss.total) + " at step " +
                         std::to_string(step));
    }
    r.loss_log.push_back(lg.loss.total);
    if (step == 0) r.initial = lg.loss;
    if (last) {
      r.final = lg.loss;
      const auto dets = decode_heatmap(f.score, f.offset, p.grid, opt.pipeline.decode);
      const std::vector<Frame> frames{{0, dets, scene.positions}};
      r.eval = evaluate(frames, kMatchThreshold, threads);
      break;
    }
    auto params = model.flat();
    auto grads = lg.grads.flat();
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t i = 0; i < params[t].size(); ++i) params[t][i] -= opt.lr * grads[t][i];
    }
    ++r.updates;
    if (!model.all_finite()) {
      throw DivergedLoss("parameters became non-finite at step " + std::to_string(step));
    }
  }
  r.seconds = clock.seconds();
  return r;
}

// ---------------------------------------------------------------------------
// Augmentation coherence: an impulse at a pedestrian's pixel, pushed through
// augment -> de-augment -> project, must peak within one ground cell of the
// peak of the plain projection.
//
// All three steps are linear and an impulse's response stays within a few
// pixels, so impulses far enough apart share one map; each pedestrian's peak
// is searched among the cells that image near its own impulse.
// ---------------------------------------------------------------------------

struct CoherenceCase {
  int camera = 0;
  int pedestrian = 0;
  Cell expected;
  Cell observed;
  bool passed = false;
};

struct CoherenceResult {
  int checked = 0;
  int passed = 0;
  std::vector<CoherenceCase> cases;
  std::vector<CoherenceCase> failures;
};

inline constexpr double kCoherenceWindow = 6.0;     // pixels around an impulse
inline constexpr double kCoherenceSeparation = 16.0;  // between batched impulses

inline CoherenceResult coherence_check(const Scene& scene, const AugmentationConfig& cfg,
                                       std::uint64_t seed, int threads = 1) {
  CoherenceResult r;
  AugmentationConfig acfg = cfg;
  acfg.image_size = scene.spec.image_size;
  const GroundGrid hg = scene.spec.grid.heatmap_grid();
  const Dims size = scene.spec.image_size;
  for (int c = 0; c < scene.num_cameras(); ++c) {
    const AffineAugmentation aug = sample_augmentation(seed * 1000003ULL + c, acfg);
    const Mat3& h = scene.homographies[c];

    // Pixel of every heatmap cell center (NaN when behind the camera).
    std::vector<Point2> cell_px(static_cast<std::size_t>(hg.dims.height) * hg.dims.width);
    for (int i = 0; i < hg.dims.height; ++i) {
      for (int j = 0; j < hg.dims.width; ++j) {
        const Point2 g = hg.cell_center(i, j);
        const Vec3 q = h * Vec3(g.x, g.y, 1.0);
        cell_px[static_cast<std::size_t>(i) * hg.dims.width + j] =
            q.z() > kDepthEpsilon ? Point2{q.x() / q.z(), q.y() / q.z()}
                                  : Point2{std::nan(""), std::nan("")};
      }
    }

    struct Item {
      int ped;
      Point2 q;
    };
    std::vector<std::vector<Item>> groups;
    for (std::size_t i = 0; i < scene.positions.size(); ++i) {
      const HeatPoint fine = hg.world_to_fine(scene.positions[i]);
      const Point2 center = hg.cell_center(static_cast<int>(std::floor(fine.row)),
                                           static_cast<int>(std::floor(fine.col)));
      Point2 px;
      try {
        px = world_to_image(scene.projections[c], Vec3(center.x, center.y, 0.0));
      } catch (const PointBehindCamera&) {
        continue;
      }
      const Point2 q{std::round(px.x), std::round(px.y)};
      if (!inside_image(q, size) || !inside_image(aug.apply(q), size)) continue;
      bool placed = false;
      for (auto& g : groups) {
        bool far = true;
        for (const Item& o : g) {
          far = far && std::max(std::abs(o.q.x - q.x), std::abs(o.q.y - q.y)) >=
                           kCoherenceSeparation;
        }
        if (far) {
          g.push_back({static_cast<int>(i), q});
          placed = true;
          break;
        }
      }
      if (!placed) groups.push_back({{static_cast<int>(i), q}});
    }

    for (const auto& g : groups) {
      FeatureMap impulse = FeatureMap::image(1, size.height, size.width, c);
      for (const Item& it : g) impulse.at(0, static_cast<int>(it.q.y), static_cast<int>(it.q.x)) = 1.0;
      const FeatureMap plain = project_feature_map(impulse, h, hg, threads);
      const FeatureMap round_trip = invert_on_features(aug, apply_to_image(aug, impulse));
      const FeatureMap warped = project_feature_map(round_trip, h, hg, threads);
      for (const Item& it : g) {
        Cell a0{-1, -1}, a1{-1, -1};
        double b0 = 0.0, b1 = 0.0;
        for (int i = 0; i < hg.dims.height; ++i) {
          for (int j = 0; j < hg.dims.width; ++j) {
            const Point2 p = cell_px[static_cast<std::size_t>(i) * hg.dims.width + j];
            if (!(std::max(std::abs(p.x - it.q.x), std::abs(p.y - it.q.y)) <= kCoherenceWindow)) {
              continue;
            }
            if (plain.at(0, i, j) > b0) {
              b0 = plain.at(0, i, j);
              a0 = {i, j};
            }
            if (warped.at(0, i, j) > b1) {
              b1 = warped.at(0, i, j);
              a1 = {i, j};
            }
          }
        }
        CoherenceCase cc{c, it.ped, a0, a1, false};
        cc.passed = b0 > 0.0 && b1 > 0.0 && std::abs(a0.row - a1.row) <= 1 &&
                    std::abs(a0.col - a1.col) <= 1;
        ++r.checked;
        r.cases.push_back(cc);
        if (cc.passed) {
          ++r.passed;
        } else {
          r.failures.push_back(cc);
        }
      }
    }
  }
  return r;
}

}  // namespace mvdetr::harness

#endif  // MVDETR_HARNESS_PIPELINE_HPP_
