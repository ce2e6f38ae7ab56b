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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <utility>

#include "mvdetr/harness/config.hpp"
#include "test_util.hpp"

namespace mvdetr::harness {
namespace {

// Camera at `eye` looking straight down; R flips y and z (det +1), or x and z
// when `mirrored`.
CameraCalibration down_camera(Vec3 eye, bool mirrored) {
  CameraCalibration c;
  c.rotation = mirrored ? Vec3(-1, 1, -1).asDiagonal().toDenseMatrix()
                        : Vec3(1, -1, -1).asDiagonal().toDenseMatrix();
  c.translation = -c.rotation * eye;
  c.intrinsic << 300, 0, 320, 0, 300, 240, 0, 0, 1;
  c.image_size = {480, 640};
  return c;
}

// Pixel of ground point g for down_camera(eye, mirrored), written out.
Point2 down_camera_pixel(Vec3 eye, bool mirrored, Point2 g) {
  const double depth = eye.z();
  const double xc = mirrored ? -(g.x - eye.x()) : g.x - eye.x();
  const double yc = mirrored ? g.y - eye.y() : -(g.y - eye.y());
  return {300.0 * xc / depth + 320.0, 300.0 * yc / depth + 240.0};
}

SceneSpec tiny_spec() {
  SceneSpec s;
  s.grid = {{0.0, 0.0}, 0.1, {40, 40}, 4};
  s.pedestrians = 3;
  s.image_size = {60, 80};
  s.ring_distance = 4.0;
  s.camera_height = 3.0;
  return s;
}

// ---------------------------------------------------------------------------
// Scenes.
// ---------------------------------------------------------------------------

TEST(GenerateScene, FootPointsMatchAnalyticProjection) {
  SceneSpec spec;
  spec.grid = {{0.0, 0.0}, 0.05, {240, 240}, 4};
  spec.image_size = {480, 640};
  const Vec3 e0(6.0, 6.0, 10.0), e1(5.0, 7.0, 12.0);
  spec.calibrations = {down_camera(e0, false), down_camera(e1, true)};
  spec.pedestrians = 1;

  // Grid center through annotate().
  const Point2 center{6.0, 6.0};
  const Scene s0 = generate_scene(spec, 3);
  for (int c = 0; c < 2; ++c) {
    const PedestrianAnnotation a = annotate(s0.projections[c], spec, 0, center);
    const Point2 want = down_camera_pixel(c == 0 ? e0 : e1, c == 1, center);
    EXPECT_NEAR(a.foot.x, want.x, 1e-6);
    EXPECT_NEAR(a.foot.y, want.y, 1e-6);
  }
  EXPECT_NEAR(annotate(s0.projections[0], spec, 0, center).foot.x, 320.0, 1e-9);
  EXPECT_NEAR(annotate(s0.projections[0], spec, 0, center).foot.y, 240.0, 1e-9);

  // Randomly placed pedestrians.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = generate_scene(spec, seed);
    ASSERT_EQ(s.positions.size(), 1u);
    for (int c = 0; c < 2; ++c) {
      const Point2 want = down_camera_pixel(c == 0 ? e0 : e1, c == 1, s.positions[0]);
      EXPECT_NEAR(s.views[c].pedestrians[0].foot.x, want.x, 1e-6);
      EXPECT_NEAR(s.views[c].pedestrians[0].foot.y, want.y, 1e-6);
    }
  }
}

TEST(GenerateScene, BoxFromProjectedHeight) {
  SceneSpec spec;
  spec.image_size = {480, 640};
  const Vec3 eye(-4.0, 6.0, 3.0);
  spec.calibrations = {CameraCalibration::look_at(eye, {6, 6, 0}, 400.0, {480, 640}),
                       CameraCalibration::look_at({16, 6, 3}, {6, 6, 0}, 400.0, {480, 640})};
  const Scene s = generate_scene(spec, 1);
  for (const auto& a : s.views[0].pedestrians) {
    if (!a.visible) continue;
    const Point2 p = s.positions[a.id];
    const Point2 head = world_to_image(s.projections[0], Vec3(p.x, p.y, 1.7));
    EXPECT_NEAR(a.height, std::hypot(head.x - a.foot.x, head.y - a.foot.y), 1e-9);
    EXPECT_NEAR(a.width, a.height * 0.5 / 1.7, 1e-9);
  }
}

TEST(GenerateScene, SameSeedSameScene) {
  const Scene a = generate_scene(SceneSpec{}, 42);
  const Scene b = generate_scene(SceneSpec{}, 42);
  ASSERT_EQ(a.positions.size(), b.positions.size());
  for (std::size_t i = 0; i < a.positions.size(); ++i) {
    EXPECT_EQ(a.positions[i].x, b.positions[i].x);
    EXPECT_EQ(a.positions[i].y, b.positions[i].y);
  }
  for (int c = 0; c < a.num_cameras(); ++c) {
    EXPECT_EQ(a.homographies[c], b.homographies[c]);
    const auto va = a.features[c].values();
    const auto vb = b.features[c].values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin()));
  }
  const Scene c = generate_scene(SceneSpec{}, 43);
  EXPECT_NE(a.positions[0].x, c.positions[0].x);
}

TEST(GenerateScene, NoPedestrians) {
  SceneSpec spec;
  spec.pedestrians = 0;
  const Scene s = generate_scene(spec, 1);
  EXPECT_TRUE(s.positions.empty());
  for (int c = 0; c < s.num_cameras(); ++c) {
    EXPECT_TRUE(s.views[c].pedestrians.empty());
    for (int y = 0; y < s.features[c].height(); ++y)
      for (int x = 0; x < s.features[c].width(); ++x) EXPECT_EQ(s.features[c].at(0, y, x), 0.0);
  }
}

TEST(GenerateScene, InfeasibleAndInvalidSpecs) {
  SceneSpec crowded;
  crowded.pedestrians = 2;
  crowded.min_separation = 50.0;
  crowded.max_attempts = 50;
  EXPECT_THROW(generate_scene(crowded, 1), InfeasibleScene);

  SceneSpec one_cam;
  one_cam.cameras = 1;
  EXPECT_THROW(generate_scene(one_cam, 1), InvalidConfig);

  // A camera facing away from the grid sees nobody.
  SceneSpec blind;
  blind.calibrations = {
      CameraCalibration::look_at({-4, 6, 3}, {-10, 6, 0}, 400.0, blind.image_size),
      CameraCalibration::look_at({-4, 6, 3}, {-10, 7, 0}, 400.0, blind.image_size)};
  blind.max_attempts = 20;
  EXPECT_THROW(generate_scene(blind, 1), InfeasibleScene);
}

TEST(GenerateSceneProperty, InsideGridSeparatedAndSeen) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SceneSpec spec;
    const Scene s = generate_scene(spec, seed);
    ASSERT_EQ(static_cast<int>(s.positions.size()), spec.pedestrians);
    const Point2 ext = spec.grid.extent();
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
      const Point2 p = s.positions[i];
      EXPECT_GE(p.x, spec.edge_margin);
      EXPECT_LE(p.x, ext.x - spec.edge_margin);
      EXPECT_GE(p.y, spec.edge_margin);
      EXPECT_LE(p.y, ext.y - spec.edge_margin);
      bool seen = false;
      for (const auto& v : s.views) seen = seen || v.pedestrians[i].visible;
      EXPECT_TRUE(seen);
      for (std::size_t j = 0; j < i; ++j) {
        EXPECT_GE(std::hypot(p.x - s.positions[j].x, p.y - s.positions[j].y),
                  spec.min_separation);
      }
    }
  }
}

TEST(OracleFeatures, BlobPeaksAtFootAndChannelsAreScaledCopies) {
  const SceneSpec spec;
  const Scene s = generate_scene(spec, 5);
  const FeatureMap& f = s.features[0];
  for (const auto& a : s.views[0].pedestrians) {
    if (!a.visible) continue;
    const double fx = a.foot.x / 4, fy = a.foot.y / 4;
    const int x = static_cast<int>(std::floor(fx));
    const int y = static_cast<int>(std::floor(fy));
    const double d2 = (x - fx) * (x - fx) + (y - fy) * (y - fy);
    EXPECT_GE(f.at(0, y, x), std::exp(-d2 / (2 * 1.5 * 1.5)) - 1e-12);
  }
  EXPECT_EQ(f.at(1, 0, 0), 1.0);
  double gain = 0.0;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      if (f.at(0, y, x) > 0.5) gain = f.at(2, y, x) / f.at(0, y, x);
    }
  }
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) EXPECT_NEAR(f.at(2, y, x), gain * f.at(0, y, x), 1e-12);
}

// ---------------------------------------------------------------------------
// Pipeline.
// ---------------------------------------------------------------------------

TEST(RunPipeline, OracleHeadFindsEveryone) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Scene s = generate_scene(SceneSpec{}, seed);
    const ModelParams m = ModelParams::init(small_model_config(3), seed);
    for (bool aug : {false, true}) {
      PipelineOptions o;
      o.augment = aug;
      o.aug_seed = seed;
      const PipelineResult r = run_pipeline(s, m, o);
      EXPECT_GE(r.eval.moda, 0.95) << "seed " << seed << " aug " << aug;
    }
  }
}

TEST(RunPipeline, AugOnAndOffGiveFiniteLosses) {
  const Scene s = generate_scene(SceneSpec{}, 8);
  const ModelParams m = ModelParams::init(small_model_config(3), 8);
  for (bool aug : {false, true}) {
    PipelineOptions o;
    o.augment = aug;
    o.aug_seed = 4;
    o.head = HeadMode::kModel;
    const PipelineResult r = run_pipeline(s, m, o);
    ASSERT_TRUE(r.loss.has_value());
    EXPECT_TRUE(std::isfinite(r.loss->total));
    EXPECT_GT(r.loss->total, 0.0);
    EXPECT_EQ(r.loss->views.size(), 3u);
  }
}

TEST(RunPipeline, RepeatableAndThreadIndependent) {
  const Scene s = generate_scene(SceneSpec{}, 9);
  const ModelParams m = ModelParams::init(small_model_config(3), 2);
  PipelineOptions o;
  o.augment = true;
  o.aug_seed = 6;
  o.head = HeadMode::kModel;
  o.decode.score_thresh = 0.0;
  o.decode.max_det = 30;
  const Json a = to_json(run_pipeline(s, m, o));
  const Json b = to_json(run_pipeline(s, m, o));
  o.threads = 3;
  const Json c = to_json(run_pipeline(s, m, o));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a.dump(), c.dump());
  EXPECT_EQ(a["num_detections"], 30);
}

TEST(RunPipeline, ShapeChecks) {
  const Scene s = generate_scene(SceneSpec{}, 1);
  EXPECT_THROW(run_pipeline(s, ModelParams::init(small_model_config(2), 1), {}), ShapeMismatch);
  EXPECT_THROW(run_pipeline(s, ModelParams::init(small_model_config(3, 4), 1), {}),
               ShapeMismatch);
}

TEST(RunPipeline, EmptySceneHasNoLossOrEval) {
  SceneSpec spec;
  spec.pedestrians = 0;
  const Scene s = generate_scene(spec, 1);
  const PipelineResult r = run_pipeline(s, ModelParams::init(small_model_config(3), 1), {});
  EXPECT_FALSE(r.loss.has_value());
  EXPECT_TRUE(r.detections.empty());
}

TEST(OracleScore, NeedsTwoViews) {
  std::vector<FeatureMap> maps;
  for (int c = 0; c < 3; ++c) maps.push_back(FeatureMap::ground(2, 1, 3));
  // Cell 0 seen by all three, cell 1 by one, cell 2 by two.
  const double blob[3][3] = {{0.8, 0.9, 0.5}, {0.2, 0.0, 0.5}, {0.4, 0.0, 0.0}};
  const double mask[3][3] = {{1, 1, 1}, {1, 0, 1}, {1, 0, 0}};
  for (int c = 0; c < 3; ++c) {
    for (int x = 0; x < 3; ++x) {
      maps[c].at(kBlobChannel, 0, x) = blob[c][x];
      maps[c].at(kMaskChannel, 0, x) = mask[c][x];
    }
  }
  const FeatureMap s = oracle_score(maps);
  EXPECT_NEAR(s.at(0, 0, 0), std::cbrt(0.8 * 0.2 * 0.4), 1e-12);
  EXPECT_EQ(s.at(0, 0, 1), 0.0);
  EXPECT_NEAR(s.at(0, 0, 2), 0.5, 1e-12);
}

TEST(OracleOffset, CentroidOfWindow) {
  FeatureMap s = FeatureMap::ground(1, 3, 3);
  s.at(0, 1, 1) = 1.0;
  s.at(0, 1, 2) = 1.0;
  const FeatureMap o = oracle_offset(s);
  EXPECT_DOUBLE_EQ(o.at(0, 1, 1), 0.5);
  EXPECT_DOUBLE_EQ(o.at(1, 1, 1), 1.0);
}

// Loss gradient of the whole model against central differences on a tiny
// scene, a few entries per tensor.
TEST(ModelLoss, GradientMatchesFiniteDifference) {
  const Scene s = generate_scene(tiny_spec(), 4);
  ModelConfig cfg = small_model_config(3);
  cfg.layers = 2;
  ModelParams m = ModelParams::init(cfg, 11);
  Rng rng(5);
  for (auto& L : m.encoder.layers) {
    for (Eigen::Index i = 0; i < L.attention.offset_bias.size(); ++i) {
      L.attention.offset_bias[i] += rng.uniform(0.2, 0.8);
    }
  }
  PipelineOptions o;
  o.augment = true;
  o.aug_seed = 2;
  const Prepared p = prepare(s, o);
  const LossAndGrad lg = model_loss(p, m, model_forward(p, m, 1), o.loss, true, 1);
  ModelParams grads = lg.grads;
  auto loss = [&] { return model_loss(p, m, model_forward(p, m, 1), o.loss, false, 1).loss.total; };

  std::vector<std::string> names;
  m.visit([&](const std::string& n, MatrixXd*, VectorXd*) { names.push_back(n); });
  auto params = m.flat();
  auto g = grads.flat();
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::vector<double> an, num;
    for (int e = 0; e < 4; ++e) {
      const std::size_t i = rng.below(params[t].size());
      std::span<double> one(&params[t][i], 1);
      num.push_back(testing::numeric_gradient(one, loss, 1e-6)[0]);
      an.push_back(g[t][i]);
    }
    EXPECT_LT(testing::relative_error(an, num), 1e-5) << names[t];
  }
}

// ---------------------------------------------------------------------------
// Gradient-check suite.
// ---------------------------------------------------------------------------

TEST(RunGradcheck, DefaultSizesPass) {
  const GradcheckResult r = run_gradcheck({}, 1);
  EXPECT_EQ(r.instances, 20);
  EXPECT_EQ(r.max_rel_error.size(), 12u);
  for (const auto& [k, v] : r.max_rel_error) EXPECT_LT(v, 1e-5) << k;
  EXPECT_EQ(r.zero_upstream_max_abs, 0.0);
}

TEST(RunGradcheck, CatchesCorruptedBackward) {
  GradcheckSizes sz;
  sz.instances = 3;
  auto flip_offsets = [](std::span<const FeatureMap> f, Cell p, int c,
                         const ShadowAttentionParams& prm, const VectorXd& up) {
    AttentionGrads g = mv_deform_attn_backward(f, p, c, prm, up);
    for (Point2& o : g.offsets) o = {o.y, o.x};
    return g;
  };
  EXPECT_GT(run_gradcheck(sz, 2, flip_offsets).max_rel_error.at("attention.offsets"), 1e-2);

  auto drop_value = [](std::span<const FeatureMap> f, Cell p, int c,
                       const ShadowAttentionParams& prm, const VectorXd& up) {
    AttentionGrads g = mv_deform_attn_backward(f, p, c, prm, up);
    g.value_proj[0] *= 0.5;
    return g;
  };
  EXPECT_GT(run_gradcheck(sz, 2, drop_value).max_rel_error.at("attention.value_proj"), 1e-2);

  auto leak = [](std::span<const FeatureMap> f, Cell p, int c, const ShadowAttentionParams& prm,
                 const VectorXd& up) {
    AttentionGrads g = mv_deform_attn_backward(f, p, c, prm, up);
    g.logit_bias.array() += 1e-3;
    return g;
  };
  const GradcheckResult r = run_gradcheck(sz, 2, leak);
  EXPECT_GT(r.zero_upstream_max_abs, 0.0);
}

TEST(RunGradcheck, RejectsLargeSizes) {
  GradcheckSizes sz;
  sz.height = 17;
  EXPECT_THROW(run_gradcheck(sz, 1), InvalidConfig);
  sz = {};
  sz.shape = {16, 2, 2, 2};
  EXPECT_THROW(run_gradcheck(sz, 1), InvalidConfig);
}

// ---------------------------------------------------------------------------
// Fit.
// ---------------------------------------------------------------------------

TEST(FitToy, ZeroLearningRateKeepsLoss) {
  const Scene s = generate_scene(tiny_spec(), 1);
  ModelParams m = ModelParams::init(small_model_config(3), 1);
  FitOptions o;
  o.steps = 4;
  o.lr = 0.0;
  const FitResult r = fit_toy(s, m, o);
  ASSERT_EQ(r.loss_log.size(), 5u);
  for (double l : r.loss_log) EXPECT_EQ(l, r.loss_log[0]);
}

TEST(FitToy, OneStepIsOneUpdate) {
  const Scene s = generate_scene(tiny_spec(), 1);
  ModelParams m = ModelParams::init(small_model_config(3), 1);
  const ModelParams before = m;
  FitOptions o;
  o.steps = 1;
  const FitResult r = fit_toy(s, m, o);
  EXPECT_EQ(r.updates, 1);
  EXPECT_EQ(r.loss_log.size(), 2u);

  // Same update done by hand.
  const Prepared p = prepare(s, o.pipeline);
  ModelParams manual = before;
  const LossAndGrad lg = model_loss(p, manual, model_forward(p, manual, 1), o.pipeline.loss, true, 1);
  ModelParams grads = lg.grads;
  auto a = manual.flat();
  auto g = grads.flat();
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) a[t][i] -= o.lr * g[t][i];
  auto b = m.flat();
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) ASSERT_EQ(a[t][i], b[t][i]);
}

TEST(FitToy, LossDropsOnSmallScene) {
  const Scene s = generate_scene(fit_scene_spec(), 3);
  ModelParams m = ModelParams::init(small_model_config(3), 3);
  FitOptions o;
  o.steps = 40;
  const FitResult r = fit_toy(s, m, o);
  EXPECT_LT(r.loss_log.back(), 0.75 * r.loss_log.front());
  EXPECT_LT(r.final.ground.det, 0.5 * r.initial.ground.det);
}

TEST(FitToy, Errors) {
  const Scene s = generate_scene(tiny_spec(), 1);
  ModelParams m = ModelParams::init(small_model_config(3), 1);
  FitOptions o;
  o.steps = 0;
  EXPECT_THROW(fit_toy(s, m, o), InvalidConfig);
  o.steps = 3;
  o.lr = 1e300;
  EXPECT_THROW(fit_toy(s, m, o), DivergedLoss);

  SceneSpec empty = tiny_spec();
  empty.pedestrians = 0;
  ModelParams m2 = ModelParams::init(small_model_config(3), 1);
  o.lr = 0.01;
  EXPECT_THROW(fit_toy(generate_scene(empty, 1), m2, o), EmptyTarget);
}

TEST(Checkpoint, FittedModelRoundTrips) {
  const Scene s = generate_scene(tiny_spec(), 2);
  ModelParams m = ModelParams::init(small_model_config(3), 2);
  FitOptions o;
  o.steps = 2;
  fit_toy(s, m, o);
  const Json doc = Json::parse(model_checkpoint_to_json(m).dump());
  ModelParams back = model_from_checkpoint(doc);
  auto a = m.flat();
  auto b = back.flat();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    ASSERT_EQ(a[t].size(), b[t].size());
    for (std::size_t i = 0; i < a[t].size(); ++i) ASSERT_EQ(a[t][i], b[t][i]);
  }
  PipelineOptions po;
  po.head = HeadMode::kModel;
  EXPECT_EQ(to_json(run_pipeline(s, m, po)).dump(), to_json(run_pipeline(s, back, po)).dump());

  Json wrong = doc;
  wrong["tensors"][0]["name"] = "nope";
  EXPECT_THROW(model_from_checkpoint(wrong), FormatError);
  Json missing = doc;
  missing.erase("model");
  EXPECT_THROW(model_from_checkpoint(missing), FormatError);
}

// ---------------------------------------------------------------------------
// Augmentation coherence.
// ---------------------------------------------------------------------------

TEST(CoherenceCheck, HoldsOnRandomScenes) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const CoherenceResult r = coherence_check(generate_scene(SceneSpec{}, 200 + seed), {}, seed);
    EXPECT_GT(r.checked, 40);
    EXPECT_EQ(r.passed, r.checked);
  }
}

// The batched check against one impulse per pedestrian with a global argmax.
TEST(CoherenceCheck, BatchingMatchesOneImpulseAtATime) {
  const Scene s = generate_scene(SceneSpec{}, 31);
  const std::uint64_t seed = 7;
  const CoherenceResult r = coherence_check(s, {}, seed);
  std::map<std::pair<int, int>, CoherenceCase> got;
  for (const auto& c : r.cases) got[{c.camera, c.pedestrian}] = c;

  const GroundGrid hg = s.spec.grid.heatmap_grid();
  AugmentationConfig acfg;
  acfg.image_size = s.spec.image_size;
  auto argmax = [](const FeatureMap& f) {
    Cell best{-1, -1};
    double v = 0.0;
    for (int i = 0; i < f.height(); ++i)
      for (int j = 0; j < f.width(); ++j)
        if (f.at(0, i, j) > v) {
          v = f.at(0, i, j);
          best = {i, j};
        }
    return best;
  };
  int compared = 0;
  for (int c = 0; c < s.num_cameras(); ++c) {
    const AffineAugmentation aug = sample_augmentation(seed * 1000003ULL + c, acfg);
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
      const HeatPoint fine = hg.world_to_fine(s.positions[i]);
      const Point2 ctr = hg.cell_center(static_cast<int>(fine.row), static_cast<int>(fine.col));
      const Point2 px = world_to_image(s.projections[c], Vec3(ctr.x, ctr.y, 0.0));
      const Point2 q{std::round(px.x), std::round(px.y)};
      const bool usable = inside_image(q, s.spec.image_size) &&
                          inside_image(aug.apply(q), s.spec.image_size);
      ASSERT_EQ(usable, got.count({c, static_cast<int>(i)}) == 1);
      if (!usable) continue;
      FeatureMap imp = FeatureMap::image(1, s.spec.image_size.height, s.spec.image_size.width, c);
      imp.at(0, static_cast<int>(q.y), static_cast<int>(q.x)) = 1.0;
      const Cell a = argmax(project_feature_map(imp, s.homographies[c], hg));
      const Cell b = argmax(project_feature_map(
          invert_on_features(aug, apply_to_image(aug, imp)), s.homographies[c], hg));
      const CoherenceCase& cc = got.at({c, static_cast<int>(i)});
      EXPECT_EQ(cc.expected, a);
      EXPECT_EQ(cc.observed, b);
      ++compared;
    }
  }
  EXPECT_EQ(compared, r.checked);
}

// ---------------------------------------------------------------------------
// Config and reports.
// ---------------------------------------------------------------------------

TEST(HarnessConfig, ParsesBlocksAndKeepsDefaults) {
  const Json j = Json::parse(R"({
    "scene": {"pedestrians": 7, "cameras": 4},
    "model": {"heads": 4, "layers": 1},
    "head": "model",
    "fit": {"steps": 5, "lr": 0.002},
    "gradcheck": {"instances": 21},
    "augcheck": {"scenes": 3}
  })");
  const HarnessConfig c = harness_config_from_json(j);
  EXPECT_EQ(c.scene.pedestrians, 7);
  EXPECT_EQ(c.scene.num_cameras(), 4);
  EXPECT_EQ(c.head, HeadMode::kModel);
  EXPECT_EQ(c.fit_steps, 5);
  EXPECT_EQ(c.fit_lr, 0.002);
  EXPECT_EQ(c.fit_scene.pedestrians, 10);
  EXPECT_EQ(c.gradcheck.instances, 21);
  EXPECT_EQ(c.augcheck_scenes, 3);
  const ModelConfig mc = c.model_for(4, 8);
  EXPECT_EQ(mc.shape.heads, 4);
  EXPECT_EQ(mc.shape.cameras, 4);
  EXPECT_EQ(mc.layers, 1);
  EXPECT_EQ(mc.shape.points, 2);
  EXPECT_TRUE(all_finite(to_json(c)));
}

TEST(HarnessConfig, Rejects) {
  EXPECT_THROW(harness_config_from_json(Json::parse(R"({"head": "x"})")), InvalidConfig);
  EXPECT_THROW(harness_config_from_json(Json::parse(R"({"scene": {"cameras": 1}})")),
               InvalidConfig);
  EXPECT_THROW(harness_config_from_json(Json::parse(R"({"gradcheck": {"width": 40}})")),
               InvalidConfig);
  EXPECT_THROW(harness_config_from_json(Json::parse("[1, 2]")), FormatError);
  EXPECT_THROW(harness_config_from_json(Json::parse(R"({"scene": {"recipe": "fog"}})")),
               InvalidConfig);
}

TEST(RunReport, TimingsAreSeparable) {
  RunReport r("x");
  r["value"] = 1.5;
  r.timing("step_s", 0.25);
  EXPECT_EQ(r.without_timings().dump(), R"({"command":"x","value":1.5})");
  EXPECT_TRUE(all_finite(r.doc));
  r["bad"] = {1.0, std::nan("")};
  EXPECT_FALSE(all_finite(r.doc));
}

TEST(WritePgm, HeaderAndScaling) {
  FeatureMap m = FeatureMap::ground(1, 2, 3);
  m.at(0, 0, 1) = 0.5;
  m.at(0, 1, 2) = 1.0;
  const std::string path =
      (std::filesystem::temp_directory_path() / "mvdetr_write_pgm_test.pgm").string();
  write_pgm(path, m);
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 128);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 5]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size()]), 0);
  std::remove(path.c_str());
}

}  // namespace
}  // namespace mvdetr::harness
