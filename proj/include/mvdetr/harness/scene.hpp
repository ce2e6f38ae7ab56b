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

// Synthetic multiview scenes: cameras on a ring around a ground grid,
// pedestrians scattered on the grid, and oracle image features (blobs at the
// projected foot points) standing in for a backbone.

#ifndef MVDETR_HARNESS_SCENE_HPP_
#define MVDETR_HARNESS_SCENE_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mvdetr/augmentation.hpp"
#include "mvdetr/core.hpp"
#include "mvdetr/geometry.hpp"

namespace mvdetr::harness {

enum class FeatureRecipe { kImpulse, kGaussianBlob };

struct SceneSpec {
  int cameras = 3;
  // Explicit calibrations; when empty, `cameras` are placed on a ring.
  std::vector<CameraCalibration> calibrations;
  GroundGrid grid{{0.0, 0.0}, 0.05, {240, 240}, 4};
  int pedestrians = 20;
  double min_separation = 1.0;  // meters
  double edge_margin = 0.4;     // meters
  double person_height = 1.7;   // meters
  double person_width = 0.5;    // meters
  Dims image_size{540, 960};
  int feature_stride = 4;
  int feature_channels = 8;
  FeatureRecipe recipe = FeatureRecipe::kGaussianBlob;
  double blob_radius = 1.5;  // feature pixels (Gaussian sigma)
  double ring_distance = 11.0;
  double camera_height = 6.0;
  int max_attempts = 1000;

  int num_cameras() const {
    return calibrations.empty() ? cameras : static_cast<int>(calibrations.size());
  }

  Dims feature_dims() const {
    return {(image_size.height + feature_stride - 1) / feature_stride,
            (image_size.width + feature_stride - 1) / feature_stride};
  }

  void validate() const {
    if (num_cameras() < 2) throw InvalidConfig("a scene needs at least 2 cameras");
    grid.validate();
    if (pedestrians < 0) throw InvalidConfig("pedestrian count must be >= 0");
    if (feature_stride < 1) throw InvalidConfig("feature_stride must be >= 1");
    if (feature_channels < 2) throw InvalidConfig("feature_channels must be >= 2");
    if (!(blob_radius > 0.0)) throw InvalidConfig("blob_radius must be positive");
    if (!(person_height > 0.0) || !(person_width > 0.0)) {
      throw InvalidConfig("person size must be positive");
    }
    const Point2 ext = grid.extent();
    if (!(2.0 * edge_margin < std::min(ext.x, ext.y))) {
      throw InvalidConfig("edge_margin leaves no room on the grid");
    }
    for (const auto& c : calibrations) c.validate();
  }
};

/// Smaller scene used by the toy fit: 10 pedestrians on an 8 m square.
inline SceneSpec fit_scene_spec() {
  SceneSpec s;
  s.grid = {{0.0, 0.0}, 0.05, {160, 160}, 4};
  s.pedestrians = 10;
  s.ring_distance = 8.0;
  s.camera_height = 5.0;
  return s;
}

struct Scene {
  SceneSpec spec;
  std::vector<CameraCalibration> cameras;
  std::vector<Mat34> projections;
  std::vector<Mat3> homographies;
  std::vector<Point2> positions;           // meters
  std::vector<ViewAnnotations> views;      // image pixels
  std::vector<FeatureMap> features;        // image plane, 1 / feature_stride

  int num_cameras() const { return static_cast<int>(cameras.size()); }
};

/// Camera `c` of a ring around the grid center, focal length chosen so the
/// whole grid lands inside the image with a 5% border.
inline CameraCalibration ring_camera(const SceneSpec& spec, int c, double jitter) {
  const Point2 ext = spec.grid.extent();
  const Vec3 center(spec.grid.origin.x + ext.x / 2, spec.grid.origin.y + ext.y / 2, 0.0);
  const double angle =
      2.0 * std::numbers::pi * c / spec.num_cameras() + std::numbers::pi / 6 + jitter;
  const Vec3 eye = center + Vec3(spec.ring_distance * std::cos(angle),
                                 spec.ring_distance * std::sin(angle), spec.camera_height);
  CameraCalibration cam = CameraCalibration::look_at(eye, center, 1.0, spec.image_size);
  const Mat34 p = perspective_matrix(cam);
  const double half_w = 0.95 * (spec.image_size.width - 1) / 2.0;
  const double half_h = 0.95 * (spec.image_size.height - 1) / 2.0;
  double focal = 1e12;
  for (int k = 0; k < 4; ++k) {
    const Vec3 corner(spec.grid.origin.x + (k & 1 ? ext.x : 0.0),
                      spec.grid.origin.y + (k & 2 ? ext.y : 0.0), 0.0);
    const Point2 px = world_to_image(p, corner);
    const double nx = px.x - cam.intrinsic(0, 2);
    const double ny = px.y - cam.intrinsic(1, 2);
    if (std::abs(nx) > 0.0) focal = std::min(focal, half_w / std::abs(nx));
    if (std::abs(ny) > 0.0) focal = std::min(focal, half_h / std::abs(ny));
  }
  cam.intrinsic(0, 0) = focal;
  cam.intrinsic(1, 1) = focal;
  return cam;
}

/// Foot point and box of one pedestrian in one view. The box height is the
/// pixel distance between the projected foot and head points.
inline PedestrianAnnotation annotate(const Mat34& proj, const SceneSpec& spec, int id,
                                     Point2 pos) {
  PedestrianAnnotation a;
  a.id = id;
  try {
    a.foot = world_to_image(proj, Vec3(pos.x, pos.y, 0.0));
    const Point2 head = world_to_image(proj, Vec3(pos.x, pos.y, spec.person_height));
    a.height = std::hypot(a.foot.x - head.x, a.foot.y - head.y);
    a.width = a.height * spec.person_width / spec.person_height;
    a.visible = inside_image(a.foot, spec.image_size);
  } catch (const PointBehindCamera&) {
    a.foot = {-1.0, -1.0};
    a.visible = false;
  }
  return a;
}

/// Oracle features: channel 0 holds the blobs, channel 1 is 1 on every
/// in-image pixel, the rest are channel 0 times a fixed per-channel gain.
inline FeatureMap oracle_features(const SceneSpec& spec, const ViewAnnotations& view,
                                  int camera, std::uint64_t seed) {
  const Dims fd = spec.feature_dims();
  FeatureMap f = FeatureMap::image(spec.feature_channels, fd.height, fd.width, camera);
  const double s = spec.feature_stride;
  for (const auto& p : view.pedestrians) {
    if (!p.visible) continue;
    const double fx = p.foot.x / s;
    const double fy = p.foot.y / s;
    if (spec.recipe == FeatureRecipe::kImpulse) {
      const int x = static_cast<int>(std::lround(fx));
      const int y = static_cast<int>(std::lround(fy));
      if (f.contains(y, x)) f.at(0, y, x) = 1.0;
      continue;
    }
    const double sg = spec.blob_radius;
    const int reach = static_cast<int>(std::ceil(4.0 * sg));
    const int cx = static_cast<int>(std::floor(fx));
    const int cy = static_cast<int>(std::floor(fy));
    for (int y = cy - reach; y <= cy + reach + 1; ++y) {
      for (int x = cx - reach; x <= cx + reach + 1; ++x) {
        if (!f.contains(y, x)) continue;
        const double d2 = (x - fx) * (x - fx) + (y - fy) * (y - fy);
        f.at(0, y, x) = std::max(f.at(0, y, x), std::exp(-d2 / (2.0 * sg * sg)));
      }
    }
  }
  Rng rng(seed ^ 0x5eedf00dULL);
  for (int y = 0; y < fd.height; ++y) {
    for (int x = 0; x < fd.width; ++x) {
      if (y * s < spec.image_size.height && x * s < spec.image_size.width) f.at(1, y, x) = 1.0;
    }
  }
  for (int d = 2; d < spec.feature_channels; ++d) {
    const double gain = rng.normal();
    for (int y = 0; y < fd.height; ++y) {
      for (int x = 0; x < fd.width; ++x) f.at(d, y, x) = gain * f.at(0, y, x);
    }
  }
  return f;
}

inline Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Scene scene;
  scene.spec = spec;
  const int cams = spec.num_cameras();
  for (int c = 0; c < cams; ++c) {
    const double jitter = rng.uniform(-0.15, 0.15);
    scene.cameras.push_back(spec.calibrations.empty() ? ring_camera(spec, c, jitter)
                                                      : spec.calibrations[c]);
    scene.projections.push_back(perspective_matrix(scene.cameras.back()));
    scene.homographies.push_back(ground_homography(scene.projections.back()));
  }

  const Point2 ext = spec.grid.extent();
  const double m = spec.edge_margin;
  for (int i = 0; i < spec.pedestrians; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      const Point2 p{spec.grid.origin.x + rng.uniform(m, ext.x - m),
                     spec.grid.origin.y + rng.uniform(m, ext.y - m)};
      bool ok = true;
      for (const Point2& q : scene.positions) {
        if (std::hypot(p.x - q.x, p.y - q.y) < spec.min_separation) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      bool seen = false;
      for (int c = 0; c < cams && !seen; ++c) {
        seen = annotate(scene.projections[c], spec, i, p).visible;
      }
      if (!seen) continue;
      scene.positions.push_back(p);
      placed = true;
    }
    if (!placed) {
      throw InfeasibleScene("could not place pedestrian " + std::to_string(i) + " after " +
                            std::to_string(spec.max_attempts) + " attempts");
    }
  }

  for (int c = 0; c < cams; ++c) {
    ViewAnnotations v;
    v.image_size = spec.image_size;
    for (std::size_t i = 0; i < scene.positions.size(); ++i) {
      v.pedestrians.push_back(
          annotate(scene.projections[c], spec, static_cast<int>(i), scene.positions[i]));
    }
    scene.features.push_back(oracle_features(spec, v, c, seed));
    scene.views.push_back(std::move(v));
  }
  return scene;
}

}  // namespace mvdetr::harness

#endif  // MVDETR_HARNESS_SCENE_HPP_
