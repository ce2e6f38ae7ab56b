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

// View-coherent augmentation: each view gets its own random axis-aligned
// affine warp (crop, scale, horizontal flip) whose matrix is kept, so that
// per-view labels can follow the warp and feature maps can be warped back
// before ground projection.

#ifndef MVDETR_AUGMENTATION_HPP_
#define MVDETR_AUGMENTATION_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mvdetr/core.hpp"
#include "mvdetr/geometry.hpp"
#include "mvdetr/sampler.hpp"

namespace mvdetr {

struct CropRect {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;
};

struct AffineAugmentation {
  Mat3 matrix = Mat3::Identity();
  bool flipped = false;
  CropRect crop;
  double scale = 1.0;

  void validate() const {
    if (matrix(2, 0) != 0.0 || matrix(2, 1) != 0.0 || matrix(2, 2) != 1.0) {
      throw InvalidConfig("augmentation matrix last row must be (0, 0, 1)");
    }
    if (!(std::abs(matrix.topLeftCorner<2, 2>().determinant()) > 1e-9)) {
      throw InvalidConfig("augmentation matrix is not invertible");
    }
  }

  AffineAugmentation inverse() const {
    validate();
    AffineAugmentation inv = *this;
    const Eigen::Matrix2d lin_inv = matrix.topLeftCorner<2, 2>().inverse();
    inv.matrix.setIdentity();
    inv.matrix.topLeftCorner<2, 2>() = lin_inv;
    inv.matrix.topRightCorner<2, 1>() = -lin_inv * matrix.topRightCorner<2, 1>();
    inv.scale = 1.0 / scale;
    return inv;
  }

  /// The same warp expressed on a map whose coordinates are image coordinates
  /// times `factor` (e.g. 1 / stride for a strided feature map).
  AffineAugmentation rescaled(double factor) const {
    Mat3 s = Mat3::Identity();
    s(0, 0) = factor;
    s(1, 1) = factor;
    Mat3 s_inv = Mat3::Identity();
    s_inv(0, 0) = 1.0 / factor;
    s_inv(1, 1) = 1.0 / factor;
    AffineAugmentation r = *this;
    r.matrix = s * matrix * s_inv;
    r.crop = {crop.x * factor, crop.y * factor, crop.width * factor,
              crop.height * factor};
    return r;
  }

  Point2 apply(Point2 p) const {
    return {matrix(0, 0) * p.x + matrix(0, 1) * p.y + matrix(0, 2),
            matrix(1, 0) * p.x + matrix(1, 1) * p.y + matrix(1, 2)};
  }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentationConfig {
  double flip_prob = 0.5;
  Range scale_range{0.8, 1.2};
  Range crop_range{0.8, 1.0};  // retained area fraction
  Dims image_size{720, 1280};

  void validate() const {
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
      throw InvalidConfig("flip_prob must lie in [0, 1]");
    }
    if (!(scale_range.lo <= scale_range.hi) || !(scale_range.lo > 0.0)) {
      throw InvalidConfig("scale_range must be a non-empty subset of (0, inf)");
    }
    if (!(crop_range.lo <= crop_range.hi) || !(crop_range.lo > 0.0) ||
        !(crop_range.hi <= 1.0)) {
      throw InvalidConfig("crop_range must be a non-empty subset of (0, 1]");
    }
    if (image_size.height <= 0 || image_size.width <= 0) {
      throw InvalidConfig("image_size must be positive");
    }
  }
};

/// Draws crop, then scale, then flip, and composes them as flip * scale * crop.
inline AffineAugmentation sample_augmentation(std::uint64_t seed,
                                              const AugmentationConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const double w = cfg.image_size.width;
  const double h = cfg.image_size.height;

  AffineAugmentation aug;
  const double side = std::sqrt(rng.uniform(cfg.crop_range.lo, cfg.crop_range.hi));
  aug.crop.width = w * side;
  aug.crop.height = h * side;
  aug.crop.x = rng.uniform(0.0, w - aug.crop.width);
  aug.crop.y = rng.uniform(0.0, h - aug.crop.height);
  aug.scale = rng.uniform(cfg.scale_range.lo, cfg.scale_range.hi);
  aug.flipped = rng.uniform() < cfg.flip_prob;

  Mat3 crop = Mat3::Identity();
  crop(0, 2) = -aug.crop.x;
  crop(1, 2) = -aug.crop.y;
  Mat3 scale = Mat3::Identity();
  scale(0, 0) = aug.scale;
  scale(1, 1) = aug.scale;
  Mat3 flip = Mat3::Identity();
  if (aug.flipped) {
    flip(0, 0) = -1.0;
    flip(0, 2) = w - 1.0;
  }
  aug.matrix = flip * scale * crop;
  return aug;
}

/// Inverse warp: output(q) = input(M^-1 q), bilinear, zero padded.
inline FeatureMap apply_to_image(const AffineAugmentation& aug,
                                 const FeatureMap& map) {
  const AffineAugmentation inv = aug.inverse();
  FeatureMap out(map.channels(), map.height(), map.width(), map.plane(),
                 map.camera());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const Point2 src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const BilinearTaps t = bilinear_taps(map.height(), map.width(), src);
      for (const Tap& tap : t.taps) {
        if (!tap.inside || tap.weight == 0.0) continue;
        for (int d = 0; d < map.channels(); ++d) {
          out.at(d, y, x) += tap.weight * map.at(d, tap.row, tap.col);
        }
      }
    }
  }
  return out;
}

inline FeatureMap invert_on_features(const AffineAugmentation& aug,
                                     const FeatureMap& map) {
  return apply_to_image(aug.inverse(), map);
}

struct PedestrianAnnotation {
  int id = 0;
  Point2 foot;         // pixels
  double height = 0.0;  // bbox height, pixels
  double width = 0.0;   // bbox width, pixels
  bool visible = true;
};

struct ViewAnnotations {
  Dims image_size;
  std::vector<PedestrianAnnotation> pedestrians;

  std::size_t visible_count() const {
    std::size_t n = 0;
    for (const auto& p : pedestrians) n += p.visible ? 1 : 0;
    return n;
  }
};

inline bool inside_image(Point2 p, Dims size) {
  return p.x >= 0.0 && p.x < size.width && p.y >= 0.0 && p.y < size.height;
}

/// Moves foot points with the warp and scales box sizes by the column norms
/// of the linear block. Points that leave the image become invisible.
inline ViewAnnotations apply_to_annotations(const AffineAugmentation& aug,
                                            const ViewAnnotations& ann) {
  aug.validate();
  const double sx = aug.matrix.topLeftCorner<2, 2>().col(0).norm();
  const double sy = aug.matrix.topLeftCorner<2, 2>().col(1).norm();
  ViewAnnotations out = ann;
  for (auto& p : out.pedestrians) {
    p.foot = aug.apply(p.foot);
    p.width *= sx;
    p.height *= sy;
    p.visible = p.visible && inside_image(p.foot, ann.image_size);
  }
  return out;
}

}  // namespace mvdetr

#endif  // MVDETR_AUGMENTATION_HPP_
