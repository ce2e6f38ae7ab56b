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

// Pinhole camera geometry and ground-plane (z = 0) projection.
//
// A calibrated camera maps homogeneous world points X = (x, y, z, 1) to pixels
// through P = A [R | t]:  gamma * (u, v, 1)^T = P X.  Restricting to z = 0
// drops the third column of P and leaves a 3x3 ground homography.

#ifndef MVDETR_GEOMETRY_HPP_
#define MVDETR_GEOMETRY_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "mvdetr/core.hpp"
#include "mvdetr/sampler.hpp"

namespace mvdetr {

using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Vec3 = Eigen::Vector3d;

inline constexpr double kDepthEpsilon = 1e-9;
inline constexpr double kHomographyDetEpsilon = 1e-12;
inline constexpr double kHorizonEpsilon = 1e-9;

struct CameraCalibration {
  Mat3 intrinsic = Mat3::Identity();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Dims image_size{1, 1};

  /// Throws InvalidConfig when A is not an upper-triangular intrinsic matrix
  /// or R is not a proper rotation.
  void validate() const {
    const Mat3& a = intrinsic;
    if (a(1, 0) != 0.0 || a(2, 0) != 0.0 || a(2, 1) != 0.0) {
      throw InvalidConfig("intrinsic matrix must be upper triangular");
    }
    if (!(a(0, 0) > 0.0) || !(a(1, 1) > 0.0) || a(2, 2) != 1.0) {
      throw InvalidConfig("intrinsic needs positive focal lengths and A33 = 1");
    }
    const double ortho =
        (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho < 1e-9) || !(rotation.determinant() > 0.0)) {
      throw InvalidConfig("rotation must be orthonormal with det +1");
    }
    if (!translation.allFinite()) throw InvalidConfig("translation not finite");
    if (image_size.height <= 0 || image_size.width <= 0) {
      throw InvalidConfig("image size must be positive");
    }
  }

  /// Camera placed at `eye` looking at `target` with world +z as up. Image
  /// rows grow downward, so the camera y axis points along -up.
  static CameraCalibration look_at(const Vec3& eye, const Vec3& target,
                                   double focal_px, Dims image_size) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(Vec3::UnitZ());
    if (right.norm() < 1e-9) throw InvalidConfig("look_at: view along z axis");
    right.normalize();
    const Vec3 down = forward.cross(right);
    CameraCalibration c;
    c.rotation.row(0) = right.transpose();
    c.rotation.row(1) = down.transpose();
    c.rotation.row(2) = forward.transpose();
    c.translation = -c.rotation * eye;
    c.intrinsic << focal_px, 0, (image_size.width - 1) / 2.0, 0, focal_px,
        (image_size.height - 1) / 2.0, 0, 0, 1;
    c.image_size = image_size;
    return c;
  }
};

/// Regular discretization of the ground plane. Cell (i, j) is centered at
/// origin + ((i + 0.5) * cell_size, (j + 0.5) * cell_size); rows follow world
/// x and columns world y.
struct GroundGrid {
  Point2 origin{0.0, 0.0};
  double cell_size = 0.025;
  Dims dims{480, 1440};
  int downsample_r = 4;

  void validate() const {
    if (!(cell_size > 0.0)) throw InvalidConfig("cell_size must be positive");
    if (dims.height <= 0 || dims.width <= 0) {
      throw InvalidConfig("grid dims must be positive");
    }
    if (downsample_r <= 0) throw InvalidConfig("downsample_r must be positive");
  }

  Point2 cell_center(int i, int j) const {
    return {origin.x + (i + 0.5) * cell_size, origin.y + (j + 0.5) * cell_size};
  }

  Dims heatmap_dims() const {
    return {(dims.height + downsample_r - 1) / downsample_r,
            (dims.width + downsample_r - 1) / downsample_r};
  }

  /// The grid whose cells are r x r blocks of this one.
  GroundGrid heatmap_grid() const {
    GroundGrid g = *this;
    g.cell_size = cell_size * downsample_r;
    g.dims = heatmap_dims();
    g.downsample_r = 1;
    return g;
  }

  /// World meters to continuous fine-cell coordinates.
  HeatPoint world_to_fine(Point2 world) const {
    return {(world.x - origin.x) / cell_size, (world.y - origin.y) / cell_size};
  }

  bool contains(Point2 world) const {
    const HeatPoint f = world_to_fine(world);
    return f.row >= 0.0 && f.row < dims.height && f.col >= 0.0 &&
           f.col < dims.width;
  }

  Point2 extent() const {
    return {dims.height * cell_size, dims.width * cell_size};
  }

  /// 480 x 1440 cells over 12 x 36 m.
  static GroundGrid wildtrack_like() { return {{0.0, 0.0}, 0.025, {480, 1440}, 4}; }
  /// 640 x 1000 cells over 16 x 25 m.
  static GroundGrid multiviewx_like() { return {{0.0, 0.0}, 0.025, {640, 1000}, 4}; }
};

inline Mat34 perspective_matrix(const CameraCalibration& calib) {
  Mat34 rt;
  rt.leftCols<3>() = calib.rotation;
  rt.col(3) = calib.translation;
  return calib.intrinsic * rt;
}

inline Point2 world_to_image(const Mat34& proj, const Vec3& world) {
  const Vec3 h = proj * world.homogeneous();
  if (!(h.z() > kDepthEpsilon)) {
    throw PointBehindCamera("gamma = " + std::to_string(h.z()));
  }
  return {h.x() / h.z(), h.y() / h.z()};
}

inline void require_invertible(const Mat3& h) {
  const double det = h.determinant();
  if (!(std::abs(det) >= kHomographyDetEpsilon)) {
    throw DegenerateHomography("|det H| = " + std::to_string(std::abs(det)));
  }
}

/// Columns 1, 2 and 4 of P.
inline Mat3 ground_homography(const Mat34& proj) {
  Mat3 h;
  h.col(0) = proj.col(0);
  h.col(1) = proj.col(1);
  h.col(2) = proj.col(3);
  require_invertible(h);
  return h;
}

/// Same as ground_homography without the invertibility check; useful when the
/// raw column selection is wanted for inspection.
inline Mat3 ground_homography_unchecked(const Mat34& proj) {
  Mat3 h;
  h << proj.col(0), proj.col(1), proj.col(3);
  return h;
}

inline Point2 apply_homography(const Mat3& h, Point2 p) {
  const Vec3 q = h * Vec3(p.x, p.y, 1.0);
  if (!(std::abs(q.z()) >= kHorizonEpsilon)) {
    throw PointAtInfinity("dehomogenizing coordinate " + std::to_string(q.z()));
  }
  return {q.x() / q.z(), q.y() / q.z()};
}

/// Pixel to world ground position through H^-1.
inline Point2 image_to_ground(const Mat3& h, Point2 pixel) {
  require_invertible(h);
  return apply_homography(h.inverse(), pixel);
}

/// Homography for a feature map whose pixel u corresponds to image pixel
/// u * stride.
inline Mat3 feature_homography(const Mat3& h, double stride) {
  Mat3 s = Mat3::Identity();
  s(0, 0) = 1.0 / stride;
  s(1, 1) = 1.0 / stride;
  return s * h;
}

/// Resamples an image-plane map onto the ground grid. `h` maps world ground
/// meters to `fmap` pixel coordinates. Cells that project behind the camera or
/// outside [0, W) x [0, H) are zero.
inline FeatureMap project_feature_map(const FeatureMap& fmap, const Mat3& h,
                                      const GroundGrid& grid, int threads = 1) {
  if (fmap.plane() != Plane::kImage) {
    throw ShapeMismatch("project_feature_map expects an image-plane map");
  }
  require_invertible(h);
  FeatureMap out = FeatureMap::ground(fmap.channels(), grid.dims.height,
                                      grid.dims.width);
  const int w = fmap.width();
  const int hgt = fmap.height();
  parallel_for(static_cast<std::size_t>(grid.dims.height), threads,
               [&](std::size_t row) {
                 const int i = static_cast<int>(row);
                 for (int j = 0; j < grid.dims.width; ++j) {
                   const Point2 c = grid.cell_center(i, j);
                   const Vec3 q = h * Vec3(c.x, c.y, 1.0);
                   if (!(q.z() > kDepthEpsilon)) continue;
                   const Point2 px{q.x() / q.z(), q.y() / q.z()};
                   if (!(px.x >= 0.0 && px.x < w && px.y >= 0.0 && px.y < hgt)) {
                     continue;
                   }
                   const BilinearTaps t = bilinear_taps(hgt, w, px);
                   for (const Tap& tap : t.taps) {
                     if (!tap.inside || tap.weight == 0.0) continue;
                     for (int d = 0; d < fmap.channels(); ++d) {
                       out.at(d, i, j) += tap.weight * fmap.at(d, tap.row, tap.col);
                     }
                   }
                 }
               });
  return out;
}

}  // namespace mvdetr

#endif  // MVDETR_GEOMETRY_HPP_
