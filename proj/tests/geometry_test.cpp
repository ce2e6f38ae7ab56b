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

#include "mvdetr/geometry.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace mvdetr {
namespace {

CameraCalibration example_camera() {
  CameraCalibration c;
  c.intrinsic << 1000, 0, 640, 0, 1000, 360, 0, 0, 1;
  c.rotation.setIdentity();
  c.translation = Vec3(0, 0, 5);
  c.image_size = {720, 1280};
  return c;
}

CameraCalibration random_camera(Rng& rng) {
  const double ang = rng.uniform(0.0, 2 * M_PI);
  const double dist = rng.uniform(8.0, 20.0);
  const Vec3 target(rng.uniform(2.0, 10.0), rng.uniform(2.0, 10.0), 0.0);
  const Vec3 eye = target + Vec3(dist * std::cos(ang), dist * std::sin(ang),
                                 rng.uniform(3.0, 12.0));
  return CameraCalibration::look_at(eye, target, rng.uniform(400.0, 1200.0),
                                    {720, 1280});
}

TEST(PerspectiveMatrix, ComposesIntrinsicAndExtrinsic) {
  const Mat34 p = perspective_matrix(example_camera());
  Mat34 expect;
  expect << 1000, 0, 640, 3200, 0, 1000, 360, 1800, 0, 0, 1, 5;
  EXPECT_EQ(p, expect);
}

TEST(PerspectiveMatrix, IdentityCamera) {
  CameraCalibration c;
  Mat34 expect = Mat34::Zero();
  expect.leftCols<3>().setIdentity();
  EXPECT_EQ(perspective_matrix(c), expect);
}

TEST(PerspectiveMatrix, ScalingFocalScalesImageRows) {
  CameraCalibration c = example_camera();
  const Mat34 p = perspective_matrix(c);
  c.intrinsic.topRows<2>() *= 2.0;
  const Mat34 q = perspective_matrix(c);
  EXPECT_EQ(q.topRows<2>(), 2.0 * p.topRows<2>());
  EXPECT_EQ(q.row(2), p.row(2));
}

TEST(CameraCalibration, ValidateRejectsBadMatrices) {
  CameraCalibration c = example_camera();
  EXPECT_NO_THROW(c.validate());
  c.rotation(0, 1) = 0.1;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = example_camera();
  c.intrinsic(2, 2) = 2.0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = example_camera();
  c.rotation = -Mat3::Identity();
  EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(WorldToImage, PrincipalPointAndOffset) {
  const Mat34 p = perspective_matrix(example_camera());
  const Point2 a = world_to_image(p, {0, 0, 0});
  EXPECT_DOUBLE_EQ(a.x, 640);
  EXPECT_DOUBLE_EQ(a.y, 360);
  const Point2 b = world_to_image(p, {1, 0, 0});
  EXPECT_DOUBLE_EQ(b.x, 840);
  EXPECT_DOUBLE_EQ(b.y, 360);
}

TEST(WorldToImage, BehindCamera) {
  Mat34 p = Mat34::Zero();
  p.leftCols<3>().setIdentity();
  EXPECT_THROW(world_to_image(p, {0, 0, -1}), PointBehindCamera);
  EXPECT_THROW(world_to_image(p, {0, 0, 0}), PointBehindCamera);
}

TEST(GroundHomography, ColumnSelection) {
  const Mat3 h = ground_homography(perspective_matrix(example_camera()));
  Mat3 expect;
  expect << 1000, 0, 3200, 0, 1000, 1800, 0, 0, 5;
  EXPECT_EQ(h, expect);
}

TEST(GroundHomography, DegenerateCamera) {
  Mat34 p = Mat34::Zero();
  p.leftCols<3>().setIdentity();
  EXPECT_THROW(ground_homography(p), DegenerateHomography);
  Mat3 raw = ground_homography_unchecked(p);
  EXPECT_EQ(raw.determinant(), 0.0);
}

TEST(ImageToGround, InvertsExample) {
  const Mat3 h = ground_homography(perspective_matrix(example_camera()));
  const Point2 a = image_to_ground(h, {840, 360});
  EXPECT_NEAR(a.x, 1.0, 1e-12);
  EXPECT_NEAR(a.y, 0.0, 1e-12);
  const Point2 b = image_to_ground(h, {640, 360});
  EXPECT_NEAR(b.x, 0.0, 1e-12);
  EXPECT_NEAR(b.y, 0.0, 1e-12);
}

TEST(ImageToGround, HorizonPixelIsAtInfinity) {
  // A tilted camera sees the horizon where the third row of H^-1 vanishes.
  const CameraCalibration c =
      CameraCalibration::look_at({0, -10, 3}, {0, 0, 0}, 800, {720, 1280});
  const Mat3 h = ground_homography(perspective_matrix(c));
  const Vec3 row = h.inverse().row(2);
  const double u = 300.0;
  const double v = -(row.x() * u + row.z()) / row.y();
  EXPECT_THROW(image_to_ground(h, {u, v}), PointAtInfinity);
  EXPECT_NO_THROW(image_to_ground(h, {u, v + 50.0}));
}

TEST(GeometryProperty, HomographyAgreesWithProjection) {
  Rng rng(11);
  for (int cam = 0; cam < 10; ++cam) {
    const CameraCalibration c = random_camera(rng);
    const Mat34 p = perspective_matrix(c);
    const Mat3 h = ground_homography(p);
    for (int i = 0; i < 100; ++i) {
      const Vec3 g(rng.uniform(0.0, 12.0), rng.uniform(0.0, 12.0), 0.0);
      if (!((p * g.homogeneous()).z() > kDepthEpsilon)) continue;
      const Point2 a = world_to_image(p, g);
      const Point2 b = apply_homography(h, {g.x(), g.y()});
      EXPECT_NEAR(a.x, b.x, 1e-9 * std::max(1.0, std::abs(a.x)));
      EXPECT_NEAR(a.y, b.y, 1e-9 * std::max(1.0, std::abs(a.y)));
    }
  }
}

TEST(GeometryProperty, RoundTripOnVisibleGroundPoints) {
  Rng rng(5);
  const CameraCalibration c = random_camera(rng);
  const Mat34 p = perspective_matrix(c);
  const Mat3 h = ground_homography(p);
  int checked = 0;
  while (checked < 100) {
    const Vec3 g(rng.uniform(-5.0, 15.0), rng.uniform(-5.0, 15.0), 0.0);
    if (!((p * g.homogeneous()).z() > kDepthEpsilon)) continue;
    const Point2 px = world_to_image(p, g);
    if (!(px.x >= 0 && px.x < c.image_size.width && px.y >= 0 &&
          px.y < c.image_size.height)) {
      continue;
    }
    const Point2 back = image_to_ground(h, px);
    EXPECT_LT(std::hypot(back.x - g.x(), back.y - g.y()), 1e-6);
    ++checked;
  }
}

TEST(GroundGrid, CellCentersAndHeatmapDims) {
  GroundGrid g{{1.0, -2.0}, 0.5, {10, 7}, 4};
  const Point2 c = g.cell_center(2, 3);
  EXPECT_DOUBLE_EQ(c.x, 1.0 + 2.5 * 0.5);
  EXPECT_DOUBLE_EQ(c.y, -2.0 + 3.5 * 0.5);
  EXPECT_EQ(g.heatmap_dims(), (Dims{3, 2}));
  const GroundGrid hm = g.heatmap_grid();
  EXPECT_DOUBLE_EQ(hm.cell_size, 2.0);
  EXPECT_EQ(GroundGrid::wildtrack_like().dims, (Dims{480, 1440}));
  EXPECT_DOUBLE_EQ(GroundGrid::wildtrack_like().extent().y, 36.0);
  EXPECT_DOUBLE_EQ(GroundGrid::multiviewx_like().extent().x, 16.0);
}

// Ground (x, y) -> pixel (u, v) = (y - 0.5, x - 0.5): with unit cells each
// ground cell center lands exactly on pixel (col = j, row = i).
Mat3 aligned_homography() {
  Mat3 h;
  h << 0, 1, -0.5, 1, 0, -0.5, 0, 0, 1;
  return h;
}

TEST(ProjectFeatureMap, AlignedGridIsACrop) {
  Rng rng(3);
  const FeatureMap img = testing::random_map(rng, 2, 6, 8, Plane::kImage);
  const GroundGrid grid{{0.0, 0.0}, 1.0, {4, 5}, 1};
  const FeatureMap g = project_feature_map(img, aligned_homography(), grid);
  ASSERT_EQ(g.dims(), (Dims{4, 5}));
  EXPECT_EQ(g.plane(), Plane::kGround);
  for (int d = 0; d < 2; ++d) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 5; ++j) EXPECT_EQ(g.at(d, i, j), img.at(d, i, j));
    }
  }
}

TEST(ProjectFeatureMap, ImpulseResponse) {
  FeatureMap img = FeatureMap::image(1, 6, 8, 0);
  img.at(0, 2, 3) = 1.0;
  const GroundGrid grid{{0.0, 0.0}, 1.0, {6, 8}, 1};
  const FeatureMap g = project_feature_map(img, aligned_homography(), grid);
  EXPECT_EQ(g.at(0, 2, 3), 1.0);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 8; ++j) {
      if (i != 2 || j != 3) {
        EXPECT_LT(g.at(0, i, j), 1.0);
      }
    }
  }
}

TEST(ProjectFeatureMap, ConstantMapFillsFootprintOnly) {
  const CameraCalibration c =
      CameraCalibration::look_at({6, -8, 6}, {6, 6, 0}, 300, {120, 160});
  const Mat3 h = ground_homography(perspective_matrix(c));
  FeatureMap img = FeatureMap::image(1, 120, 160, 0);
  img.fill(2.5);
  const GroundGrid grid{{0.0, 0.0}, 0.25, {48, 48}, 1};
  const FeatureMap g = project_feature_map(img, h, grid);
  int inside = 0, outside = 0;
  for (int i = 0; i < 48; ++i) {
    for (int j = 0; j < 48; ++j) {
      const Point2 w = grid.cell_center(i, j);
      const Vec3 q = h * Vec3(w.x, w.y, 1.0);
      const bool visible = q.z() > 0 && q.x() / q.z() >= 0 && q.x() / q.z() < 160 &&
                           q.y() / q.z() >= 0 && q.y() / q.z() < 120;
      const double v = g.at(0, i, j);
      if (visible) {
        // Pixels in the last half texel blend with zero padding.
        const double u = q.x() / q.z(), vv = q.y() / q.z();
        if (u <= 159 && vv <= 119) {
          EXPECT_NEAR(v, 2.5, 1e-12);
          ++inside;
        }
      } else {
        EXPECT_EQ(v, 0.0);
        ++outside;
      }
    }
  }
  EXPECT_GT(inside, 0);
  EXPECT_GT(outside, 0);
}

TEST(ProjectFeatureMap, RejectsGroundInputAndDegenerateH) {
  const FeatureMap ground = FeatureMap::ground(1, 3, 3);
  const GroundGrid grid{{0.0, 0.0}, 1.0, {3, 3}, 1};
  EXPECT_THROW(project_feature_map(ground, aligned_homography(), grid), ShapeMismatch);
  const FeatureMap img = FeatureMap::image(1, 3, 3, 0);
  EXPECT_THROW(project_feature_map(img, Mat3::Zero(), grid), DegenerateHomography);
}

TEST(ProjectFeatureMapProperty, Linear) {
  Rng rng(99);
  const CameraCalibration c =
      CameraCalibration::look_at({5, -6, 5}, {5, 5, 0}, 200, {60, 80});
  const Mat3 h = ground_homography(perspective_matrix(c));
  const GroundGrid grid{{0.0, 0.0}, 0.5, {20, 20}, 1};
  for (int t = 0; t < 5; ++t) {
    const FeatureMap f = testing::random_map(rng, 3, 60, 80, Plane::kImage);
    const FeatureMap g = testing::random_map(rng, 3, 60, 80, Plane::kImage);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    FeatureMap mix = FeatureMap::image(3, 60, 80, 0);
    for (std::size_t i = 0; i < mix.size(); ++i) {
      mix.values()[i] = a * f.values()[i] + b * g.values()[i];
    }
    const FeatureMap pf = project_feature_map(f, h, grid);
    const FeatureMap pg = project_feature_map(g, h, grid);
    const FeatureMap pm = project_feature_map(mix, h, grid, 3);
    for (std::size_t i = 0; i < pm.size(); ++i) {
      EXPECT_NEAR(pm.values()[i], a * pf.values()[i] + b * pg.values()[i], 1e-9);
    }
  }
}

TEST(ProjectFeatureMap, ThreadCountDoesNotChangeResult) {
  Rng rng(1);
  const CameraCalibration c =
      CameraCalibration::look_at({5, -6, 5}, {5, 5, 0}, 200, {60, 80});
  const Mat3 h = ground_homography(perspective_matrix(c));
  const GroundGrid grid{{0.0, 0.0}, 0.5, {20, 20}, 1};
  const FeatureMap f = testing::random_map(rng, 2, 60, 80, Plane::kImage);
  const FeatureMap a = project_feature_map(f, h, grid, 1);
  const FeatureMap b = project_feature_map(f, h, grid, 4);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

}  // namespace
}  // namespace mvdetr
