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

#include "mvdetr/sampler.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace mvdetr {
namespace {

FeatureMap two_by_two() {
  FeatureMap m = FeatureMap::ground(1, 2, 2);
  m.at(0, 0, 0) = 0;
  m.at(0, 0, 1) = 1;
  m.at(0, 1, 0) = 2;
  m.at(0, 1, 1) = 3;
  return m;
}

TEST(BilinearSample, AverageOfFourCorners) {
  EXPECT_DOUBLE_EQ(bilinear_sample(two_by_two(), {0.5, 0.5})[0], 1.5);
}

TEST(BilinearSample, IntegerSiteReturnsStoredValue) {
  EXPECT_EQ(bilinear_sample(two_by_two(), {1.0, 0.0})[0], 1.0);
  EXPECT_EQ(bilinear_sample(two_by_two(), {1.0, 1.0})[0], 3.0);
}

TEST(BilinearSample, ZeroPadding) {
  EXPECT_EQ(bilinear_sample(two_by_two(), {-5.0, -5.0})[0], 0.0);
  EXPECT_EQ(bilinear_sample(two_by_two(), {1e12, 3.0})[0], 0.0);
  // Half a texel past the edge blends with padding.
  EXPECT_DOUBLE_EQ(bilinear_sample(two_by_two(), {1.5, 0.0})[0], 0.5);
}

TEST(BilinearSampleBackward, PointGradientMatchesFiniteDifference) {
  const FeatureMap m = two_by_two();
  const std::vector<double> up{1.0};
  const SampleGrad g = bilinear_sample_backward(m, {0.5, 0.5}, up);
  // Central differences with h = 1e-6 on the forward op give (1, 2).
  const double h = 1e-6;
  const double fd_x = (bilinear_sample(m, {0.5 + h, 0.5})[0] -
                       bilinear_sample(m, {0.5 - h, 0.5})[0]) / (2 * h);
  const double fd_y = (bilinear_sample(m, {0.5, 0.5 + h})[0] -
                       bilinear_sample(m, {0.5, 0.5 - h})[0]) / (2 * h);
  EXPECT_NEAR(fd_x, 1.0, 1e-8);
  EXPECT_NEAR(fd_y, 2.0, 1e-8);
  EXPECT_DOUBLE_EQ(g.grad_pt.x, 1.0);
  EXPECT_DOUBLE_EQ(g.grad_pt.y, 2.0);
}

TEST(BilinearSampleBackward, FarPaddingHasNoGradient) {
  const std::vector<double> up{1.0};
  const SampleGrad g = bilinear_sample_backward(two_by_two(), {-5.3, -7.1}, up);
  EXPECT_EQ(g.grad_pt.x, 0.0);
  EXPECT_EQ(g.grad_pt.y, 0.0);
  for (const Tap& t : g.taps.taps) EXPECT_FALSE(t.inside);
}

TEST(BilinearSampleBackward, InteriorWeightsSumToUpstream) {
  const std::vector<double> up{2.5};
  const SampleGrad g = bilinear_sample_backward(two_by_two(), {0.3, 0.8}, up);
  FeatureMap grad = FeatureMap::ground(1, 2, 2);
  scatter_sample_grad(g.taps, up, grad);
  double sum = 0.0;
  for (double v : grad.values()) sum += v;
  EXPECT_NEAR(sum, 2.5, 1e-15);
}

TEST(BilinearSampleBackward, BoundaryUsesLowerCell) {
  // At x = 1 exactly, the x-derivative comes from the cell [1, 2].
  FeatureMap m = FeatureMap::ground(1, 1, 3);
  m.at(0, 0, 0) = 0;
  m.at(0, 0, 1) = 1;
  m.at(0, 0, 2) = 5;
  const std::vector<double> up{1.0};
  EXPECT_DOUBLE_EQ(bilinear_sample_backward(m, {1.0, 0.0}, up).grad_pt.x, 4.0);
}

TEST(BilinearSampleProperty, ConstantMapIsFixedPoint) {
  Rng rng(7);
  FeatureMap m = FeatureMap::ground(3, 6, 5);
  m.fill(0.75);
  for (int t = 0; t < 200; ++t) {
    const Point2 p{rng.uniform(0.0, 4.0), rng.uniform(0.0, 5.0)};
    const auto v = bilinear_sample(m, p);
    for (double x : v) EXPECT_NEAR(x, 0.75, 1e-15);
    const std::vector<double> up{1.0, -2.0, 0.5};
    const SampleGrad g = bilinear_sample_backward(m, p, up);
    EXPECT_EQ(g.grad_pt.x, 0.0);
    EXPECT_EQ(g.grad_pt.y, 0.0);
  }
}

TEST(BilinearSampleProperty, GradcheckRandomMaps) {
  Rng rng(2024);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(4));
    const int hh = 2 + static_cast<int>(rng.below(7));
    const int ww = 2 + static_cast<int>(rng.below(7));
    FeatureMap m = testing::random_map(rng, d, hh, ww);
    Point2 p;
    do {
      p = {rng.uniform(0.0, ww - 1.0), rng.uniform(0.0, hh - 1.0)};
    } while (testing::frac_distance(p.x) < 0.1 || testing::frac_distance(p.y) < 0.1);
    std::vector<double> up(d);
    for (double& u : up) u = rng.uniform(-1.0, 1.0);

    auto objective = [&] {
      const auto v = bilinear_sample(m, p);
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += up[k] * v[k];
      return s;
    };
    const SampleGrad g = bilinear_sample_backward(m, p, up);
    FeatureMap grad_map = FeatureMap::ground(d, hh, ww);
    scatter_sample_grad(g.taps, up, grad_map);

    const auto fd_map = testing::numeric_gradient(m.values(), objective, h);
    EXPECT_LT(testing::relative_error(grad_map.values(), fd_map), 1e-6);

    double coords[2] = {p.x, p.y};
    auto objective_pt = [&] {
      p = {coords[0], coords[1]};
      return objective();
    };
    const auto fd_pt = testing::numeric_gradient(coords, objective_pt, h);
    const double an_pt[2] = {g.grad_pt.x, g.grad_pt.y};
    EXPECT_LT(testing::relative_error(an_pt, fd_pt), 1e-6) << "trial " << trial;
  }
}

}  // namespace
}  // namespace mvdetr
