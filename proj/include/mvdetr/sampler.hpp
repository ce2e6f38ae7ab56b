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

// Bilinear sampling on dense maps with zero padding.
//
// Coordinates are continuous (x = column, y = row) with texel centers at
// integers, so sampling at an integer site returns the stored value. Texels
// outside [0, W-1] x [0, H-1] read as zero. The derivative with respect to the
// sample point is piecewise linear; on texel boundaries it is taken from the
// cell whose lower corner is floor(x), floor(y).

#ifndef MVDETR_SAMPLER_HPP_
#define MVDETR_SAMPLER_HPP_

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "mvdetr/core.hpp"

namespace mvdetr {

struct Tap {
  int row = 0;
  int col = 0;
  double weight = 0.0;
  bool inside = false;
};

/// The four texels surrounding `pt` and their bilinear weights. Order:
/// (y0,x0), (y0,x0+1), (y0+1,x0), (y0+1,x0+1).
struct BilinearTaps {
  std::array<Tap, 4> taps;
  double fx = 0.0;
  double fy = 0.0;
};

inline BilinearTaps bilinear_taps(int height, int width, Point2 pt) {
  const double xf = std::floor(pt.x);
  const double yf = std::floor(pt.y);
  BilinearTaps t;
  t.fx = pt.x - xf;
  t.fy = pt.y - yf;
  // Far outside the map every tap is padding; avoid int overflow on the casts.
  if (xf < -2.0 || yf < -2.0 || xf > width + 1.0 || yf > height + 1.0) {
    return t;
  }
  const int x0 = static_cast<int>(xf);
  const int y0 = static_cast<int>(yf);
  const double w[4] = {(1 - t.fx) * (1 - t.fy), t.fx * (1 - t.fy),
                       (1 - t.fx) * t.fy, t.fx * t.fy};
  const int rows[4] = {y0, y0, y0 + 1, y0 + 1};
  const int cols[4] = {x0, x0 + 1, x0, x0 + 1};
  for (int i = 0; i < 4; ++i) {
    t.taps[i].row = rows[i];
    t.taps[i].col = cols[i];
    t.taps[i].weight = w[i];
    t.taps[i].inside =
        rows[i] >= 0 && rows[i] < height && cols[i] >= 0 && cols[i] < width;
  }
  return t;
}

/// Writes the D-vector sample at `pt` into `out` (size D).
inline void bilinear_sample(const FeatureMap& map, Point2 pt,
                            std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const BilinearTaps t = bilinear_taps(map.height(), map.width(), pt);
  for (const Tap& tap : t.taps) {
    if (!tap.inside || tap.weight == 0.0) continue;
    for (int d = 0; d < map.channels(); ++d) {
      out[d] += tap.weight * map.at(d, tap.row, tap.col);
    }
  }
}

inline std::vector<double> bilinear_sample(const FeatureMap& map, Point2 pt) {
  std::vector<double> out(map.channels());
  bilinear_sample(map, pt, out);
  return out;
}

/// Single-channel convenience.
inline double bilinear_sample(const FeatureMap& map, int channel, Point2 pt) {
  double v = 0.0;
  const BilinearTaps t = bilinear_taps(map.height(), map.width(), pt);
  for (const Tap& tap : t.taps) {
    if (tap.inside) v += tap.weight * map.at(channel, tap.row, tap.col);
  }
  return v;
}

/// Gradient of <upstream, sample(map, pt)>. `taps` carries the map gradient
/// sparsely: texel (row, col) receives weight * upstream[d] in channel d.
struct SampleGrad {
  BilinearTaps taps;
  Point2 grad_pt;
};

inline SampleGrad bilinear_sample_backward(const FeatureMap& map, Point2 pt,
                                           std::span<const double> upstream) {
  SampleGrad g;
  g.taps = bilinear_taps(map.height(), map.width(), pt);
  const auto& tp = g.taps.taps;
  const double fx = g.taps.fx;
  const double fy = g.taps.fy;
  double gx = 0.0;
  double gy = 0.0;
  for (int d = 0; d < map.channels(); ++d) {
    double v[4];
    for (int i = 0; i < 4; ++i) {
      v[i] = tp[i].inside ? map.at(d, tp[i].row, tp[i].col) : 0.0;
    }
    const double dx = (1 - fy) * (v[1] - v[0]) + fy * (v[3] - v[2]);
    const double dy = (1 - fx) * (v[2] - v[0]) + fx * (v[3] - v[1]);
    gx += upstream[d] * dx;
    gy += upstream[d] * dy;
  }
  g.grad_pt = {gx, gy};
  return g;
}

/// Scatters the map part of a sample gradient into `grad_map`, scaled by
/// `upstream`.
inline void scatter_sample_grad(const BilinearTaps& taps,
                                std::span<const double> upstream,
                                FeatureMap& grad_map) {
  for (const Tap& tap : taps.taps) {
    if (!tap.inside || tap.weight == 0.0) continue;
    for (int d = 0; d < grad_map.channels(); ++d) {
      grad_map.at(d, tap.row, tap.col) += tap.weight * upstream[d];
    }
  }
}

}  // namespace mvdetr

#endif  // MVDETR_SAMPLER_HPP_
