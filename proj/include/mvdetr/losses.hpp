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

// Keypoint heatmap targets and training losses: penalty-reduced focal loss on
// the occupancy heatmap, L1 sub-cell offset loss, L1 box-size loss, and the
// combined ground + per-view objective.

#ifndef MVDETR_LOSSES_HPP_
#define MVDETR_LOSSES_HPP_

#include <cmath>
#include <span>
#include <vector>

#include "mvdetr/augmentation.hpp"
#include "mvdetr/core.hpp"

namespace mvdetr {

inline constexpr double kScoreClamp = 1e-7;

struct LossConfig {
  double alpha = 2.0;
  double beta = 4.0;
  double box_weight = 0.1;
  double sigma_cells = 2.0;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(box_weight >= 0.0)) {
      throw InvalidConfig("alpha, beta and box_weight must be non-negative");
    }
    if (!(sigma_cells > 0.0)) throw InvalidConfig("sigma_cells must be positive");
  }
};

struct HeatmapTarget {
  Dims dims;
  std::vector<double> values;  // row-major H x W
  std::vector<Cell> peaks;     // one per counted pedestrian
  int count = 0;               // N
  int skipped = 0;             // positions outside the extent

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * dims.width + col];
  }
};

inline Cell heat_cell(HeatPoint p, int r) {
  return {static_cast<int>(std::floor(p.row / r)),
          static_cast<int>(std::floor(p.col / r))};
}

inline bool in_extent(HeatPoint p, Dims dims, int r) {
  return p.row >= 0.0 && p.col >= 0.0 && p.row < static_cast<double>(r) * dims.height &&
         p.col < static_cast<double>(r) * dims.width;
}

/// Peak at floor(p / r) for each position, Gaussian falloff in cell distance,
/// overlapping peaks merged by elementwise max. Peak cells are exactly 1.
inline HeatmapTarget gaussian_target(std::span<const HeatPoint> positions,
                                     Dims dims, int r, double sigma) {
  HeatmapTarget t;
  t.dims = dims;
  t.values.assign(static_cast<std::size_t>(dims.height) * dims.width, 0.0);
  // exp(-d^2 / 2 sigma^2) < 1e-16 beyond this radius
  const int radius = static_cast<int>(std::ceil(sigma * std::sqrt(2.0 * 37.0)));
  for (const HeatPoint& p : positions) {
    if (!in_extent(p, dims, r)) {
      ++t.skipped;
      continue;
    }
    const Cell c = heat_cell(p, r);
    t.peaks.push_back(c);
    ++t.count;
    for (int y = std::max(0, c.row - radius); y <= std::min(dims.height - 1, c.row + radius); ++y) {
      for (int x = std::max(0, c.col - radius); x <= std::min(dims.width - 1, c.col + radius); ++x) {
        const double d2 = static_cast<double>((y - c.row) * (y - c.row) +
                                              (x - c.col) * (x - c.col));
        double& v = t.values[static_cast<std::size_t>(y) * dims.width + x];
        v = std::max(v, std::exp(-d2 / (2.0 * sigma * sigma)));
      }
    }
  }
  for (const Cell& c : t.peaks) {
    t.values[static_cast<std::size_t>(c.row) * dims.width + c.col] = 1.0;
  }
  return t;
}

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // same layout as the prediction
};

inline double clamp_score(double s) {
  return std::min(1.0 - kScoreClamp, std::max(kScoreClamp, s));
}

/// Penalty-reduced focal loss, normalized by the pedestrian count N:
///   -1/N sum_p { (1-s^)^a log s^                 if s_p = 1
///              { (1-s)^b s^^a log(1-s^)           otherwise
/// `pred` must already lie in (eps, 1 - eps); see clamp_score.
inline LossValue focal_loss(std::span<const double> pred,
                            const HeatmapTarget& target, double alpha,
                            double beta) {
  if (target.count == 0) throw EmptyTarget("focal loss with N = 0");
  if (pred.size() != target.values.size()) {
    throw ShapeMismatch("prediction and target sizes differ");
  }
  // x^e with 0^0 = 1 and 0 * 0^-1 handled by the callers' multipliers.
  auto pw = [](double x, double e) { return e == 0.0 ? 1.0 : std::pow(x, e); };
  const double inv_n = 1.0 / target.count;
  LossValue out;
  out.grad.assign(pred.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double sh = pred[i];
    const double s = target.values[i];
    if (s == 1.0) {
      const double lg = std::log(sh);
      sum += pw(1.0 - sh, alpha) * lg;
      const double dpow = alpha == 0.0 ? 0.0 : alpha * pw(1.0 - sh, alpha - 1.0);
      out.grad[i] = -inv_n * (-dpow * lg + pw(1.0 - sh, alpha) / sh);
    } else {
      const double wneg = pw(1.0 - s, beta);
      const double lg = std::log(1.0 - sh);
      sum += wneg * pw(sh, alpha) * lg;
      const double dpow = alpha == 0.0 ? 0.0 : alpha * pw(sh, alpha - 1.0);
      out.grad[i] = -inv_n * wneg * (dpow * lg - pw(sh, alpha) / (1.0 - sh));
    }
  }
  out.value = -inv_n * sum;
  return out;
}

/// Fractional part lost when p is binned to floor(p / r).
inline HeatPoint offset_target(HeatPoint p, int r) {
  return {p.row / r - std::floor(p.row / r), p.col / r - std::floor(p.col / r)};
}

/// Sub-cell offset L1 loss at each pedestrian's peak cell, averaged over
/// pedestrians. `pred` is 2 x H x W with channel 0 the row offset and channel
/// 1 the column offset. Gradients are written into a map of the same shape.
struct MapLoss {
  double value = 0.0;
  FeatureMap grad;
};

inline double l1_sign(double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }

inline MapLoss offset_loss(const FeatureMap& pred,
                           std::span<const HeatPoint> positions, int r) {
  if (pred.channels() != 2) throw ShapeMismatch("offset map needs 2 channels");
  MapLoss out;
  out.grad = FeatureMap(2, pred.height(), pred.width(), pred.plane(), pred.camera());
  int n = 0;
  for (const HeatPoint& p : positions) n += in_extent(p, pred.dims(), r) ? 1 : 0;
  if (n == 0) throw EmptyTarget("offset loss with N = 0");
  const double inv_n = 1.0 / n;
  double sum = 0.0;
  for (const HeatPoint& p : positions) {
    if (!in_extent(p, pred.dims(), r)) continue;
    const Cell c = heat_cell(p, r);
    const HeatPoint t = offset_target(p, r);
    const double d0 = pred.at(0, c.row, c.col) - t.row;
    const double d1 = pred.at(1, c.row, c.col) - t.col;
    sum += std::abs(d0) + std::abs(d1);
    out.grad.at(0, c.row, c.col) += inv_n * l1_sign(d0);
    out.grad.at(1, c.row, c.col) += inv_n * l1_sign(d1);
  }
  out.value = inv_n * sum;
  return out;
}

/// Box-size L1 loss at each visible foot-point cell, averaged over visible
/// pedestrians. `pred` is 2 x H x W (height, width) on a map of stride r;
/// sizes are compared in units of that stride, i.e. ground truth pixels / r.
inline MapLoss bbox_loss(const FeatureMap& pred, const ViewAnnotations& ann,
                         int r) {
  if (pred.channels() != 2) throw ShapeMismatch("box map needs 2 channels");
  MapLoss out;
  out.grad = FeatureMap(2, pred.height(), pred.width(), pred.plane(), pred.camera());
  std::vector<std::pair<Cell, const PedestrianAnnotation*>> used;
  for (const auto& p : ann.pedestrians) {
    if (!p.visible) continue;
    const Cell c = heat_cell({p.foot.y, p.foot.x}, r);
    if (!pred.contains(c.row, c.col)) continue;
    used.emplace_back(c, &p);
  }
  if (used.empty()) throw EmptyTarget("box loss without visible pedestrians");
  const double inv_n = 1.0 / used.size();
  double sum = 0.0;
  for (const auto& [c, p] : used) {
    const double dh = pred.at(0, c.row, c.col) - p->height / r;
    const double dw = pred.at(1, c.row, c.col) - p->width / r;
    sum += std::abs(dh) + std::abs(dw);
    out.grad.at(0, c.row, c.col) += inv_n * l1_sign(dh);
    out.grad.at(1, c.row, c.col) += inv_n * l1_sign(dw);
  }
  out.value = inv_n * sum;
  return out;
}

struct GroundLossTerms {
  double det = 0.0;
  double off = 0.0;
};

struct ViewLossTerms {
  double det = 0.0;
  double off = 0.0;
  double box = 0.0;
};

/// L = det + off + (1/C) sum_c (det_c + off_c + box_weight * box_c).
inline double total_loss(const GroundLossTerms& ground,
                         std::span<const ViewLossTerms> views,
                         double box_weight = 0.1) {
  double per_view = 0.0;
  for (const auto& v : views) per_view += v.det + v.off + box_weight * v.box;
  const double c = static_cast<double>(views.size());
  return ground.det + ground.off + (views.empty() ? 0.0 : per_view / c);
}

}  // namespace mvdetr

#endif  // MVDETR_LOSSES_HPP_
