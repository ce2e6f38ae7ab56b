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

// Heatmap decoding and ground-plane detection metrics (MODA, MODP, precision,
// recall) with distance-thresholded optimal one-to-one matching.

#ifndef MVDETR_DECODE_EVAL_HPP_
#define MVDETR_DECODE_EVAL_HPP_

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvdetr/core.hpp"
#include "mvdetr/geometry.hpp"

namespace mvdetr {

inline constexpr double kMatchThreshold = 0.5;  // meters

struct Detection {
  Point2 position;  // meters
  double score = 0.0;
};

struct DecodeConfig {
  double score_thresh = 0.4;
  int max_det = 200;
  int window = 3;  // odd NMS window
};

/// Keeps cells that are maxima of their window (equal neighbours with a
/// smaller row-major index win ties), thresholds, and returns the best
/// max_det by score. Cell (i, j) with offset o decodes to
///   origin + ((i + o_row) * r * cell_size, (j + o_col) * r * cell_size).
inline std::vector<Detection> decode_heatmap(const FeatureMap& score,
                                             const FeatureMap& offset,
                                             const GroundGrid& grid,
                                             const DecodeConfig& cfg = {}) {
  if (score.channels() != 1 || offset.channels() != 2 ||
      score.dims() != offset.dims()) {
    throw ShapeMismatch("decode expects a 1-channel score and 2-channel offset map");
  }
  if (score.dims() != grid.heatmap_dims()) {
    throw ShapeMismatch("heatmap dims do not match the grid");
  }
  if (cfg.window < 1 || cfg.window % 2 == 0) {
    throw InvalidConfig("NMS window must be a positive odd size");
  }
  const int half = cfg.window / 2;
  const int h = score.height();
  const int w = score.width();
  struct Peak {
    double score;
    int index;
  };
  std::vector<Peak> peaks;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = score.at(0, y, x);
      if (!(v >= cfg.score_thresh)) continue;
      const int idx = y * w + x;
      bool keep = true;
      for (int dy = -half; dy <= half && keep; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          if ((dy == 0 && dx == 0) || !score.contains(y + dy, x + dx)) continue;
          const double u = score.at(0, y + dy, x + dx);
          const int nidx = (y + dy) * w + (x + dx);
          if (u > v || (u == v && nidx < idx)) {
            keep = false;
            break;
          }
        }
      }
      if (keep) peaks.push_back({v, idx});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return a.score > b.score;
  });
  if (static_cast<int>(peaks.size()) > cfg.max_det) peaks.resize(std::max(0, cfg.max_det));
  std::vector<Detection> dets;
  dets.reserve(peaks.size());
  const double step = grid.downsample_r * grid.cell_size;
  for (const Peak& p : peaks) {
    const int i = p.index / w;
    const int j = p.index % w;
    dets.push_back({{grid.origin.x + (i + offset.at(0, i, j)) * step,
                     grid.origin.y + (j + offset.at(1, i, j)) * step},
                    p.score});
  }
  return dets;
}

// ---------------------------------------------------------------------------
// Assignment.
// ---------------------------------------------------------------------------

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with potentials, O(n^3)). Returns row_to_col.
inline std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

struct MatchPair {
  int det = 0;
  int gt = 0;
  double distance = 0.0;
};

struct Matching {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_dets;
  std::vector<int> unmatched_gts;

  double total_distance() const {
    double s = 0.0;
    for (const auto& p : pairs) s += p.distance;
    return s;
  }
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// One-to-one matching that first maximizes the number of pairs within
/// `threshold` and then minimizes their total distance. Pairs farther than
/// the threshold are never matched.
inline Matching match_detections(std::span<const Point2> dets,
                                 std::span<const Point2> gts,
                                 double threshold = kMatchThreshold) {
  const int nd = static_cast<int>(dets.size());
  const int ng = static_cast<int>(gts.size());
  const int n = std::max(nd, ng);
  // Every forbidden pairing costs more than any set of admissible pairs.
  const double forbidden = (n + 1) * (threshold + 1.0) * 1e3;
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, forbidden));
  for (int i = 0; i < nd; ++i) {
    for (int j = 0; j < ng; ++j) {
      const double d = distance(dets[i], gts[j]);
      if (d <= threshold) cost[i][j] = d;
    }
  }
  const std::vector<int> assign = solve_assignment(cost);
  Matching m;
  std::vector<char> gt_used(ng, 0);
  for (int i = 0; i < nd; ++i) {
    const int j = assign[i];
    if (j >= 0 && j < ng && cost[i][j] < forbidden) {
      m.pairs.push_back({i, j, cost[i][j]});
      gt_used[j] = 1;
    } else {
      m.unmatched_dets.push_back(i);
    }
  }
  for (int j = 0; j < ng; ++j) {
    if (!gt_used[j]) m.unmatched_gts.push_back(j);
  }
  return m;
}

inline Matching match_detections(std::span<const Detection> dets,
                                 std::span<const Point2> gts,
                                 double threshold = kMatchThreshold) {
  std::vector<Point2> pos;
  pos.reserve(dets.size());
  for (const auto& d : dets) pos.push_back(d.position);
  return match_detections(std::span<const Point2>(pos), gts, threshold);
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

struct Frame {
  int id = 0;
  std::vector<Detection> dets;
  std::vector<Point2> gts;
};

struct FrameResult {
  int id = 0;
  Matching matching;
};

struct EvalReport {
  double moda = 0.0;
  double modp = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long num_gt = 0;
  std::vector<FrameResult> frames;
};

/// MODA = 1 - (FP + FN) / N_gt;  MODP = sum over matches of (1 - d / t) / TP.
inline EvalReport evaluate(std::span<const Frame> frames,
                           double threshold = kMatchThreshold, int threads = 1) {
  EvalReport r;
  r.frames.resize(frames.size());
  parallel_for(frames.size(), threads, [&](std::size_t i) {
    r.frames[i] = {frames[i].id,
                   match_detections(std::span<const Detection>(frames[i].dets),
                                    frames[i].gts, threshold)};
  });
  double quality = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Matching& m = r.frames[i].matching;
    r.tp += static_cast<long>(m.pairs.size());
    r.fp += static_cast<long>(m.unmatched_dets.size());
    r.fn += static_cast<long>(m.unmatched_gts.size());
    r.num_gt += static_cast<long>(frames[i].gts.size());
    for (const auto& p : m.pairs) quality += 1.0 - p.distance / threshold;
  }
  if (r.num_gt == 0) throw NoGroundTruth("no ground-truth pedestrians in any frame");
  r.moda = 1.0 - static_cast<double>(r.fp + r.fn) / r.num_gt;
  r.modp = r.tp > 0 ? quality / r.tp : 0.0;
  r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 1.0;
  r.recall = static_cast<double>(r.tp) / (r.tp + r.fn);
  return r;
}

// ---------------------------------------------------------------------------
// Interchange files: one record per line,
//   detections:    <frame> <x_m> <y_m> <score>
//   ground truth:  <frame> <x_m> <y_m>
// whitespace separated; blank lines and lines starting with '#' are ignored.
// ---------------------------------------------------------------------------

inline std::map<int, std::vector<Detection>> read_detections(std::istream& in) {
  std::map<int, std::vector<Detection>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    int frame = 0;
    Detection d;
    std::string extra;
    if (!(ss >> frame >> d.position.x >> d.position.y >> d.score) || (ss >> extra)) {
      throw FormatError("detection line " + std::to_string(lineno) +
                        ": expected <frame> <x> <y> <score>");
    }
    out[frame].push_back(d);
  }
  return out;
}

inline std::map<int, std::vector<Point2>> read_ground_truth(std::istream& in) {
  std::map<int, std::vector<Point2>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    int frame = 0;
    Point2 p;
    std::string extra;
    if (!(ss >> frame >> p.x >> p.y) || (ss >> extra)) {
      throw FormatError("ground-truth line " + std::to_string(lineno) +
                        ": expected <frame> <x> <y>");
    }
    out[frame].push_back(p);
  }
  return out;
}

inline void write_detections(std::ostream& out, int frame,
                             std::span<const Detection> dets) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& d : dets) {
    out << frame << ' ' << d.position.x << ' ' << d.position.y << ' ' << d.score
        << '\n';
  }
  out.precision(old);
}

inline void write_ground_truth(std::ostream& out, int frame,
                               std::span<const Point2> gts) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : gts) out << frame << ' ' << p.x << ' ' << p.y << '\n';
  out.precision(old);
}

/// Pairs detections and ground truth by frame id (union of ids, ascending).
inline std::vector<Frame> join_frames(
    const std::map<int, std::vector<Detection>>& dets,
    const std::map<int, std::vector<Point2>>& gts) {
  std::map<int, Frame> frames;
  for (const auto& [id, d] : dets) {
    frames[id].id = id;
    frames[id].dets = d;
  }
  for (const auto& [id, g] : gts) {
    frames[id].id = id;
    frames[id].gts = g;
  }
  std::vector<Frame> out;
  for (auto& [id, f] : frames) out.push_back(std::move(f));
  return out;
}

}  // namespace mvdetr

#endif  // MVDETR_DECODE_EVAL_HPP_
