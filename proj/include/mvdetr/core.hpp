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

#ifndef MVDETR_CORE_HPP_
#define MVDETR_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mvdetr {

// ---------------------------------------------------------------------------
// Errors. Each failure mode named by the library contract has its own type so
// callers can catch exactly what they are prepared to handle.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MVDETR_DEFINE_ERROR(Name)                    \
  class Name : public Error {                        \
   public:                                           \
    explicit Name(const std::string& what)           \
        : Error(std::string(#Name ": ") + what) {}   \
  }

MVDETR_DEFINE_ERROR(PointBehindCamera);
MVDETR_DEFINE_ERROR(DegenerateHomography);
MVDETR_DEFINE_ERROR(PointAtInfinity);
MVDETR_DEFINE_ERROR(ShapeMismatch);
MVDETR_DEFINE_ERROR(InvalidConfig);
MVDETR_DEFINE_ERROR(EmptyTarget);
MVDETR_DEFINE_ERROR(NoGroundTruth);
MVDETR_DEFINE_ERROR(InfeasibleScene);
MVDETR_DEFINE_ERROR(DivergedLoss);
MVDETR_DEFINE_ERROR(FormatError);

#undef MVDETR_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Small value types.
// ---------------------------------------------------------------------------

/// Continuous 2-D point. On dense maps x is the column and y the row, with
/// texel centers at integer coordinates.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Continuous heatmap position in "fine" units: the heatmap cell holding it is
/// (floor(row / r), floor(col / r)).
struct HeatPoint {
  double row = 0.0;
  double col = 0.0;
};

struct Cell {
  int row = 0;
  int col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct Dims {
  int height = 0;
  int width = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

enum class Plane { kImage, kGround };

/// Dense D x H x W map, channel-major. `camera` is meaningful only for image
/// maps and records which view the map belongs to.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, Plane plane = Plane::kGround,
             int camera = -1)
      : channels_(channels),
        height_(height),
        width_(width),
        plane_(plane),
        camera_(camera),
        values_(static_cast<std::size_t>(channels) * height * width, 0.0) {
    if (channels < 0 || height < 0 || width < 0) {
      throw ShapeMismatch("negative feature map extent");
    }
  }

  static FeatureMap image(int channels, int height, int width, int camera) {
    return FeatureMap(channels, height, width, Plane::kImage, camera);
  }
  static FeatureMap ground(int channels, int height, int width) {
    return FeatureMap(channels, height, width, Plane::kGround, -1);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  Dims dims() const { return {height_, width_}; }
  Plane plane() const { return plane_; }
  int camera() const { return camera_; }
  std::size_t size() const { return values_.size(); }

  void set_plane(Plane plane, int camera = -1) {
    plane_ = plane;
    camera_ = camera;
  }

  double& at(int d, int y, int x) { return values_[index(d, y, x)]; }
  double at(int d, int y, int x) const { return values_[index(d, y, x)]; }

  std::size_t index(int d, int y, int x) const {
    return (static_cast<std::size_t>(d) * height_ + y) * width_ + x;
  }
  bool contains(int y, int x) const {
    return y >= 0 && y < height_ && x >= 0 && x < width_;
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// Channel vector at an integer site.
  std::vector<double> pixel(int y, int x) const {
    std::vector<double> out(channels_);
    for (int d = 0; d < channels_; ++d) out[d] = at(d, y, x);
    return out;
  }

  bool same_shape(const FeatureMap& other) const {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  Plane plane_ = Plane::kGround;
  int camera_ = -1;
  std::vector<double> values_;
};

inline void require_same_shapes(std::span<const FeatureMap> maps,
                                const char* what) {
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (!maps[i].same_shape(maps[0])) {
      throw ShapeMismatch(std::string(what) + ": map " + std::to_string(i) +
                          " differs in shape from map 0");
    }
  }
}

// ---------------------------------------------------------------------------
// Deterministic random numbers. The standard distributions are
// implementation-defined, so uniform draws are built from raw 64-bit output.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // splitmix64
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Independent stream derived from this one.
  Rng fork(std::uint64_t salt) {
    return Rng(next_u64() ^ (salt * 0xd1b54a32d192ed03ULL));
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Parallel loops. Work is split into a fixed number of contiguous chunks that
// does not depend on the thread count, and reductions merge chunk results in
// chunk order, so results are identical for any thread count.
// ---------------------------------------------------------------------------

inline int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs body(chunk_begin, chunk_end, chunk_index) over [0, n) using at most
/// `threads` workers.
inline void parallel_chunks(
    std::size_t n, int num_chunks, int threads,
    const std::function<void(std::size_t, std::size_t, int)>& body) {
  if (n == 0) return;
  num_chunks = std::max(1, std::min<int>(num_chunks, static_cast<int>(n)));
  auto chunk_range = [&](int c) {
    const std::size_t b = n * c / num_chunks;
    const std::size_t e = n * (c + 1) / num_chunks;
    return std::pair{b, e};
  };
  threads = std::max(1, std::min(threads, num_chunks));
  if (threads == 1) {
    for (int c = 0; c < num_chunks; ++c) {
      auto [b, e] = chunk_range(c);
      body(b, e, c);
    }
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int c = t; c < num_chunks; c += threads) {
        auto [b, e] = chunk_range(c);
        body(b, e, c);
      }
    });
  }
  for (auto& th : pool) th.join();
}

inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& body) {
  parallel_chunks(n, 64, threads, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) body(i);
  });
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace mvdetr

#endif  // MVDETR_CORE_HPP_
