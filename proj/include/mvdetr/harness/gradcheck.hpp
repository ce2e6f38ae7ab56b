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

// Finite-difference checks of the sampler and attention backward passes on
// random small instances. Each parameter group reports its worst relative
// error ||a - n|| / (||a|| + ||n||) over all instances.

#ifndef MVDETR_HARNESS_GRADCHECK_HPP_
#define MVDETR_HARNESS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mvdetr/sampler.hpp"
#include "mvdetr/shadow_attention.hpp"

namespace mvdetr::harness {

struct GradcheckSizes {
  int height = 8;
  int width = 8;
  AttentionShape shape{8, 2, 2, 2};
  int instances = 20;
  double step = 1e-5;
  // Sample locations are kept this far from texel lines, where bilinear
  // interpolation has kinks.
  double margin = 0.05;

  void validate() const {
    shape.validate();
    if (height < 2 || width < 2 || height > 16 || width > 16) {
      throw InvalidConfig("gradcheck maps must be between 2x2 and 16x16");
    }
    if (shape.d_model > 8) throw InvalidConfig("gradcheck d_model must be <= 8");
    if (instances < 1) throw InvalidConfig("gradcheck needs at least one instance");
    if (!(step > 0.0)) throw InvalidConfig("finite-difference step must be positive");
  }
};

using AttentionBackwardFn = std::function<AttentionGrads(
    std::span<const FeatureMap>, Cell, int, const ShadowAttentionParams&, const VectorXd&)>;

inline AttentionGrads default_attention_backward(std::span<const FeatureMap> fmaps, Cell p,
                                                 int camera, const ShadowAttentionParams& params,
                                                 const VectorXd& upstream) {
  return mv_deform_attn_backward(fmaps, p, camera, params, upstream);
}

struct GradcheckResult {
  std::map<std::string, double> max_rel_error;
  double zero_upstream_max_abs = 0.0;  // largest gradient entry for a zero upstream
  int instances = 0;

  double worst() const {
    double w = 0.0;
    for (const auto& [k, v] : max_rel_error) w = std::max(w, v);
    return w;
  }
};

namespace detail {

inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double den = std::sqrt(na) + std::sqrt(nb);
  return den == 0.0 ? 0.0 : std::sqrt(num) / den;
}

inline std::vector<double> central_diff(std::span<double> x, const std::function<double()>& f,
                                        double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f();
    x[i] = keep - h;
    const double fm = f();
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline std::span<double> flat(MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<double> flat(VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<const double> flat(const MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
inline std::span<const double> flat(const VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline double frac_gap(double v) { return std::abs(v - std::round(v)); }

inline void fill(MatrixXd& m, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
}
inline void fill(VectorXd& v, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
}

inline double max_abs(const AttentionGrads& g) {
  double m = 0.0;
  auto upd = [&](std::span<const double> s) {
    for (double x : s) m = std::max(m, std::abs(x));
  };
  for (const auto& f : g.fmaps) upd(f.values());
  for (const auto& w : g.out_proj) upd(flat(w));
  for (const auto& w : g.value_proj) upd(flat(w));
  upd(flat(g.offset_weight));
  upd(flat(g.offset_bias));
  upd(flat(g.logit_weight));
  upd(flat(g.logit_bias));
  upd(flat(g.camera_embedding));
  upd(g.weights);
  for (const Point2& o : g.offsets) m = std::max({m, std::abs(o.x), std::abs(o.y)});
  return m;
}

}  // namespace detail

inline GradcheckResult run_gradcheck(const GradcheckSizes& sz, std::uint64_t seed,
                                     const AttentionBackwardFn& backward =
                                         default_attention_backward) {
  sz.validate();
  using detail::flat;
  GradcheckResult res;
  Rng rng(seed);
  const double h = sz.step;
  auto record = [&](const std::string& key, double err) {
    double& slot = res.max_rel_error[key];
    slot = std::max(slot, err);
  };

  for (int inst = 0; inst < sz.instances; ++inst) {
    // Sampler.
    {
      const int d = 1 + static_cast<int>(rng.below(4));
      FeatureMap m = FeatureMap::ground(d, sz.height, sz.width);
      for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
      Point2 pt;
      do {
        pt = {rng.uniform(0.0, sz.width - 1.0), rng.uniform(0.0, sz.height - 1.0)};
      } while (detail::frac_gap(pt.x) < sz.margin || detail::frac_gap(pt.y) < sz.margin);
      std::vector<double> up(d);
      for (double& u : up) u = rng.uniform(-1.0, 1.0);
      auto f = [&] {
        const auto v = bilinear_sample(m, pt);
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += up[k] * v[k];
        return s;
      };
      const SampleGrad g = bilinear_sample_backward(m, pt, up);
      FeatureMap gm = FeatureMap::ground(d, sz.height, sz.width);
      scatter_sample_grad(g.taps, up, gm);
      record("sampler.map", detail::rel_error(gm.values(), detail::central_diff(m.values(), f, h)));
      double xy[2] = {pt.x, pt.y};
      auto fp = [&] {
        pt = {xy[0], xy[1]};
        return f();
      };
      const auto num = detail::central_diff(xy, fp, h);
      const double an[2] = {g.grad_pt.x, g.grad_pt.y};
      record("sampler.point", detail::rel_error(an, num));
    }

    // Attention.
    const AttentionShape& s = sz.shape;
    std::vector<FeatureMap> fmaps;
    for (int c = 0; c < s.cameras; ++c) {
      FeatureMap m = FeatureMap::ground(s.d_model, sz.height, sz.width);
      for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
      fmaps.push_back(std::move(m));
    }
    ShadowAttentionParams p = ShadowAttentionParams::init(s, rng);
    for (auto& w : p.out_proj) detail::fill(w, rng, 0.5);
    for (auto& w : p.value_proj) detail::fill(w, rng, 0.5);
    detail::fill(p.offset_weight, rng, 0.1);
    detail::fill(p.logit_weight, rng, 0.5);
    detail::fill(p.logit_bias, rng, 0.5);
    detail::fill(p.camera_embedding, rng, 0.5);
    const Cell pos{static_cast<int>(rng.below(sz.height)), static_cast<int>(rng.below(sz.width))};
    const int cam = static_cast<int>(rng.below(s.cameras));
    const VectorXd q = attention_query(fmaps, pos, cam, p);
    for (;;) {
      for (Eigen::Index i = 0; i < p.offset_bias.size(); ++i) {
        p.offset_bias[i] = rng.uniform(-2.5, 2.5);
      }
      const AttentionProbe probe = predict_offsets_weights(q, p);
      bool ok = true;
      for (const Point2& o : probe.offsets) {
        ok = ok && detail::frac_gap(o.x) >= sz.margin && detail::frac_gap(o.y) >= sz.margin;
      }
      if (ok) break;
    }
    VectorXd up(s.d_model);
    for (Eigen::Index i = 0; i < up.size(); ++i) up[i] = rng.uniform(-1.0, 1.0);

    auto f = [&] { return up.dot(mv_deform_attn(fmaps, pos, cam, p)); };
    const AttentionGrads g = backward(fmaps, pos, cam, p, up);
    for (int c = 0; c < s.cameras; ++c) {
      record("attention.features",
             detail::rel_error(g.fmaps[c].values(), detail::central_diff(fmaps[c].values(), f, h)));
    }
    for (int m = 0; m < s.heads; ++m) {
      record("attention.out_proj",
             detail::rel_error(flat(g.out_proj[m]), detail::central_diff(flat(p.out_proj[m]), f, h)));
      record("attention.value_proj", detail::rel_error(flat(g.value_proj[m]),
                                                       detail::central_diff(flat(p.value_proj[m]), f, h)));
    }
    record("attention.offset_weight", detail::rel_error(flat(g.offset_weight),
                                                        detail::central_diff(flat(p.offset_weight), f, h)));
    record("attention.offset_bias", detail::rel_error(flat(g.offset_bias),
                                                      detail::central_diff(flat(p.offset_bias), f, h)));
    record("attention.logit_weight", detail::rel_error(flat(g.logit_weight),
                                                       detail::central_diff(flat(p.logit_weight), f, h)));
    record("attention.logit_bias", detail::rel_error(flat(g.logit_bias),
                                                     detail::central_diff(flat(p.logit_bias), f, h)));
    record("attention.camera_embedding",
           detail::rel_error(flat(g.camera_embedding),
                             detail::central_diff(flat(p.camera_embedding), f, h)));

    AttentionProbe probe = predict_offsets_weights(attention_query(fmaps, pos, cam, p), p);
    probe.position = pos;
    auto fp = [&] { return up.dot(deform_attn_with_probe(fmaps, probe, p)); };
    std::vector<double> off_flat, off_an;
    for (std::size_t i = 0; i < probe.offsets.size(); ++i) {
      off_flat.push_back(probe.offsets[i].x);
      off_flat.push_back(probe.offsets[i].y);
      off_an.push_back(g.offsets[i].x);
      off_an.push_back(g.offsets[i].y);
    }
    auto fo = [&] {
      for (std::size_t i = 0; i < probe.offsets.size(); ++i) {
        probe.offsets[i] = {off_flat[2 * i], off_flat[2 * i + 1]};
      }
      return fp();
    };
    record("attention.offsets", detail::rel_error(off_an, detail::central_diff(off_flat, fo, h)));
    fo();  // put the unperturbed offsets back into the probe
    record("attention.weights",
           detail::rel_error(g.weights, detail::central_diff(probe.weights, fp, h)));

    res.zero_upstream_max_abs = std::max(
        res.zero_upstream_max_abs,
        detail::max_abs(backward(fmaps, pos, cam, p, VectorXd::Zero(s.d_model))));
    ++res.instances;
  }
  return res;
}

}  // namespace mvdetr::harness

#endif  // MVDETR_HARNESS_GRADCHECK_HPP_
