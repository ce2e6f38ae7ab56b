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

// Encoder layers built on multiview deformable attention, the across-view
// aggregation layer, and the 2x pooling / upsampling around the encoder.
//
// One layer, for every camera c and cell p, reading only the layer input:
//   y = norm1(x + mv_deform_attn(x, p, c))
//   z = norm2(y + W2 relu(W1 y + b1) + b2)
//
// Backward passes split work into a fixed number of chunks, each with its own
// gradient buffers, and sum the chunks in index order. Results therefore do
// not depend on the thread count.

#ifndef MVDETR_ENCODER_HPP_
#define MVDETR_ENCODER_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "mvdetr/core.hpp"
#include "mvdetr/shadow_attention.hpp"

namespace mvdetr {

inline constexpr int kReductionChunks = 16;

/// Per-position channel normalization with learned scale and shift. With
/// `identity` set the layer passes its input through unchanged.
struct NormParams {
  bool identity = false;
  double eps = 1e-5;
  VectorXd gamma;
  VectorXd beta;

  static NormParams layer_norm(int d) {
    return {false, 1e-5, VectorXd::Ones(d), VectorXd::Zero(d)};
  }
  static NormParams pass_through(int d) {
    return {true, 1e-5, VectorXd::Ones(d), VectorXd::Zero(d)};
  }
};

struct FfnParams {
  MatrixXd w1;  // hidden x d
  VectorXd b1;
  MatrixXd w2;  // d x hidden
  VectorXd b2;

  static FfnParams zeros(int d, int hidden) {
    return {MatrixXd::Zero(hidden, d), VectorXd::Zero(hidden),
            MatrixXd::Zero(d, hidden), VectorXd::Zero(d)};
  }
  static FfnParams init(int d, int hidden, Rng& rng) {
    FfnParams f = zeros(d, hidden);
    const double l1 = std::sqrt(6.0 / (d + hidden));
    for (Eigen::Index i = 0; i < f.w1.size(); ++i) f.w1.data()[i] = rng.uniform(-l1, l1);
    for (Eigen::Index i = 0; i < f.w2.size(); ++i) f.w2.data()[i] = rng.uniform(-l1, l1);
    return f;
  }
};

struct EncoderLayerParams {
  ShadowAttentionParams attention;
  FfnParams ffn;
  NormParams norm1;
  NormParams norm2;

  static EncoderLayerParams init(const AttentionShape& s, int ffn_multiple,
                                 Rng& rng) {
    return {ShadowAttentionParams::init(s, rng),
            FfnParams::init(s.d_model, ffn_multiple * s.d_model, rng),
            NormParams::layer_norm(s.d_model), NormParams::layer_norm(s.d_model)};
  }
};

struct NormGrads {
  VectorXd gamma;
  VectorXd beta;
};

struct FfnGrads {
  MatrixXd w1;
  VectorXd b1;
  MatrixXd w2;
  VectorXd b2;
};

struct EncoderLayerGrads {
  AttentionGrads attention;
  FfnGrads ffn;
  NormGrads norm1;
  NormGrads norm2;

  static EncoderLayerGrads zeros(const EncoderLayerParams& p) {
    EncoderLayerGrads g;
    g.attention = AttentionGrads::param_zeros(p.attention);
    g.ffn = {MatrixXd::Zero(p.ffn.w1.rows(), p.ffn.w1.cols()),
             VectorXd::Zero(p.ffn.b1.size()),
             MatrixXd::Zero(p.ffn.w2.rows(), p.ffn.w2.cols()),
             VectorXd::Zero(p.ffn.b2.size())};
    g.norm1 = {VectorXd::Zero(p.norm1.gamma.size()), VectorXd::Zero(p.norm1.beta.size())};
    g.norm2 = {VectorXd::Zero(p.norm2.gamma.size()), VectorXd::Zero(p.norm2.beta.size())};
    return g;
  }

  void add(const EncoderLayerGrads& o) {
    attention.add_params(o.attention);
    ffn.w1 += o.ffn.w1;
    ffn.b1 += o.ffn.b1;
    ffn.w2 += o.ffn.w2;
    ffn.b2 += o.ffn.b2;
    norm1.gamma += o.norm1.gamma;
    norm1.beta += o.norm1.beta;
    norm2.gamma += o.norm2.gamma;
    norm2.beta += o.norm2.beta;
  }
};

// ---------------------------------------------------------------------------
// Norm and FFN on single vectors.
// ---------------------------------------------------------------------------

struct NormCache {
  VectorXd normalized;
  double inv_std = 1.0;
};

inline VectorXd norm_forward(const NormParams& n, const VectorXd& x,
                             NormCache* cache = nullptr) {
  if (n.identity) return x;
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double inv_std = 1.0 / std::sqrt(var + n.eps);
  VectorXd xhat = (x.array() - mean) * inv_std;
  VectorXd y = n.gamma.cwiseProduct(xhat) + n.beta;
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

inline VectorXd norm_backward(const NormParams& n, const NormCache& cache,
                              const VectorXd& dy, NormGrads& g) {
  if (n.identity) return dy;
  g.gamma += dy.cwiseProduct(cache.normalized);
  g.beta += dy;
  const VectorXd dxhat = dy.cwiseProduct(n.gamma);
  const double m1 = dxhat.mean();
  const double m2 = dxhat.cwiseProduct(cache.normalized).mean();
  return ((dxhat.array() - m1) - cache.normalized.array() * m2) * cache.inv_std;
}

inline VectorXd ffn_forward(const FfnParams& f, const VectorXd& y,
                            VectorXd* hidden = nullptr) {
  VectorXd h = (f.w1 * y + f.b1).cwiseMax(0.0);
  VectorXd out = f.w2 * h + f.b2;
  if (hidden) *hidden = std::move(h);
  return out;
}

// ---------------------------------------------------------------------------
// Encoder layer.
// ---------------------------------------------------------------------------

inline void check_encoder_inputs(std::span<const FeatureMap> fmaps,
                                 const EncoderLayerParams& layer) {
  check_attention_inputs(fmaps, layer.attention.shape);
}

inline std::vector<FeatureMap> encoder_layer(std::span<const FeatureMap> fmaps,
                                             const EncoderLayerParams& layer,
                                             int threads = 1) {
  check_encoder_inputs(fmaps, layer);
  const int cams = static_cast<int>(fmaps.size());
  const int h = fmaps[0].height();
  const int w = fmaps[0].width();
  const int d = fmaps[0].channels();
  std::vector<FeatureMap> out;
  out.reserve(cams);
  for (const auto& f : fmaps) out.emplace_back(d, h, w, f.plane(), f.camera());
  const std::size_t n = static_cast<std::size_t>(cams) * h * w;
  parallel_for(n, threads, [&](std::size_t item) {
    const int c = static_cast<int>(item / (static_cast<std::size_t>(h) * w));
    const int rem = static_cast<int>(item % (static_cast<std::size_t>(h) * w));
    const Cell p{rem / w, rem % w};
    const VectorXd x = map_vector(fmaps[c], p);
    const VectorXd attn = mv_deform_attn(fmaps, p, c, layer.attention);
    const VectorXd y = norm_forward(layer.norm1, x + attn);
    const VectorXd z = norm_forward(layer.norm2, y + ffn_forward(layer.ffn, y));
    for (int k = 0; k < d; ++k) out[c].at(k, p.row, p.col) = z[k];
  });
  return out;
}

struct EncoderLayerBackward {
  std::vector<FeatureMap> grad_inputs;
  EncoderLayerGrads grads;
};

inline EncoderLayerBackward encoder_layer_backward(
    std::span<const FeatureMap> fmaps, const EncoderLayerParams& layer,
    std::span<const FeatureMap> grad_out, int threads = 1) {
  check_encoder_inputs(fmaps, layer);
  const int cams = static_cast<int>(fmaps.size());
  const int h = fmaps[0].height();
  const int w = fmaps[0].width();
  const int d = fmaps[0].channels();
  const std::size_t n = static_cast<std::size_t>(cams) * h * w;

  struct ChunkAcc {
    AttentionGrads attn;  // carries per-chunk map gradients
    EncoderLayerGrads rest;
  };
  const int chunks = static_cast<int>(std::min<std::size_t>(kReductionChunks, n));
  std::vector<ChunkAcc> acc(chunks);
  for (auto& a : acc) {
    a.attn = AttentionGrads::zeros(layer.attention, fmaps);
    a.rest = EncoderLayerGrads::zeros(layer);
  }

  parallel_chunks(n, chunks, threads,
                  [&](std::size_t begin, std::size_t end, int chunk) {
    ChunkAcc& a = acc[chunk];
    for (std::size_t item = begin; item < end; ++item) {
      const int c = static_cast<int>(item / (static_cast<std::size_t>(h) * w));
      const int rem = static_cast<int>(item % (static_cast<std::size_t>(h) * w));
      const Cell p{rem / w, rem % w};
      const VectorXd x = map_vector(fmaps[c], p);
      const VectorXd attn = mv_deform_attn(fmaps, p, c, layer.attention);
      NormCache n1, n2;
      const VectorXd y = norm_forward(layer.norm1, x + attn, &n1);
      VectorXd hidden;
      const VectorXd f = ffn_forward(layer.ffn, y, &hidden);
      norm_forward(layer.norm2, y + f, &n2);

      const VectorXd dz = map_vector(grad_out[c], p);
      const VectorXd dz_pre = norm_backward(layer.norm2, n2, dz, a.rest.norm2);
      a.rest.ffn.w2 += dz_pre * hidden.transpose();
      a.rest.ffn.b2 += dz_pre;
      VectorXd dh = layer.ffn.w2.transpose() * dz_pre;
      for (Eigen::Index i = 0; i < dh.size(); ++i) {
        if (hidden[i] <= 0.0) dh[i] = 0.0;
      }
      a.rest.ffn.w1 += dh * y.transpose();
      a.rest.ffn.b1 += dh;
      const VectorXd dy = dz_pre + layer.ffn.w1.transpose() * dh;
      const VectorXd dy_pre = norm_backward(layer.norm1, n1, dy, a.rest.norm1);
      for (int k = 0; k < d; ++k) a.attn.fmaps[c].at(k, p.row, p.col) += dy_pre[k];
      mv_deform_attn_backward_accumulate(fmaps, p, c, layer.attention, dy_pre,
                                         a.attn);
    }
  });

  EncoderLayerBackward result;
  result.grads = EncoderLayerGrads::zeros(layer);
  for (const auto& f : fmaps) {
    result.grad_inputs.emplace_back(d, h, w, f.plane(), f.camera());
  }
  for (const ChunkAcc& a : acc) {
    result.grads.add(a.rest);
    result.grads.attention.add_params(a.attn);
    for (int c = 0; c < cams; ++c) {
      auto dst = result.grad_inputs[c].values();
      auto src = a.attn.fmaps[c].values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Across-view aggregation.
// ---------------------------------------------------------------------------

/// Affine map from the camera-ordered concatenation of C feature vectors to
/// D_out channels.
struct AggregationParams {
  MatrixXd weight;  // d_out x (C * d)
  VectorXd bias;

  static AggregationParams init(int cameras, int d, int d_out, Rng& rng) {
    AggregationParams a{MatrixXd::Zero(d_out, cameras * d), VectorXd::Zero(d_out)};
    const double lim = std::sqrt(6.0 / (cameras * d + d_out));
    for (Eigen::Index i = 0; i < a.weight.size(); ++i) {
      a.weight.data()[i] = rng.uniform(-lim, lim);
    }
    return a;
  }
};

inline void check_aggregation(std::span<const FeatureMap> fmaps,
                              const AggregationParams& agg) {
  if (fmaps.empty()) throw ShapeMismatch("aggregate_views: no maps");
  require_same_shapes(fmaps, "aggregate_views");
  const Eigen::Index expect =
      static_cast<Eigen::Index>(fmaps.size()) * fmaps[0].channels();
  if (agg.weight.cols() != expect || agg.bias.size() != agg.weight.rows()) {
    throw ShapeMismatch("aggregation weight expects " +
                        std::to_string(agg.weight.cols()) + " inputs, maps give " +
                        std::to_string(expect));
  }
}

inline FeatureMap aggregate_views(std::span<const FeatureMap> fmaps,
                                  const AggregationParams& agg) {
  check_aggregation(fmaps, agg);
  const int d = fmaps[0].channels();
  const int h = fmaps[0].height();
  const int w = fmaps[0].width();
  const int d_out = static_cast<int>(agg.weight.rows());
  FeatureMap out = FeatureMap::ground(d_out, h, w);
  VectorXd cat(agg.weight.cols());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < fmaps.size(); ++c) {
        for (int k = 0; k < d; ++k) cat[c * d + k] = fmaps[c].at(k, y, x);
      }
      const VectorXd o = agg.weight * cat + agg.bias;
      for (int k = 0; k < d_out; ++k) out.at(k, y, x) = o[k];
    }
  }
  return out;
}

struct AggregationBackward {
  std::vector<FeatureMap> grad_inputs;
  AggregationParams grads;
};

inline AggregationBackward aggregate_views_backward(
    std::span<const FeatureMap> fmaps, const AggregationParams& agg,
    const FeatureMap& grad_out) {
  check_aggregation(fmaps, agg);
  const int d = fmaps[0].channels();
  const int h = fmaps[0].height();
  const int w = fmaps[0].width();
  AggregationBackward r;
  r.grads = {MatrixXd::Zero(agg.weight.rows(), agg.weight.cols()),
             VectorXd::Zero(agg.bias.size())};
  for (const auto& f : fmaps) r.grad_inputs.emplace_back(d, h, w, f.plane(), f.camera());
  VectorXd cat(agg.weight.cols());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < fmaps.size(); ++c) {
        for (int k = 0; k < d; ++k) cat[c * d + k] = fmaps[c].at(k, y, x);
      }
      const VectorXd g = map_vector(grad_out, {y, x});
      r.grads.weight += g * cat.transpose();
      r.grads.bias += g;
      const VectorXd dcat = agg.weight.transpose() * g;
      for (std::size_t c = 0; c < fmaps.size(); ++c) {
        for (int k = 0; k < d; ++k) r.grad_inputs[c].at(k, y, x) += dcat[c * d + k];
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Resolution changes around the encoder.
// ---------------------------------------------------------------------------

/// Stride-2 average pooling; output dims are ceil(dims / 2) and edge windows
/// average only the cells they cover.
inline FeatureMap avg_pool2(const FeatureMap& in) {
  const int h = (in.height() + 1) / 2;
  const int w = (in.width() + 1) / 2;
  FeatureMap out(in.channels(), h, w, in.plane(), in.camera());
  for (int d = 0; d < in.channels(); ++d) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        int cnt = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            if (in.contains(2 * y + dy, 2 * x + dx)) {
              s += in.at(d, 2 * y + dy, 2 * x + dx);
              ++cnt;
            }
          }
        }
        out.at(d, y, x) = s / cnt;
      }
    }
  }
  return out;
}

/// Nearest-neighbour 2x upsampling cropped to `dims`.
inline FeatureMap upsample_nearest2(const FeatureMap& in, Dims dims) {
  FeatureMap out(in.channels(), dims.height, dims.width, in.plane(), in.camera());
  for (int d = 0; d < in.channels(); ++d) {
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        out.at(d, y, x) = in.at(d, y / 2, x / 2);
      }
    }
  }
  return out;
}

inline FeatureMap upsample_nearest2_backward(const FeatureMap& grad_out,
                                             Dims in_dims) {
  FeatureMap g(grad_out.channels(), in_dims.height, in_dims.width,
               grad_out.plane(), grad_out.camera());
  for (int d = 0; d < grad_out.channels(); ++d) {
    for (int y = 0; y < grad_out.height(); ++y) {
      for (int x = 0; x < grad_out.width(); ++x) {
        g.at(d, y / 2, x / 2) += grad_out.at(d, y, x);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Encoder stack.
// ---------------------------------------------------------------------------

struct ShadowTransformer {
  std::vector<EncoderLayerParams> layers;

  static ShadowTransformer init(const AttentionShape& s, int num_layers,
                                int ffn_multiple, Rng& rng) {
    ShadowTransformer t;
    for (int i = 0; i < num_layers; ++i) {
      t.layers.push_back(EncoderLayerParams::init(s, ffn_multiple, rng));
    }
    return t;
  }
};

/// Runs every layer; activations[i] is the input of layer i and
/// activations.back() the stack output.
inline std::vector<std::vector<FeatureMap>> shadow_transformer_forward(
    std::vector<FeatureMap> fmaps, const ShadowTransformer& t, int threads = 1) {
  std::vector<std::vector<FeatureMap>> acts;
  acts.push_back(std::move(fmaps));
  for (const auto& layer : t.layers) {
    acts.push_back(encoder_layer(acts.back(), layer, threads));
  }
  return acts;
}

struct ShadowTransformerBackward {
  std::vector<FeatureMap> grad_inputs;
  std::vector<EncoderLayerGrads> layer_grads;
};

inline ShadowTransformerBackward shadow_transformer_backward(
    const std::vector<std::vector<FeatureMap>>& acts, const ShadowTransformer& t,
    std::vector<FeatureMap> grad_out, int threads = 1) {
  ShadowTransformerBackward r;
  r.layer_grads.resize(t.layers.size());
  for (std::size_t i = t.layers.size(); i-- > 0;) {
    EncoderLayerBackward b =
        encoder_layer_backward(acts[i], t.layers[i], grad_out, threads);
    r.layer_grads[i] = std::move(b.grads);
    grad_out = std::move(b.grad_inputs);
  }
  r.grad_inputs = std::move(grad_out);
  return r;
}

}  // namespace mvdetr

#endif  // MVDETR_ENCODER_HPP_
