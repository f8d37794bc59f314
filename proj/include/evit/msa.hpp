// Copyright 2026 The evit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "evit/attention.hpp"
#include "evit/checkpoint.hpp"
#include "evit/errors.hpp"
#include "evit/layers.hpp"
#include "evit/tensor.hpp"

namespace evit {

// Lightweight multi-scale attention.
//
//   x -> 1x1 qkv projection -> for every scale k:
//          k == 1 : tokens as projected
//          k  > 1 : depthwise kxk over all 3*heads*d channels, then a 1x1
//                   group conv with 3*heads groups of d channels
//        -> per-head ReLU attention over the H*W tokens of that scale
//     -> concat over scales -> 1x1 projection + norm
struct MsaConfig {
  std::size_t in_channels = 0;
  std::size_t d = 32;
  std::vector<std::size_t> scales{1, 5};
  float eps = 1e-6f;
  AttentionKind kind = AttentionKind::relu_fast;
  // When false each head's output is its own V tokens (no global mixing).
  bool global_attention = true;

  std::size_t heads() const noexcept { return std::max<std::size_t>(1, d ? in_channels / d : 1); }
  std::size_t total_dim() const noexcept { return heads() * d; }
  std::size_t qkv_channels() const noexcept { return 3 * total_dim(); }
  std::size_t concat_channels() const noexcept { return scales.size() * total_dim(); }

  AttentionConfig attention() const { return {d, heads(), eps, kind}; }

  void validate() const {
    if (in_channels == 0) throw ConfigError("msa: in_channels must be positive");
    if (d == 0) throw ConfigError("msa: head dimension must be positive");
    if (scales.empty()) throw ConfigError("msa: at least one scale is required");
    for (std::size_t k : scales) {
      if (k == 0 || k % 2 == 0) {
        throw ConfigError("msa: scale kernel sizes must be odd and positive, got " + std::to_string(k));
      }
    }
    if (!(eps > 0.0f)) throw ConfigError("msa: eps must be > 0");
  }

  ConvLayerConfig qkv_layer() const {
    return {in_channels, qkv_channels(), 1, 1, 1, false, false, Activation::none};
  }
  ConvLayerConfig depthwise_layer(std::size_t k) const {
    return {qkv_channels(), qkv_channels(), k, 1, qkv_channels(), false, false, Activation::none};
  }
  ConvLayerConfig pointwise_layer() const {
    return {qkv_channels(), qkv_channels(), 1, 1, 3 * heads(), false, false, Activation::none};
  }
  ConvLayerConfig proj_layer() const {
    return {concat_channels(), in_channels, 1, 1, 1, false, true, Activation::none};
  }
};

// Weights of one aggregation branch. Empty for the k = 1 branch.
struct AggregationWeights {
  ConvLayerWeights depthwise;
  ConvLayerWeights pointwise;
};

struct MsaWeights {
  ConvLayerWeights qkv;
  std::vector<AggregationWeights> aggregation;  // parallel to MsaConfig::scales
  ConvLayerWeights proj;
};

inline std::string aggregation_prefix(const std::string& prefix, std::size_t k) {
  return prefix + ".agg" + std::to_string(k);
}

inline void declare_params(const MsaConfig& cfg, const std::string& prefix, std::vector<ParamSpec>& out) {
  cfg.validate();
  declare_params(cfg.qkv_layer(), prefix + ".qkv", out);
  for (std::size_t k : cfg.scales) {
    if (k == 1) continue;
    declare_params(cfg.depthwise_layer(k), aggregation_prefix(prefix, k) + ".dw", out);
    declare_params(cfg.pointwise_layer(), aggregation_prefix(prefix, k) + ".pw", out);
  }
  declare_params(cfg.proj_layer(), prefix + ".proj", out);
}

inline MsaWeights bind_msa(const MsaConfig& cfg, const Checkpoint& ckpt, const std::string& prefix) {
  cfg.validate();
  MsaWeights w;
  w.qkv = bind_conv_layer(cfg.qkv_layer(), ckpt, prefix + ".qkv");
  for (std::size_t k : cfg.scales) {
    AggregationWeights agg;
    if (k != 1) {
      agg.depthwise = bind_conv_layer(cfg.depthwise_layer(k), ckpt, aggregation_prefix(prefix, k) + ".dw");
      agg.pointwise = bind_conv_layer(cfg.pointwise_layer(), ckpt, aggregation_prefix(prefix, k) + ".pw");
    }
    w.aggregation.push_back(std::move(agg));
  }
  w.proj = bind_conv_layer(cfg.proj_layer(), ckpt, prefix + ".proj");
  return w;
}

inline Tensor qkv_project(const Tensor& x, const MsaConfig& cfg, const ConvLayerWeights& w) {
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels) {
    throw ConfigError("msa: expected " + std::to_string(cfg.in_channels) + " input channels, got " +
                      to_string(x.shape()));
  }
  return conv_layer_forward(x, cfg.qkv_layer(), w);
}

// Nearby-token aggregation for one scale, in the fused form: a single
// depthwise conv over every Q/K/V channel of every head, then one grouped
// 1x1 conv whose 3*heads groups each mix the d channels of one Q, K or V
// block of one head.
inline Tensor aggregate_scale(const Tensor& qkv, const MsaConfig& cfg, std::size_t k,
                              const AggregationWeights& w) {
  if (k == 0 || k % 2 == 0) throw ConfigError("msa: aggregation kernel must be odd, got " + std::to_string(k));
  if (qkv.rank() != 4 || qkv.dim(1) != cfg.qkv_channels()) {
    throw ConfigError("msa: aggregation expects " + std::to_string(cfg.qkv_channels()) + " channels, got " +
                      to_string(qkv.shape()));
  }
  if (k == 1) return qkv;
  const Tensor spatial = conv_layer_forward(qkv, cfg.depthwise_layer(k), w.depthwise);
  return conv_layer_forward(spatial, cfg.pointwise_layer(), w.pointwise);
}

// Global token mixing for one scale: N,3hd,H,W -> N,hd,H,W.
inline Tensor attend_tokens(const Tensor& qkv, const MsaConfig& cfg) {
  const std::size_t h = qkv.dim(2), w = qkv.dim(3);
  const std::size_t d = cfg.d, heads = cfg.heads();
  std::vector<Tensor> per_batch;
  per_batch.reserve(qkv.dim(0));
  for (std::size_t n = 0; n < qkv.dim(0); ++n) {
    const Tensor tokens = map_to_tokens(qkv, n);
    if (cfg.global_attention) {
      per_batch.push_back(multi_head_attention(tokens, cfg.attention()));
      continue;
    }
    const std::size_t count = tokens.dim(0);
    std::vector<float> values(count * heads * d);
    auto src = tokens.data();
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t hd = 0; hd < heads; ++hd)
        std::copy_n(src.data() + i * 3 * heads * d + hd * 3 * d + 2 * d, d, values.data() + (i * heads + hd) * d);
    per_batch.emplace_back(Shape{count, heads * d}, std::move(values));
  }
  return tokens_to_map(per_batch, h, w);
}

inline Tensor msa_forward(const Tensor& x, const MsaConfig& cfg, const MsaWeights& w) {
  cfg.validate();
  if (w.aggregation.size() != cfg.scales.size()) {
    throw ConfigError("msa: weights carry " + std::to_string(w.aggregation.size()) + " branches, config has " +
                      std::to_string(cfg.scales.size()) + " scales");
  }
  const Tensor qkv = qkv_project(x, cfg, w.qkv);
  std::vector<Tensor> branches;
  branches.reserve(cfg.scales.size());
  for (std::size_t i = 0; i < cfg.scales.size(); ++i) {
    branches.push_back(attend_tokens(aggregate_scale(qkv, cfg, cfg.scales[i], w.aggregation[i]), cfg));
  }
  const Tensor fused = concat_channels(branches);
  return conv_layer_forward(fused, cfg.proj_layer(), w.proj);
}

inline std::uint64_t msa_params(const MsaConfig& cfg) {
  std::uint64_t p = cfg.qkv_layer().params() + cfg.proj_layer().params();
  for (std::size_t k : cfg.scales) {
    if (k != 1) p += cfg.depthwise_layer(k).params() + cfg.pointwise_layer().params();
  }
  return p;
}

inline std::uint64_t msa_macs(const MsaConfig& cfg, std::size_t h, std::size_t w) {
  const std::uint64_t tokens = static_cast<std::uint64_t>(h) * w;
  std::uint64_t m = cfg.qkv_layer().macs(h, w) + cfg.proj_layer().macs(h, w);
  for (std::size_t k : cfg.scales) {
    if (k != 1) m += cfg.depthwise_layer(k).macs(h, w) + cfg.pointwise_layer().macs(h, w);
    if (cfg.global_attention) m += cfg.heads() * attention_macs(cfg.kind, tokens, cfg.d);
  }
  return m;
}

}  // namespace evit
