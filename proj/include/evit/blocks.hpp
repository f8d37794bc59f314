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

#include "evit/checkpoint.hpp"
#include "evit/errors.hpp"
#include "evit/layers.hpp"
#include "evit/msa.hpp"
#include "evit/tensor.hpp"

namespace evit {

// Inverted bottleneck: 1x1 expand -> 3x3 depthwise (stride s) -> 1x1 project.
struct MBConvConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::size_t expand_ratio = 4;
  std::size_t min_mid_channels = 16;

  std::size_t mid_channels() const noexcept {
    return std::max(min_mid_channels, in_channels * expand_ratio);
  }
  bool residual() const noexcept { return stride == 1 && in_channels == out_channels; }

  void validate() const {
    if (stride != 1 && stride != 2) throw ConfigError("mbconv: stride must be 1 or 2, got " + std::to_string(stride));
    if (in_channels == 0 || out_channels == 0 || expand_ratio == 0) {
      throw ConfigError("mbconv: channel counts and expansion must be positive");
    }
  }

  ConvLayerConfig expand_layer() const {
    return {in_channels, mid_channels(), 1, 1, 1, false, true, Activation::hardswish};
  }
  ConvLayerConfig depthwise_layer() const {
    return {mid_channels(), mid_channels(), 3, stride, mid_channels(), false, true, Activation::hardswish};
  }
  ConvLayerConfig project_layer() const {
    return {mid_channels(), out_channels, 1, 1, 1, false, true, Activation::none};
  }

  std::size_t out_extent(std::size_t in) const { return depthwise_layer().out_extent(in); }

  std::uint64_t params() const {
    return expand_layer().params() + depthwise_layer().params() + project_layer().params();
  }
  std::uint64_t macs(std::size_t h, std::size_t w) const {
    const std::size_t oh = out_extent(h), ow = out_extent(w);
    return expand_layer().macs(h, w) + depthwise_layer().macs(oh, ow) + project_layer().macs(oh, ow);
  }
};

struct MBConvWeights {
  ConvLayerWeights expand, depthwise, project;
};

inline void declare_params(const MBConvConfig& cfg, const std::string& prefix, std::vector<ParamSpec>& out) {
  cfg.validate();
  declare_params(cfg.expand_layer(), prefix + ".expand", out);
  declare_params(cfg.depthwise_layer(), prefix + ".dw", out);
  declare_params(cfg.project_layer(), prefix + ".project", out);
}

inline MBConvWeights bind_mbconv(const MBConvConfig& cfg, const Checkpoint& ckpt, const std::string& prefix) {
  cfg.validate();
  return {bind_conv_layer(cfg.expand_layer(), ckpt, prefix + ".expand"),
          bind_conv_layer(cfg.depthwise_layer(), ckpt, prefix + ".dw"),
          bind_conv_layer(cfg.project_layer(), ckpt, prefix + ".project")};
}

inline Tensor mbconv_forward(const Tensor& x, const MBConvConfig& cfg, const MBConvWeights& w) {
  cfg.validate();
  Tensor y = conv_layer_forward(x, cfg.expand_layer(), w.expand);
  y = conv_layer_forward(y, cfg.depthwise_layer(), w.depthwise);
  y = conv_layer_forward(y, cfg.project_layer(), w.project);
  return cfg.residual() ? add(x, y) : y;
}

// Depthwise-separable block used to fill the input stem:
// 3x3 depthwise + norm + act, then 1x1 + norm.
struct DSConvConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;

  bool residual() const noexcept { return stride == 1 && in_channels == out_channels; }

  void validate() const {
    if (stride != 1 && stride != 2) throw ConfigError("dsconv: stride must be 1 or 2, got " + std::to_string(stride));
    if (in_channels == 0 || out_channels == 0) throw ConfigError("dsconv: channel counts must be positive");
  }

  ConvLayerConfig depthwise_layer() const {
    return {in_channels, in_channels, 3, stride, in_channels, false, true, Activation::hardswish};
  }
  ConvLayerConfig pointwise_layer() const {
    return {in_channels, out_channels, 1, 1, 1, false, true, Activation::none};
  }

  std::size_t out_extent(std::size_t in) const { return depthwise_layer().out_extent(in); }

  std::uint64_t params() const { return depthwise_layer().params() + pointwise_layer().params(); }
  std::uint64_t macs(std::size_t h, std::size_t w) const {
    const std::size_t oh = out_extent(h), ow = out_extent(w);
    return depthwise_layer().macs(oh, ow) + pointwise_layer().macs(oh, ow);
  }
};

struct DSConvWeights {
  ConvLayerWeights depthwise, pointwise;
};

inline void declare_params(const DSConvConfig& cfg, const std::string& prefix, std::vector<ParamSpec>& out) {
  cfg.validate();
  declare_params(cfg.depthwise_layer(), prefix + ".dw", out);
  declare_params(cfg.pointwise_layer(), prefix + ".pw", out);
}

inline DSConvWeights bind_dsconv(const DSConvConfig& cfg, const Checkpoint& ckpt, const std::string& prefix) {
  cfg.validate();
  return {bind_conv_layer(cfg.depthwise_layer(), ckpt, prefix + ".dw"),
          bind_conv_layer(cfg.pointwise_layer(), ckpt, prefix + ".pw")};
}

inline Tensor dsconv_forward(const Tensor& x, const DSConvConfig& cfg, const DSConvWeights& w) {
  cfg.validate();
  Tensor y = conv_layer_forward(x, cfg.depthwise_layer(), w.depthwise);
  y = conv_layer_forward(y, cfg.pointwise_layer(), w.pointwise);
  return cfg.residual() ? add(x, y) : y;
}

// EfficientViT module: x + MSA(x), then + MBConv(.). Both halves keep the
// channel count and resolution.
struct EfficientViTBlockConfig {
  MsaConfig msa;
  MBConvConfig mbconv;

  void validate() const {
    msa.validate();
    mbconv.validate();
    if (mbconv.stride != 1 || mbconv.in_channels != mbconv.out_channels ||
        mbconv.in_channels != msa.in_channels) {
      throw ConfigError("efficientvit block: MSA and MBConv must both be stride-1 with matching channels");
    }
  }

  std::uint64_t params() const { return msa_params(msa) + mbconv.params(); }
  std::uint64_t macs(std::size_t h, std::size_t w) const { return msa_macs(msa, h, w) + mbconv.macs(h, w); }
};

struct EfficientViTBlockWeights {
  MsaWeights msa;
  MBConvWeights mbconv;
};

inline void declare_params(const EfficientViTBlockConfig& cfg, const std::string& prefix,
                           std::vector<ParamSpec>& out) {
  cfg.validate();
  declare_params(cfg.msa, prefix + ".msa", out);
  declare_params(cfg.mbconv, prefix + ".mbconv", out);
}

inline EfficientViTBlockWeights bind_efficientvit_block(const EfficientViTBlockConfig& cfg, const Checkpoint& ckpt,
                                                        const std::string& prefix) {
  cfg.validate();
  return {bind_msa(cfg.msa, ckpt, prefix + ".msa"), bind_mbconv(cfg.mbconv, ckpt, prefix + ".mbconv")};
}

inline Tensor efficientvit_block_forward(const Tensor& x, const EfficientViTBlockConfig& cfg,
                                         const EfficientViTBlockWeights& w) {
  cfg.validate();
  const Tensor context = add(x, msa_forward(x, cfg.msa, w.msa));
  return mbconv_forward(context, cfg.mbconv, w.mbconv);
}

}  // namespace evit
