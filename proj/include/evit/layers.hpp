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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evit/checkpoint.hpp"
#include "evit/errors.hpp"
#include "evit/tensor.hpp"

namespace evit {

enum class ParamRole { weight, bias, norm_gamma, norm_beta, norm_mean, norm_var };

// Running statistics are stored in checkpoints but are not trained.
inline bool is_learnable(ParamRole role) {
  return role != ParamRole::norm_mean && role != ParamRole::norm_var;
}

// One tensor a model expects to find in its checkpoint.
struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role = ParamRole::weight;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

enum class Activation { none, relu, hardswish };

inline Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::none:
      return x;
    case Activation::relu:
      return relu(x);
    case Activation::hardswish:
      return hardswish(x);
  }
  return x;
}

// conv -> optional batch norm -> optional activation, "same" padding.
struct ConvLayerConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t groups = 1;
  bool bias = false;
  bool norm = true;
  Activation act = Activation::hardswish;

  std::size_t padding() const noexcept { return (kernel - 1) / 2; }

  std::size_t out_extent(std::size_t in) const noexcept {
    return (in + 2 * padding() - kernel) / stride + 1;
  }

  Shape kernel_shape() const { return {out_channels, in_channels / groups, kernel, kernel}; }

  void validate() const {
    if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || groups == 0) {
      throw ConfigError("conv layer: extents, kernel, stride and groups must be positive");
    }
    if (in_channels % groups || out_channels % groups) {
      throw ConfigError("conv layer: channels " + std::to_string(in_channels) + "->" +
                        std::to_string(out_channels) + " not divisible by " + std::to_string(groups) +
                        " groups");
    }
  }

  // Learnable parameters: kernel, bias, and the norm's affine pair.
  std::uint64_t params() const noexcept {
    std::uint64_t p = static_cast<std::uint64_t>(out_channels) * (in_channels / groups) * kernel * kernel;
    if (bias) p += out_channels;
    if (norm) p += 2 * out_channels;
    return p;
  }

  std::uint64_t macs(std::size_t out_h, std::size_t out_w) const noexcept {
    return static_cast<std::uint64_t>(out_h) * out_w * out_channels * (in_channels / groups) * kernel * kernel;
  }
};

struct ConvLayerWeights {
  Tensor kernel;
  std::optional<Tensor> bias;
  std::optional<BatchNorm> norm;
};

inline void declare_params(const ConvLayerConfig& cfg, const std::string& prefix, std::vector<ParamSpec>& out) {
  cfg.validate();
  const std::size_t receptive = cfg.kernel * cfg.kernel;
  const std::size_t fan_in = cfg.in_channels / cfg.groups * receptive;
  const std::size_t fan_out = cfg.out_channels * receptive;
  out.push_back({prefix + ".weight", cfg.kernel_shape(), ParamRole::weight, fan_in, fan_out});
  if (cfg.bias) out.push_back({prefix + ".bias", {cfg.out_channels}, ParamRole::bias, fan_in, fan_out});
  if (cfg.norm) {
    out.push_back({prefix + ".bn.gamma", {cfg.out_channels}, ParamRole::norm_gamma, 0, 0});
    out.push_back({prefix + ".bn.beta", {cfg.out_channels}, ParamRole::norm_beta, 0, 0});
    out.push_back({prefix + ".bn.mean", {cfg.out_channels}, ParamRole::norm_mean, 0, 0});
    out.push_back({prefix + ".bn.var", {cfg.out_channels}, ParamRole::norm_var, 0, 0});
  }
}

inline const Tensor& fetch(const Checkpoint& ckpt, const std::string& name, const Shape& expected) {
  const Tensor* t = ckpt.find(name);
  if (!t) throw ConfigError("checkpoint/model mismatch: missing tensor '" + name + "'");
  if (t->shape() != expected) {
    throw ConfigError("checkpoint/model mismatch: tensor '" + name + "' has shape " + to_string(t->shape()) +
                      ", model expects " + to_string(expected));
  }
  return *t;
}

inline ConvLayerWeights bind_conv_layer(const ConvLayerConfig& cfg, const Checkpoint& ckpt,
                                        const std::string& prefix) {
  ConvLayerWeights w;
  w.kernel = fetch(ckpt, prefix + ".weight", cfg.kernel_shape());
  if (cfg.bias) w.bias = fetch(ckpt, prefix + ".bias", {cfg.out_channels});
  if (cfg.norm) {
    const Shape c{cfg.out_channels};
    w.norm = BatchNorm{fetch(ckpt, prefix + ".bn.gamma", c), fetch(ckpt, prefix + ".bn.beta", c),
                       fetch(ckpt, prefix + ".bn.mean", c), fetch(ckpt, prefix + ".bn.var", c)};
  }
  return w;
}

inline Tensor conv_layer_forward(const Tensor& x, const ConvLayerConfig& cfg, const ConvLayerWeights& w) {
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels) {
    throw ConfigError("conv layer expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                      to_string(x.shape()));
  }
  Tensor y = conv2d(x, w.kernel, w.bias, {cfg.stride, cfg.padding(), cfg.groups});
  if (w.norm) y = batchnorm_infer(y, *w.norm);
  return activate(y, cfg.act);
}

}  // namespace evit
