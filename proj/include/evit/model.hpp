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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evit/attention.hpp"
#include "evit/blocks.hpp"
#include "evit/checkpoint.hpp"
#include "evit/errors.hpp"
#include "evit/layers.hpp"
#include "evit/msa.hpp"
#include "evit/tensor.hpp"

namespace evit {

// Width (C) and depth (L) of every part of one model family member. Parts are
// input stem, stages 1-4 and the segmentation head; their feature maps sit at
// strides 2, 4, 8, 16, 32 and 8.
struct VariantConfig {
  std::string name;
  std::array<std::size_t, 5> widths{};
  std::array<std::size_t, 5> depths{};
  std::size_t head_width = 0;
  std::size_t head_depth = 0;

  std::size_t attention_dim = 32;
  std::size_t expand_ratio = 4;
  std::size_t cls_expand_ratio = 16;
  std::vector<std::size_t> scales{1, 5};
  AttentionKind attention_kind = AttentionKind::relu_fast;
  bool global_attention = true;
  float attention_eps = 1e-6f;
};

inline constexpr std::array<std::string_view, 4> kVariantNames{"B0", "B1", "B2", "B3"};

inline VariantConfig variant_config(std::string_view name) {
  VariantConfig v;
  v.name = std::string(name);
  if (name == "B0") {
    v.widths = {8, 16, 32, 64, 128};
    v.depths = {1, 2, 2, 2, 2};
    v.head_width = 32;
    v.head_depth = 1;
  } else if (name == "B1") {
    v.widths = {16, 32, 64, 128, 256};
    v.depths = {1, 2, 3, 3, 4};
    v.head_width = 64;
    v.head_depth = 3;
  } else if (name == "B2") {
    v.widths = {24, 48, 96, 192, 384};
    v.depths = {1, 3, 4, 4, 6};
    v.head_width = 96;
    v.head_depth = 3;
  } else if (name == "B3") {
    v.widths = {32, 64, 128, 256, 512};
    v.depths = {1, 4, 6, 6, 9};
    v.head_width = 128;
    v.head_depth = 3;
  } else {
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected B0, B1, B2 or B3)");
  }
  return v;
}

// Every width (stem, stages, head) scaled by factor and rounded, at least 1.
inline VariantConfig rescale_width(const VariantConfig& v, double factor) {
  if (!(factor > 0.0)) throw ParameterError("rescale_width: factor must be positive");
  auto scale = [factor](std::size_t c) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(c) * factor)));
  };
  VariantConfig out = v;
  for (auto& c : out.widths) c = scale(c);
  out.head_width = scale(v.head_width);
  return out;
}

struct Task {
  enum class Kind { segmentation, classification };
  Kind kind = Kind::segmentation;
  std::size_t n_classes = 19;

  static Task segmentation(std::size_t n) { return {Kind::segmentation, n}; }
  static Task classification(std::size_t n) { return {Kind::classification, n}; }
};

inline std::string_view to_string(Task::Kind kind) {
  return kind == Task::Kind::segmentation ? "seg" : "cls";
}

inline Task::Kind parse_task_kind(std::string_view name) {
  if (name == "seg" || name == "segmentation") return Task::Kind::segmentation;
  if (name == "cls" || name == "classification") return Task::Kind::classification;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected seg or cls)");
}

struct StageConfig {
  std::string name;
  std::vector<MBConvConfig> mbconvs;              // first one downsamples
  std::vector<EfficientViTBlockConfig> blocks;    // stages 3-4 only
};

struct SegHeadConfig {
  std::array<ConvLayerConfig, 3> inputs;  // P2, P3, P4 -> head width
  std::vector<MBConvConfig> blocks;
  ConvLayerConfig classifier;
};

struct ClsHeadConfig {
  ConvLayerConfig expand;
  ConvLayerConfig classifier;
};

// Fully resolved architecture plus the ordered list of tensors its
// checkpoint must contain.
struct Model {
  VariantConfig variant;
  Task task;
  ConvLayerConfig stem_conv;
  std::vector<DSConvConfig> stem_blocks;
  std::array<StageConfig, 4> stages;
  std::optional<SegHeadConfig> seg_head;
  std::optional<ClsHeadConfig> cls_head;
  std::vector<ParamSpec> params;
};

// Pyramid outputs of stages 2, 3 and 4 (strides 8, 16, 32).
struct Pyramid {
  Tensor p2, p3, p4;
};

namespace detail {

inline std::string stem_block_name(std::size_t i) { return "backbone.stem.ds" + std::to_string(i); }
inline std::string stage_block_name(std::size_t stage, std::size_t i) {
  return "backbone.stage" + std::to_string(stage + 1) + "." + std::to_string(i);
}
inline std::string head_block_name(std::size_t i) { return "head.blocks." + std::to_string(i); }
inline constexpr std::array<const char*, 3> kHeadInputNames{"head.in.p2", "head.in.p3", "head.in.p4"};

}  // namespace detail

// Stem: 3x3 stride-2 conv then (L - 1) DSConv blocks. Stages 1-2: L MBConvs,
// the first with stride 2. Stages 3-4: a stride-2 MBConv followed by L
// EfficientViT modules.
inline Model build_model(const VariantConfig& variant, const Task& task) {
  if (task.n_classes == 0) throw ConfigError("build_model: n_classes must be positive");
  for (std::size_t i = 0; i < 5; ++i) {
    if (variant.widths[i] == 0) throw ConfigError("build_model: widths must be positive");
    if (variant.depths[i] == 0) throw ConfigError("build_model: depths must be positive");
  }
  Model m;
  m.variant = variant;
  m.task = task;
  const auto& c = variant.widths;
  const auto& l = variant.depths;

  m.stem_conv = {3, c[0], 3, 2, 1, false, true, Activation::hardswish};
  declare_params(m.stem_conv, "backbone.stem.conv", m.params);
  for (std::size_t i = 0; i + 1 < l[0]; ++i) {
    m.stem_blocks.push_back({c[0], c[0], 1});
    declare_params(m.stem_blocks.back(), detail::stem_block_name(i), m.params);
  }

  std::size_t in = c[0];
  for (std::size_t s = 0; s < 4; ++s) {
    StageConfig& stage = m.stages[s];
    stage.name = "stage" + std::to_string(s + 1);
    const std::size_t width = c[s + 1];
    const std::size_t depth = l[s + 1];
    const bool attention_stage = s >= 2;
    const std::size_t mbconv_count = attention_stage ? 1 : depth;
    for (std::size_t i = 0; i < mbconv_count; ++i) {
      stage.mbconvs.push_back({i == 0 ? in : width, width, i == 0 ? 2u : 1u, variant.expand_ratio});
      declare_params(stage.mbconvs.back(), detail::stage_block_name(s, i), m.params);
    }
    if (attention_stage) {
      for (std::size_t i = 0; i < depth; ++i) {
        EfficientViTBlockConfig block;
        block.msa.in_channels = width;
        block.msa.d = variant.attention_dim;
        block.msa.scales = variant.scales;
        block.msa.eps = variant.attention_eps;
        block.msa.kind = variant.attention_kind;
        block.msa.global_attention = variant.global_attention;
        block.mbconv = {width, width, 1, variant.expand_ratio};
        stage.blocks.push_back(block);
        declare_params(block, detail::stage_block_name(s, i + 1), m.params);
      }
    }
    in = width;
  }

  if (task.kind == Task::Kind::segmentation) {
    SegHeadConfig head;
    for (std::size_t i = 0; i < 3; ++i) {
      head.inputs[i] = {c[i + 2], variant.head_width, 1, 1, 1, false, true, Activation::none};
      declare_params(head.inputs[i], detail::kHeadInputNames[i], m.params);
    }
    for (std::size_t i = 0; i < variant.head_depth; ++i) {
      head.blocks.push_back({variant.head_width, variant.head_width, 1, variant.expand_ratio});
      declare_params(head.blocks.back(), detail::head_block_name(i), m.params);
    }
    head.classifier = {variant.head_width, task.n_classes, 1, 1, 1, true, false, Activation::none};
    declare_params(head.classifier, "head.classifier", m.params);
    m.seg_head = head;
  } else {
    ClsHeadConfig head;
    const std::size_t hidden = c[4] * variant.cls_expand_ratio;
    head.expand = {c[4], hidden, 1, 1, 1, true, false, Activation::hardswish};
    head.classifier = {hidden, task.n_classes, 1, 1, 1, true, false, Activation::none};
    declare_params(head.expand, "head.expand", m.params);
    declare_params(head.classifier, "head.classifier", m.params);
    m.cls_head = head;
  }
  return m;
}

inline Model build_model(std::string_view variant, const Task& task) {
  return build_model(variant_config(variant), task);
}

// Checks that ckpt holds exactly the model's tensors, in canonical order and
// with the expected shapes. The error names the first offending tensor.
inline void validate_checkpoint(const Model& model, const Checkpoint& ckpt) {
  const auto entries = ckpt.entries();
  const std::size_t n = std::max(entries.size(), model.params.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= model.params.size()) {
      throw ConfigError("checkpoint/model mismatch: unexpected tensor '" + entries[i].name + "'");
    }
    const ParamSpec& spec = model.params[i];
    if (i >= entries.size()) {
      throw ConfigError("checkpoint/model mismatch: missing tensor '" + spec.name + "'");
    }
    if (entries[i].name != spec.name) {
      throw ConfigError("checkpoint/model mismatch: expected tensor '" + spec.name + "', found '" +
                        entries[i].name + "'");
    }
    if (entries[i].value.shape() != spec.shape) {
      throw ConfigError("checkpoint/model mismatch: tensor '" + spec.name + "' has shape " +
                        to_string(entries[i].value.shape()) + ", model expects " + to_string(spec.shape));
    }
  }
}

inline void check_input(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw InputError("model input must be N,3,H,W, got " + to_string(x.shape()));
  }
  if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0) {
    throw InputError("input resolution " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                     " must be divisible by 32");
  }
}

inline Tensor stem_forward(const Model& m, const Checkpoint& ckpt, const Tensor& x) {
  Tensor y = conv_layer_forward(x, m.stem_conv, bind_conv_layer(m.stem_conv, ckpt, "backbone.stem.conv"));
  for (std::size_t i = 0; i < m.stem_blocks.size(); ++i) {
    y = dsconv_forward(y, m.stem_blocks[i], bind_dsconv(m.stem_blocks[i], ckpt, detail::stem_block_name(i)));
  }
  return y;
}

inline Tensor stage_forward(const Model& m, const Checkpoint& ckpt, std::size_t s, Tensor x) {
  const StageConfig& stage = m.stages[s];
  std::size_t index = 0;
  for (const auto& cfg : stage.mbconvs) {
    x = mbconv_forward(x, cfg, bind_mbconv(cfg, ckpt, detail::stage_block_name(s, index++)));
  }
  for (const auto& cfg : stage.blocks) {
    x = efficientvit_block_forward(x, cfg, bind_efficientvit_block(cfg, ckpt, detail::stage_block_name(s, index++)));
  }
  return x;
}

inline Pyramid backbone_forward(const Model& m, const Checkpoint& ckpt, const Tensor& x) {
  check_input(x);
  Tensor y = stem_forward(m, ckpt, x);
  y = stage_forward(m, ckpt, 0, std::move(y));
  Pyramid p;
  p.p2 = stage_forward(m, ckpt, 1, std::move(y));
  p.p3 = stage_forward(m, ckpt, 2, p.p2);
  p.p4 = stage_forward(m, ckpt, 3, p.p3);
  return p;
}

// 1x1 conv of P2/P3/P4 to the head width, upsample to stride 8, add, run
// the head MBConvs, predict per-class logits and upsample x8.
inline Tensor seg_head_forward(const Model& m, const Checkpoint& ckpt, const Pyramid& p) {
  if (!m.seg_head) throw ConfigError("seg_head_forward: model was built for classification");
  const SegHeadConfig& head = *m.seg_head;
  const std::array<const Tensor*, 3> levels{&p.p2, &p.p3, &p.p4};
  const std::size_t h = p.p2.dim(2), w = p.p2.dim(3);
  Tensor fused;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor& level = *levels[i];
    if (level.rank() != 4 || level.dim(1) != head.inputs[i].in_channels) {
      throw ConfigError(std::string("seg head: ") + detail::kHeadInputNames[i] + " expects " +
                        std::to_string(head.inputs[i].in_channels) + " channels, got " + to_string(level.shape()));
    }
    Tensor y = conv_layer_forward(level, head.inputs[i], bind_conv_layer(head.inputs[i], ckpt, detail::kHeadInputNames[i]));
    if (y.dim(2) != h || y.dim(3) != w) y = bilinear_upsample(y, h, w);
    fused = i == 0 ? y : add(fused, y);
  }
  for (std::size_t i = 0; i < head.blocks.size(); ++i) {
    fused = mbconv_forward(fused, head.blocks[i], bind_mbconv(head.blocks[i], ckpt, detail::head_block_name(i)));
  }
  const Tensor logits =
      conv_layer_forward(fused, head.classifier, bind_conv_layer(head.classifier, ckpt, "head.classifier"));
  return bilinear_upsample(logits, h * 8, w * 8);
}

// Global average pool of P4 -> 1x1 expansion + act -> linear classifier.
// Returns N x n_classes.
inline Tensor cls_head_forward(const Model& m, const Checkpoint& ckpt, const Tensor& p4) {
  if (!m.cls_head) throw ConfigError("cls_head_forward: model was built for segmentation");
  const ClsHeadConfig& head = *m.cls_head;
  if (p4.rank() != 4 || p4.dim(1) != head.expand.in_channels) {
    throw ConfigError("cls head expects " + std::to_string(head.expand.in_channels) + " channels, got " +
                      to_string(p4.shape()));
  }
  Tensor y = global_avg_pool(p4);
  y = conv_layer_forward(y, head.expand, bind_conv_layer(head.expand, ckpt, "head.expand"));
  y = conv_layer_forward(y, head.classifier, bind_conv_layer(head.classifier, ckpt, "head.classifier"));
  return y.reshaped({y.dim(0), y.dim(1)});
}

// Segmentation: N,n_classes,H,W logits. Classification: N x n_classes.
inline Tensor forward(const Model& m, const Checkpoint& ckpt, const Tensor& x) {
  const Pyramid p = backbone_forward(m, ckpt, x);
  return m.seg_head ? seg_head_forward(m, ckpt, p) : cls_head_forward(m, ckpt, p.p4);
}

// ---------------------------------------------------------------------------
// Analytic cost accounting (batch 1). Parameters count kernels, biases and
// the affine half of each batch norm; MACs count convolutions and attention
// (the linear form for relu_fast). Norms, activations, additions, pooling
// and resampling are free.

struct PartCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::vector<PartCost> parts;

  std::uint64_t total_params() const {
    std::uint64_t t = 0;
    for (const auto& p : parts) t += p.params;
    return t;
  }
  std::uint64_t total_macs() const {
    std::uint64_t t = 0;
    for (const auto& p : parts) t += p.macs;
    return t;
  }
};

inline CostReport cost_report(const Model& m, std::size_t height, std::size_t width) {
  if (height % 32 != 0 || width % 32 != 0) {
    throw InputError("resolution " + std::to_string(height) + "x" + std::to_string(width) +
                     " must be divisible by 32");
  }
  CostReport r;
  std::size_t h = height, w = width;

  PartCost stem{"stem"};
  stem.params += m.stem_conv.params();
  h = m.stem_conv.out_extent(h);
  w = m.stem_conv.out_extent(w);
  stem.macs += m.stem_conv.macs(h, w);
  for (const auto& b : m.stem_blocks) {
    stem.params += b.params();
    stem.macs += b.macs(h, w);
    h = b.out_extent(h);
    w = b.out_extent(w);
  }
  r.parts.push_back(stem);

  std::array<std::pair<std::size_t, std::size_t>, 4> dims{};
  for (std::size_t s = 0; s < 4; ++s) {
    PartCost part{m.stages[s].name};
    for (const auto& b : m.stages[s].mbconvs) {
      part.params += b.params();
      part.macs += b.macs(h, w);
      h = b.out_extent(h);
      w = b.out_extent(w);
    }
    for (const auto& b : m.stages[s].blocks) {
      part.params += b.params();
      part.macs += b.macs(h, w);
    }
    dims[s] = {h, w};
    r.parts.push_back(part);
  }

  PartCost head{"head"};
  if (m.seg_head) {
    const auto [h8, w8] = dims[1];
    for (std::size_t i = 0; i < 3; ++i) {
      const auto [hi, wi] = dims[i + 1];
      head.params += m.seg_head->inputs[i].params();
      head.macs += m.seg_head->inputs[i].macs(hi, wi);
    }
    for (const auto& b : m.seg_head->blocks) {
      head.params += b.params();
      head.macs += b.macs(h8, w8);
    }
    head.params += m.seg_head->classifier.params();
    head.macs += m.seg_head->classifier.macs(h8, w8);
  } else {
    head.params += m.cls_head->expand.params() + m.cls_head->classifier.params();
    head.macs += m.cls_head->expand.macs(1, 1) + m.cls_head->classifier.macs(1, 1);
  }
  r.parts.push_back(head);
  return r;
}

inline std::uint64_t count_params(const Model& m) {
  return cost_report(m, 32, 32).total_params();
}

inline std::uint64_t count_macs(const Model& m, std::size_t height, std::size_t width) {
  return cost_report(m, height, width).total_macs();
}

// Published parameter / MAC figures for reference configurations.
struct ReferenceCost {
  std::string_view variant;
  Task::Kind kind;
  std::size_t n_classes;
  std::size_t height, width;
  double params;
  double macs;
};

inline constexpr double kParamTolerance = 0.15;
inline constexpr double kMacTolerance = 0.20;

inline constexpr std::array<ReferenceCost, 13> kReferenceCosts{{
    {"B1", Task::Kind::classification, 1000, 224, 224, 9.1e6, 0.52e9},
    {"B1", Task::Kind::classification, 1000, 288, 288, 9.1e6, 0.86e9},
    {"B2", Task::Kind::classification, 1000, 256, 256, 24e6, 2.1e9},
    {"B3", Task::Kind::classification, 1000, 224, 224, 49e6, 4.0e9},
    {"B3", Task::Kind::classification, 1000, 288, 288, 49e6, 6.5e9},
    {"B0", Task::Kind::segmentation, 19, 960, 1920, 0.7e6, 3.9e9},
    {"B1", Task::Kind::segmentation, 19, 896, 1792, 4.8e6, 19e9},
    {"B2", Task::Kind::segmentation, 19, 1024, 2048, 15e6, 74e9},
    {"B3", Task::Kind::segmentation, 19, 1184, 2368, 40e6, 240e9},
    {"B1", Task::Kind::segmentation, 150, 480, 480, 4.8e6, 2.7e9},
    {"B2", Task::Kind::segmentation, 150, 416, 416, 15e6, 6.0e9},
    {"B3", Task::Kind::segmentation, 150, 384, 384, 39e6, 12e9},
    {"B3", Task::Kind::segmentation, 150, 512, 512, 39e6, 22e9},
}};

inline std::optional<ReferenceCost> find_reference(std::string_view variant, const Task& task, std::size_t height,
                                                   std::size_t width) {
  for (const auto& ref : kReferenceCosts) {
    if (ref.variant == variant && ref.kind == task.kind && ref.n_classes == task.n_classes &&
        ref.height == height && ref.width == width) {
      return ref;
    }
  }
  return std::nullopt;
}

inline double relative_gap(double value, double target) { return (value - target) / target; }

}  // namespace evit
