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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "evit/errors.hpp"
#include "evit/tensor.hpp"

namespace evit {

enum class AttentionKind { softmax, relu_naive, relu_fast };

inline std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::softmax:
      return "softmax";
    case AttentionKind::relu_naive:
      return "relu_naive";
    case AttentionKind::relu_fast:
      return "relu_fast";
  }
  return "?";
}

inline AttentionKind parse_attention_kind(std::string_view name) {
  if (name == "softmax") return AttentionKind::softmax;
  if (name == "relu_naive") return AttentionKind::relu_naive;
  if (name == "relu_fast") return AttentionKind::relu_fast;
  throw ConfigError("unknown attention kind '" + std::string(name) + "'");
}

struct AttentionConfig {
  std::size_t d = 32;      // per-head token dimension
  std::size_t heads = 1;
  float eps = 1e-6f;       // added to the ReLU denominator only
  AttentionKind kind = AttentionKind::relu_fast;

  void validate() const {
    if (d == 0) throw ConfigError("attention: head dimension must be >= 1");
    if (heads == 0) throw ConfigError("attention: head count must be >= 1");
    if (!(eps > 0.0f)) throw ConfigError("attention: eps must be > 0");
  }
};

// Analytic multiply-accumulate count of one single-head call over n tokens.
// The linear form does two d x d passes (K^T V and Q S) plus the two
// length-d normaliser dots; the quadratic forms build every pairwise score
// and then weight every value row.
inline std::uint64_t attention_macs(AttentionKind kind, std::uint64_t n, std::uint64_t d) {
  switch (kind) {
    case AttentionKind::relu_fast:
      return 2 * n * d * d + 2 * n * d;
    case AttentionKind::softmax:
    case AttentionKind::relu_naive:
      return 2 * n * n * d;
  }
  return 0;
}

namespace detail {

inline void check_qkv(const char* op, const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.shape() != k.shape() || v.dim(0) != q.dim(0)) {
    throw DimensionError(std::string(op) + ": Q " + to_string(q.shape()) + ", K " + to_string(k.shape()) +
                         ", V " + to_string(v.shape()) + " are not N x d with matching N and d");
  }
}

inline void check_eps(const char* op, float eps) {
  if (!(eps >= 0.0f)) throw ParameterError(std::string(op) + ": eps must be >= 0");
}

inline std::vector<double> relu_rows(const Tensor& x) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0f ? static_cast<double>(in[i]) : 0.0;
  return out;
}

}  // namespace detail

// O_i = sum_j softmax_j(Q_i . K_j / sqrt(d)) V_j. One query row of scores is
// live at a time, so memory stays O(N) even though time is O(N^2 d).
inline Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  detail::check_qkv("softmax_attention", q, k, v);
  const std::size_t n = q.dim(0), d = q.dim(1), dv = v.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  std::vector<float> out(n * dv);
  std::vector<double> scores(n);
  std::vector<double> acc(dv);

  for (std::size_t i = 0; i < n; ++i) {
    const float* qi = qd.data() + i * d;
    double max_score = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      const float* kj = kd.data() + j * d;
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += static_cast<double>(qi[a]) * kj[a];
      scores[j] = s * scale;
      max_score = std::max(max_score, scores[j]);
    }
    double total = 0.0;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double w = std::exp(scores[j] - max_score);
      total += w;
      const float* vj = vd.data() + j * dv;
      for (std::size_t b = 0; b < dv; ++b) acc[b] += w * vj[b];
    }
    for (std::size_t b = 0; b < dv; ++b) out[i * dv + b] = static_cast<float>(acc[b] / total);
  }
  detail::report_macs(attention_macs(AttentionKind::softmax, n, d));
  return Tensor({n, dv}, std::move(out));
}

// ReLU attention evaluated the quadratic way: the full N x N similarity
// matrix ReLU(Q) ReLU(K)^T is materialised, then each row is normalised by
// its own sum (+ eps) and applied to V.
inline Tensor relu_attention_naive(const Tensor& q, const Tensor& k, const Tensor& v, float eps = 1e-6f) {
  detail::check_qkv("relu_attention_naive", q, k, v);
  detail::check_eps("relu_attention_naive", eps);
  const std::size_t n = q.dim(0), d = q.dim(1), dv = v.dim(1);
  const auto rq = detail::relu_rows(q);
  const auto rk = detail::relu_rows(k);
  auto vd = v.data();

  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += rq[i * d + a] * rk[j * d + a];
      sim[i * n + j] = s;
    }
  }

  std::vector<float> out(n * dv);
  std::vector<double> acc(dv);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double s = sim[i * n + j];
      denom += s;
      const float* vj = vd.data() + j * dv;
      for (std::size_t b = 0; b < dv; ++b) acc[b] += s * vj[b];
    }
    denom += eps;
    for (std::size_t b = 0; b < dv; ++b) out[i * dv + b] = static_cast<float>(acc[b] / denom);
  }
  detail::report_macs(attention_macs(AttentionKind::relu_naive, n, d));
  return Tensor({n, dv}, std::move(out));
}

namespace detail {

// Key/value summary shared by every query: S = sum_j ReLU(K_j)^T V_j (d x dv)
// and z = sum_j ReLU(K_j)^T (d). Summed sequentially over j.
struct KeyValueSummary {
  std::size_t d = 0, dv = 0;
  std::vector<double> s;
  std::vector<double> z;
};

inline KeyValueSummary summarize_keys(const Tensor& k, const Tensor& v) {
  KeyValueSummary sum;
  const std::size_t n = k.dim(0);
  sum.d = k.dim(1);
  sum.dv = v.dim(1);
  sum.s.assign(sum.d * sum.dv, 0.0);
  sum.z.assign(sum.d, 0.0);
  auto kd = k.data();
  auto vd = v.data();
  for (std::size_t j = 0; j < n; ++j) {
    const float* kj = kd.data() + j * sum.d;
    const float* vj = vd.data() + j * sum.dv;
    for (std::size_t a = 0; a < sum.d; ++a) {
      if (!(kj[a] > 0.0f)) continue;
      const double ka = kj[a];
      sum.z[a] += ka;
      double* srow = sum.s.data() + a * sum.dv;
      for (std::size_t b = 0; b < sum.dv; ++b) srow[b] += ka * vj[b];
    }
  }
  return sum;
}

}  // namespace detail

// ReLU attention in linear form: S and z are built once and reused for every
// query, O_i = ReLU(Q_i) S / (ReLU(Q_i) z + eps). Nothing of size N x N is
// ever allocated; auxiliary storage is d*dv + d + dv doubles.
inline Tensor relu_attention_fast(const Tensor& q, const Tensor& k, const Tensor& v, float eps = 1e-6f) {
  detail::check_qkv("relu_attention_fast", q, k, v);
  detail::check_eps("relu_attention_fast", eps);
  const std::size_t n = q.dim(0), d = q.dim(1), dv = v.dim(1);
  const auto sum = detail::summarize_keys(k, v);
  auto qd = q.data();

  std::vector<float> out(n * dv);
  std::vector<double> num(dv);
  for (std::size_t i = 0; i < n; ++i) {
    const float* qi = qd.data() + i * d;
    std::fill(num.begin(), num.end(), 0.0);
    double denom = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      if (!(qi[a] > 0.0f)) continue;
      const double qa = qi[a];
      denom += qa * sum.z[a];
      const double* srow = sum.s.data() + a * dv;
      for (std::size_t b = 0; b < dv; ++b) num[b] += qa * srow[b];
    }
    denom += eps;
    for (std::size_t b = 0; b < dv; ++b) out[i * dv + b] = static_cast<float>(num[b] / denom);
  }
  detail::report_macs(attention_macs(AttentionKind::relu_fast, n, d));
  return Tensor({n, dv}, std::move(out));
}

struct AttentionGrads {
  Tensor dq, dk, dv;
};

// Reverse-mode gradients of relu_attention_fast. With num_i = q_i S,
// den_i = q_i . z + eps and O_i = num_i / den_i (q = ReLU(Q), k = ReLU(K)):
//   g_num_i = dO_i / den_i          g_den_i = -(dO_i . O_i) / den_i
//   dS = sum_i q_i^T g_num_i        dz = sum_i g_den_i q_i
//   dq_i = S g_num_i + g_den_i z    dk_j = dS V_j + dz      dV_j = k_j dS
// and dQ, dK are dq, dk masked by Q > 0, K > 0 (ReLU'(0) = 0). O(N d^2).
inline AttentionGrads relu_attention_fast_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                                                   const Tensor& grad_out, float eps = 1e-6f) {
  detail::check_qkv("relu_attention_fast_backward", q, k, v);
  detail::check_eps("relu_attention_fast_backward", eps);
  if (grad_out.rank() != 2 || grad_out.dim(0) != q.dim(0) || grad_out.dim(1) != v.dim(1)) {
    throw DimensionError("relu_attention_fast_backward: dO " + to_string(grad_out.shape()) +
                         " does not match output shape [" + std::to_string(q.dim(0)) + ", " +
                         std::to_string(v.dim(1)) + "]");
  }
  const std::size_t n = q.dim(0), d = q.dim(1), dv = v.dim(1);
  const auto sum = detail::summarize_keys(k, v);
  const auto rq = detail::relu_rows(q);
  const auto rk = detail::relu_rows(k);
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  auto god = grad_out.data();

  std::vector<double> ds(d * dv, 0.0);
  std::vector<double> dz(d, 0.0);
  std::vector<double> gnum(dv);
  std::vector<float> dq(n * d);

  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = rq.data() + i * d;
    const float* go = god.data() + i * dv;
    double denom = eps;
    for (std::size_t a = 0; a < d; ++a) denom += qi[a] * sum.z[a];
    double go_dot_out = 0.0;
    for (std::size_t b = 0; b < dv; ++b) {
      double num = 0.0;
      for (std::size_t a = 0; a < d; ++a) num += qi[a] * sum.s[a * dv + b];
      go_dot_out += static_cast<double>(go[b]) * (num / denom);
      gnum[b] = go[b] / denom;
    }
    const double gden = -go_dot_out / denom;
    for (std::size_t a = 0; a < d; ++a) {
      dz[a] += gden * qi[a];
      double* dsrow = ds.data() + a * dv;
      for (std::size_t b = 0; b < dv; ++b) dsrow[b] += qi[a] * gnum[b];
      double g = gden * sum.z[a];
      const double* srow = sum.s.data() + a * dv;
      for (std::size_t b = 0; b < dv; ++b) g += srow[b] * gnum[b];
      dq[i * d + a] = qd[i * d + a] > 0.0f ? static_cast<float>(g) : 0.0f;
    }
  }

  std::vector<float> dk(n * d);
  std::vector<float> dvv(n * dv);
  for (std::size_t j = 0; j < n; ++j) {
    const float* vj = vd.data() + j * dv;
    const double* kj = rk.data() + j * d;
    for (std::size_t a = 0; a < d; ++a) {
      double g = dz[a];
      const double* dsrow = ds.data() + a * dv;
      for (std::size_t b = 0; b < dv; ++b) g += dsrow[b] * vj[b];
      dk[j * d + a] = kd[j * d + a] > 0.0f ? static_cast<float>(g) : 0.0f;
    }
    for (std::size_t b = 0; b < dv; ++b) {
      double g = 0.0;
      for (std::size_t a = 0; a < d; ++a) g += kj[a] * ds[a * dv + b];
      dvv[j * dv + b] = static_cast<float>(g);
    }
  }
  return {Tensor({n, d}, std::move(dq)), Tensor({n, d}, std::move(dk)), Tensor({n, dv}, std::move(dvv))};
}

inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, AttentionKind kind, float eps) {
  switch (kind) {
    case AttentionKind::softmax:
      return softmax_attention(q, k, v);
    case AttentionKind::relu_naive:
      return relu_attention_naive(q, k, v, eps);
    case AttentionKind::relu_fast:
      return relu_attention_fast(q, k, v, eps);
  }
  throw ConfigError("attention: unknown kind");
}

// Columns [col, col + width) of an N x C token matrix.
inline Tensor token_columns(const Tensor& tokens, std::size_t col, std::size_t width) {
  if (tokens.rank() != 2 || col + width > tokens.dim(1)) {
    throw DimensionError("token_columns: [" + std::to_string(col) + ", " + std::to_string(col + width) +
                         ") out of range for " + to_string(tokens.shape()));
  }
  const std::size_t n = tokens.dim(0), c = tokens.dim(1);
  auto in = tokens.data();
  std::vector<float> out(n * width);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(in.data() + i * c + col, width, out.data() + i * width);
  return Tensor({n, width}, std::move(out));
}

// Tokens carry heads x [Q | K | V] blocks of d columns each: head h owns
// columns [3hd, 3hd + 3d). Each head attends independently and its output
// lands in columns [hd, hd + d) of the result.
inline Tensor multi_head_attention(const Tensor& tokens, const AttentionConfig& cfg) {
  cfg.validate();
  if (tokens.rank() != 2) {
    throw DimensionError("multi_head_attention: tokens must be N x C, got " + to_string(tokens.shape()));
  }
  const std::size_t d = cfg.d, heads = cfg.heads;
  if (tokens.dim(1) != heads * 3 * d) {
    throw ConfigError("multi_head_attention: token width " + std::to_string(tokens.dim(1)) +
                      " is not heads*3*d = " + std::to_string(heads * 3 * d));
  }
  const std::size_t n = tokens.dim(0);
  std::vector<float> out(n * heads * d);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = token_columns(tokens, h * 3 * d, d);
    const Tensor kh = token_columns(tokens, h * 3 * d + d, d);
    const Tensor vh = token_columns(tokens, h * 3 * d + 2 * d, d);
    const Tensor oh = attention(qh, kh, vh, cfg.kind, cfg.eps);
    auto src = oh.data();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(src.data() + i * d, d, out.data() + i * heads * d + h * d);
  }
  return Tensor({n, heads * d}, std::move(out));
}

}  // namespace evit
