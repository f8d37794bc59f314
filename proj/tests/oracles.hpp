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

// Independent reference implementations for the unit and acceptance tests.
// Deliberately plain: triple loops in double precision, no blocking, no
// sharing with the library kernels beyond the Tensor container.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "evit/evit.hpp"

namespace oracle {

using evit::Shape;
using evit::Tensor;

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(evit::shape_numel(shape));
  for (float& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor from_double(Shape shape, const std::vector<double>& v) {
  std::vector<float> f(v.begin(), v.end());
  return Tensor(std::move(shape), std::move(f));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i * n + j] += double(a[i * k + t]) * double(b[t * n + j]);
  return from_double({m, n}, c);
}

// Cross-correlation with zero padding, every output element summed on its own.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias, std::size_t stride,
                     std::size_t pad, std::size_t groups) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), cpg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t opg = cout / groups;
  std::vector<double> out(n * cout * oh * ow);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t g = co / opg;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = bias ? double((*bias)[co]) : 0.0;
          for (std::size_t ci = 0; ci < cpg; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = long(oy * stride + ky) - long(pad), ix = long(ox * stride + kx) - long(pad);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                const std::size_t c = g * cpg + ci;
                s += double(x[((b * cin + c) * h + iy) * wd + ix]) * double(w[((co * cpg + ci) * kh + ky) * kw + kx]);
              }
          out[((b * cout + co) * oh + oy) * ow + ox] = s;
        }
    }
  (void)cin;
  return from_double({n, cout, oh, ow}, out);
}

// Attention with the full N x N weight matrix written out.
inline Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t n = q.dim(0), d = q.dim(1);
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += double(q[i * d + a]) * double(k[j * d + a]);
      logits[j] = s / std::sqrt(double(d));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t a = 0; a < d; ++a) out[i * d + a] += logits[j] / z * double(v[j * d + a]);
  }
  return from_double({n, d}, out);
}

inline Tensor relu_attention(const Tensor& q, const Tensor& k, const Tensor& v, double eps) {
  const std::size_t n = q.dim(0), d = q.dim(1);
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double den = eps;
    std::vector<double> num(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += std::max(0.0, double(q[i * d + a])) * std::max(0.0, double(k[j * d + a]));
      den += s;
      for (std::size_t a = 0; a < d; ++a) num[a] += s * double(v[j * d + a]);
    }
    for (std::size_t a = 0; a < d; ++a) out[i * d + a] = num[a] / den;
  }
  return from_double({n, d}, out);
}

inline Tensor channel_slice(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<float> out;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = begin; ch < begin + count; ++ch)
      for (std::size_t p = 0; p < plane; ++p) out.push_back(x[(b * c + ch) * plane + p]);
  return Tensor({n, count, x.dim(2), x.dim(3)}, std::move(out));
}

inline Tensor concat(const std::vector<Tensor>& xs) {
  const std::size_t n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  std::size_t c = 0;
  for (const auto& t : xs) c += t.dim(1);
  std::vector<float> out;
  for (std::size_t b = 0; b < n; ++b)
    for (const auto& t : xs) {
      auto d = t.data();
      const std::size_t per = t.dim(1) * h * w;
      out.insert(out.end(), d.begin() + b * per, d.begin() + (b + 1) * per);
    }
  return Tensor({n, c, h, w}, std::move(out));
}

// Leading `count` rows of a kernel starting at `begin` (output-channel slice).
inline Tensor kernel_rows(const Tensor& w, std::size_t begin, std::size_t count) {
  const std::size_t per = w.numel() / w.dim(0);
  auto d = w.data();
  std::vector<float> out(d.begin() + begin * per, d.begin() + (begin + count) * per);
  Shape s = w.shape();
  s[0] = count;
  return Tensor(s, std::move(out));
}

// Multi-scale token aggregation run group by group: each of the 3 * heads
// d-channel slices gets its own depthwise conv and its own dense 1x1 conv.
inline Tensor aggregate_unfused(const Tensor& qkv, std::size_t groups, std::size_t k, const Tensor& dw,
                                const Tensor& pw) {
  const std::size_t d = qkv.dim(1) / groups;
  std::vector<Tensor> parts;
  for (std::size_t g = 0; g < groups; ++g) {
    const Tensor slice = channel_slice(qkv, g * d, d);
    const Tensor local = conv2d(slice, kernel_rows(dw, g * d, d), std::nullopt, 1, (k - 1) / 2, d);
    parts.push_back(conv2d(local, kernel_rows(pw, g * d, d), std::nullopt, 1, 0, 1));
  }
  return concat(parts);
}

inline Tensor batchnorm(const Tensor& x, const evit::BatchNorm& bn) {
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.numel() / (n * c);
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double scale = double(bn.gamma[ch]) / std::sqrt(double(bn.var[ch]) + double(bn.eps));
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t i = (b * c + ch) * plane + p;
        out[i] = (double(x[i]) - double(bn.mean[ch])) * scale + double(bn.beta[ch]);
      }
    }
  return from_double(x.shape(), out);
}

// Checkpoint with every tensor random, including non-trivial norm statistics.
inline evit::Checkpoint random_weights(std::span<const evit::ParamSpec> specs, std::uint64_t seed,
                                       float scale = 0.5f) {
  std::mt19937_64 rng(seed);
  evit::Checkpoint ckpt;
  for (const auto& p : specs) {
    switch (p.role) {
      case evit::ParamRole::norm_var:
        ckpt.add(p.name, random_tensor(rng, p.shape, 0.5f, 1.5f));
        break;
      case evit::ParamRole::norm_gamma:
        ckpt.add(p.name, random_tensor(rng, p.shape, 0.5f, 1.5f));
        break;
      default:
        ckpt.add(p.name, random_tensor(rng, p.shape, -scale, scale));
    }
  }
  return ckpt;
}

// Zero kernels and biases, identity norm statistics.
inline evit::Checkpoint zero_weights(std::span<const evit::ParamSpec> specs) {
  evit::Checkpoint ckpt;
  for (const auto& p : specs) {
    const bool one = p.role == evit::ParamRole::norm_gamma || p.role == evit::ParamRole::norm_var;
    ckpt.add(p.name, Tensor::full(p.shape, one ? 1.0f : 0.0f));
  }
  return ckpt;
}

inline std::uint64_t learnable_size(std::span<const evit::ParamSpec> specs) {
  std::uint64_t n = 0;
  for (const auto& p : specs)
    if (evit::is_learnable(p.role)) n += evit::shape_numel(p.shape);
  return n;
}

struct CsvRow {
  std::string kind;
  std::size_t n, d, heads;
  std::uint64_t median_ns, macs;
};

inline std::vector<CsvRow> parse_csv(const std::string& text, std::string* header) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    CsvRow r;
    std::string f;
    std::getline(fields, r.kind, ',');
    std::getline(fields, f, ',');
    r.n = std::stoull(f);
    std::getline(fields, f, ',');
    r.d = std::stoull(f);
    std::getline(fields, f, ',');
    r.heads = std::stoull(f);
    std::getline(fields, f, ',');
    r.median_ns = std::stoull(f);
    std::getline(fields, f, ',');
    r.macs = std::stoull(f);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace oracle
