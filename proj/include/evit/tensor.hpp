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
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evit/errors.hpp"

namespace evit {

// Extents of a tensor, outermost first. Feature maps are N,C,H,W; matrices
// are rows,cols.
using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// Dense f32 array of rank 1..4, row-major. Immutable once built: the payload
// is shared between copies, so passing tensors by value is cheap.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 4) {
      throw DimensionError("tensor rank must be 1..4, got shape " + to_string(shape_));
    }
    for (std::size_t e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape_));
    }
    if (data.size() != shape_numel(shape_)) {
      throw DimensionError("tensor payload has " + std::to_string(data.size()) +
                           " elements but shape " + to_string(shape_) + " needs " +
                           std::to_string(shape_numel(shape_)));
    }
    data_ = std::make_shared<const std::vector<float>>(std::move(data));
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0f); }

  static Tensor full(Shape shape, float value) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, value));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return data_ ? data_->size() : 0; }
  bool empty() const noexcept { return !data_; }

  std::span<const float> data() const noexcept {
    return data_ ? std::span<const float>(*data_) : std::span<const float>();
  }
  float operator[](std::size_t i) const { return (*data_)[i]; }

  float at(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw DimensionError("index rank " + std::to_string(index.size()) + " for shape " +
                           to_string(shape_));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw DimensionError("index out of range for shape " + to_string(shape_));
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return (*data_)[flat];
  }

  // Same payload viewed through a different shape of equal element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  std::vector<float> to_vector() const { return data_ ? *data_ : std::vector<float>(); }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<float>> data_;
};

// Same shape and bit-identical payload (distinguishes -0.0 and NaN payloads).
inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  return std::memcmp(da.data(), db.data(), da.size_bytes()) == 0;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cannot compare " + to_string(a.shape()) + " with " + to_string(b.shape()));
  }
  float worst = 0.0f;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) worst = std::max(worst, std::fabs(da[i] - db[i]));
  return worst;
}

inline bool all_finite(const Tensor& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](float v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Multiply-accumulate instrumentation. Kernels report their MAC count to the
// innermost active ScopedMacCount on the calling thread; with no scope active
// the report is a no-op.

namespace detail {
inline thread_local std::uint64_t* mac_sink = nullptr;

inline void report_macs(std::uint64_t n) noexcept {
  if (mac_sink) *mac_sink += n;
}
}  // namespace detail

class ScopedMacCount {
 public:
  ScopedMacCount() : outer_(detail::mac_sink) { detail::mac_sink = &count_; }
  ~ScopedMacCount() {
    detail::mac_sink = outer_;
    if (outer_) *outer_ += count_;
  }
  ScopedMacCount(const ScopedMacCount&) = delete;
  ScopedMacCount& operator=(const ScopedMacCount&) = delete;

  std::uint64_t total() const noexcept { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* outer_;
};

// ---------------------------------------------------------------------------
// Kernels

namespace detail {

// c[m x n] = a[m x k] * b[k x n] (+ row_bias[i]), all row-major with leading
// dimensions. Every dot product is summed in f64, sequentially over k, and
// rounded once, so the result does not depend on the blocking below.
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                 const float* b, std::size_t ldb, float* c, std::size_t ldc,
                 const float* row_bias = nullptr) {
  constexpr std::size_t kCols = 128;
  constexpr std::size_t kRows = 4;
  alignas(64) double acc[kRows][kCols];

  for (std::size_t j0 = 0; j0 < n; j0 += kCols) {
    const std::size_t jn = std::min(kCols, n - j0);
    std::size_t i = 0;
    for (; i + kRows <= m; i += kRows) {
      for (auto& row : acc) std::fill(row, row + jn, 0.0);
      const float* a0 = a + (i + 0) * lda;
      const float* a1 = a + (i + 1) * lda;
      const float* a2 = a + (i + 2) * lda;
      const float* a3 = a + (i + 3) * lda;
      for (std::size_t t = 0; t < k; ++t) {
        const float* brow = b + t * ldb + j0;
        const double w0 = a0[t], w1 = a1[t], w2 = a2[t], w3 = a3[t];
        for (std::size_t jj = 0; jj < jn; ++jj) {
          const double v = brow[jj];
          acc[0][jj] += w0 * v;
          acc[1][jj] += w1 * v;
          acc[2][jj] += w2 * v;
          acc[3][jj] += w3 * v;
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        float* crow = c + (i + r) * ldc + j0;
        const double bias = row_bias ? static_cast<double>(row_bias[i + r]) : 0.0;
        for (std::size_t jj = 0; jj < jn; ++jj) crow[jj] = static_cast<float>(acc[r][jj] + bias);
      }
    }
    for (; i < m; ++i) {
      std::fill(acc[0], acc[0] + jn, 0.0);
      const float* arow = a + i * lda;
      for (std::size_t t = 0; t < k; ++t) {
        const float* brow = b + t * ldb + j0;
        const double w = arow[t];
        for (std::size_t jj = 0; jj < jn; ++jj) acc[0][jj] += w * static_cast<double>(brow[jj]);
      }
      float* crow = c + i * ldc + j0;
      const double bias = row_bias ? static_cast<double>(row_bias[i]) : 0.0;
      for (std::size_t jj = 0; jj < jn; ++jj) crow[jj] = static_cast<float>(acc[0][jj] + bias);
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(m * n);
  detail::gemm(m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n);
  detail::report_macs(static_cast<std::uint64_t>(m) * n * k);
  return Tensor({m, n}, std::move(out));
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + to_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<float> out(r * c);
  auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return Tensor({c, r}, std::move(out));
}

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

namespace detail {

struct ConvGeometry {
  std::size_t batch, in_channels, in_h, in_w;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t out_h, out_w;
  std::size_t groups, in_per_group, out_per_group;
  std::size_t stride, padding;

  std::uint64_t macs() const noexcept {
    return static_cast<std::uint64_t>(batch) * out_channels * out_h * out_w * in_per_group * kernel_h *
           kernel_w;
  }
};

inline ConvGeometry conv_geometry(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
                                  const Conv2dOptions& opt) {
  if (x.rank() != 4) throw DimensionError("conv2d: input must be N,C,H,W, got " + to_string(x.shape()));
  if (w.rank() != 4) {
    throw DimensionError("conv2d: kernel must be Cout,Cin/g,kh,kw, got " + to_string(w.shape()));
  }
  if (opt.stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  if (opt.groups == 0) throw DimensionError("conv2d: groups must be >= 1");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  g.groups = opt.groups;
  g.stride = opt.stride;
  g.padding = opt.padding;
  if (g.in_channels % g.groups != 0 || g.out_channels % g.groups != 0) {
    throw DimensionError("conv2d: channels " + std::to_string(g.in_channels) + "->" +
                         std::to_string(g.out_channels) + " not divisible by groups " +
                         std::to_string(g.groups));
  }
  g.in_per_group = g.in_channels / g.groups;
  g.out_per_group = g.out_channels / g.groups;
  if (w.dim(1) != g.in_per_group) {
    throw DimensionError("conv2d: kernel " + to_string(w.shape()) + " does not match input " +
                         to_string(x.shape()) + " with groups " + std::to_string(g.groups));
  }
  if (g.in_h + 2 * g.padding < g.kernel_h || g.in_w + 2 * g.padding < g.kernel_w) {
    throw DimensionError("conv2d: kernel " + to_string(w.shape()) + " larger than padded input " +
                         to_string(x.shape()));
  }
  g.out_h = (g.in_h + 2 * g.padding - g.kernel_h) / g.stride + 1;
  g.out_w = (g.in_w + 2 * g.padding - g.kernel_w) / g.stride + 1;
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.out_channels)) {
    throw DimensionError("conv2d: bias " + to_string(bias->shape()) + " does not match " +
                         std::to_string(g.out_channels) + " output channels");
  }
  return g;
}

// Range of output columns whose input column ox*stride + kx - pad lies in [0, in_w).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                       std::size_t stride, std::size_t pad) {
  // ox*stride + k >= pad  and  ox*stride + k - pad <= in - 1
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  if (in + pad < k + 1) return {0, 0};
  std::size_t hi = (in - 1 + pad - k) / stride + 1;
  hi = std::min(hi, out);
  if (lo >= hi) return {0, 0};
  return {lo, hi};
}

}  // namespace detail

// Direct cross-correlation. Each output element sums in f64 over
// (input channel, kernel row, kernel col) in that order.
inline Tensor conv2d_direct(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
                            const Conv2dOptions& opt = {}) {
  const auto g = detail::conv_geometry(x, w, bias, opt);
  const std::size_t plane_in = g.in_h * g.in_w;
  const std::size_t plane_out = g.out_h * g.out_w;
  std::vector<float> out(g.batch * g.out_channels * plane_out);
  std::vector<double> acc(plane_out);
  auto xd = x.data();
  auto wd = w.data();

  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const std::size_t group = co / g.out_per_group;
      for (std::size_t cl = 0; cl < g.in_per_group; ++cl) {
        const std::size_t ci = group * g.in_per_group + cl;
        const float* in = xd.data() + (n * g.in_channels + ci) * plane_in;
        const float* kern = wd.data() + (co * g.in_per_group + cl) * g.kernel_h * g.kernel_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const double wv = kern[ky * g.kernel_w + kx];
            const auto [ox_lo, ox_hi] = detail::valid_range(g.out_w, g.in_w, kx, g.stride, g.padding);
            if (ox_lo >= ox_hi) continue;
            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
              const std::size_t iy_shifted = oy * g.stride + ky;
              if (iy_shifted < g.padding || iy_shifted - g.padding >= g.in_h) continue;
              const float* in_row = in + (iy_shifted - g.padding) * g.in_w;
              double* acc_row = acc.data() + oy * g.out_w;
              if (g.stride == 1) {
                for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                  acc_row[ox] += wv * static_cast<double>(in_row[ox + kx - g.padding]);
                }
              } else {
                for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                  acc_row[ox] += wv * static_cast<double>(in_row[ox * g.stride + kx - g.padding]);
                }
              }
            }
          }
        }
      }
      float* dst = out.data() + (n * g.out_channels + co) * plane_out;
      const double b = bias ? static_cast<double>((*bias)[co]) : 0.0;
      for (std::size_t p = 0; p < plane_out; ++p) dst[p] = static_cast<float>(acc[p] + b);
    }
  }
  detail::report_macs(g.macs());
  return Tensor({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out));
}

// Lowering to matrix products: per group, unfold the input into a
// (Cin/g*kh*kw) x (H'*W') column matrix and multiply by the group's kernel
// rows. A 1x1 stride-1 unpadded kernel skips the unfold.
inline Tensor conv2d_im2col(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
                            const Conv2dOptions& opt = {}) {
  const auto g = detail::conv_geometry(x, w, bias, opt);
  const std::size_t plane_in = g.in_h * g.in_w;
  const std::size_t plane_out = g.out_h * g.out_w;
  const std::size_t k = g.in_per_group * g.kernel_h * g.kernel_w;
  const bool pointwise = g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
  std::vector<float> out(g.batch * g.out_channels * plane_out);
  std::vector<float> cols(pointwise ? 0 : k * plane_out);
  auto xd = x.data();
  auto wd = w.data();
  const float* bias_ptr = bias ? bias->data().data() : nullptr;

  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const float* in = xd.data() + (n * g.in_channels + grp * g.in_per_group) * plane_in;
      const float* rhs = in;
      if (!pointwise) {
        std::fill(cols.begin(), cols.end(), 0.0f);
        for (std::size_t cl = 0; cl < g.in_per_group; ++cl) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              float* row = cols.data() + ((cl * g.kernel_h + ky) * g.kernel_w + kx) * plane_out;
              const auto [ox_lo, ox_hi] = detail::valid_range(g.out_w, g.in_w, kx, g.stride, g.padding);
              for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                const std::size_t iy_shifted = oy * g.stride + ky;
                if (iy_shifted < g.padding || iy_shifted - g.padding >= g.in_h) continue;
                const float* in_row = in + cl * plane_in + (iy_shifted - g.padding) * g.in_w;
                for (std::size_t ox = ox_lo; ox < ox_hi; ++ox) {
                  row[oy * g.out_w + ox] = in_row[ox * g.stride + kx - g.padding];
                }
              }
            }
          }
        }
        rhs = cols.data();
      }
      const float* lhs = wd.data() + grp * g.out_per_group * k;
      float* dst = out.data() + (n * g.out_channels + grp * g.out_per_group) * plane_out;
      detail::gemm(g.out_per_group, plane_out, k, lhs, k, rhs, plane_out, dst, plane_out,
                   bias_ptr ? bias_ptr + grp * g.out_per_group : nullptr);
    }
  }
  detail::report_macs(g.macs());
  return Tensor({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out));
}

// Dispatching entry point: depthwise kernels run direct, everything else is
// lowered to matrix products.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
                     const Conv2dOptions& opt = {}) {
  const bool depthwise = x.rank() == 4 && w.rank() == 4 && opt.groups > 1 && opt.groups == x.dim(1) &&
                         w.dim(0) == x.dim(1);
  return depthwise ? conv2d_direct(x, w, bias, opt) : conv2d_im2col(x, w, bias, opt);
}

// ---------------------------------------------------------------------------
// Elementwise and normalization

template <typename F>
Tensor map_elements(const Tensor& x, F&& f) {
  auto in = x.data();
  std::vector<float> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), f);
  return Tensor(x.shape(), std::move(out));
}

inline float relu(float v) { return v > 0.0f ? v : 0.0f; }

inline float hardswish(float v) { return v * std::clamp(v + 3.0f, 0.0f, 6.0f) / 6.0f; }

inline Tensor relu(const Tensor& x) { return map_elements(x, [](float v) { return relu(v); }); }

inline Tensor hardswish(const Tensor& x) { return map_elements(x, [](float v) { return hardswish(v); }); }

struct BatchNorm {
  Tensor gamma, beta, mean, var;
  float eps = 1e-5f;
};

inline Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                              const Tensor& var, float eps) {
  if (x.rank() != 4) throw DimensionError("batchnorm: input must be N,C,H,W, got " + to_string(x.shape()));
  const std::size_t channels = x.dim(1);
  for (const Tensor* p : {&gamma, &beta, &mean, &var}) {
    if (p->rank() != 1 || p->dim(0) != channels) {
      throw DimensionError("batchnorm: statistics " + to_string(p->shape()) + " do not match " +
                           std::to_string(channels) + " channels");
    }
  }
  if (eps < 0.0f) throw ParameterError("batchnorm: eps must be non-negative");
  for (std::size_t c = 0; c < channels; ++c) {
    if (!(var[c] >= 0.0f)) {
      throw ParameterError("batchnorm: variance of channel " + std::to_string(c) + " is negative");
    }
  }
  const std::size_t plane = x.dim(2) * x.dim(3);
  auto in = x.data();
  std::vector<float> out(in.size());
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double scale = static_cast<double>(gamma[c]) / std::sqrt(static_cast<double>(var[c]) + eps);
      const double m = mean[c];
      const double b = beta[c];
      const std::size_t base = (n * channels + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        out[base + p] = static_cast<float>((static_cast<double>(in[base + p]) - m) * scale + b);
      }
    }
  }
  return Tensor(x.shape(), std::move(out));
}

inline Tensor batchnorm_infer(const Tensor& x, const BatchNorm& bn) {
  return batchnorm_infer(x, bn.gamma, bn.beta, bn.mean, bn.var, bn.eps);
}

// ---------------------------------------------------------------------------
// Resampling and structural ops

// Half-pixel-centre bilinear interpolation (align_corners = false). Only
// upscaling is supported.
inline Tensor bilinear_upsample(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw DimensionError("upsample: input must be N,C,H,W, got " + to_string(x.shape()));
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (out_h < h || out_w < w) {
    throw ParameterError("upsample: cannot resize " + to_string(x.shape()) + " down to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);
  const std::size_t planes = x.dim(0) * x.dim(1);
  auto in = x.data();
  std::vector<float> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = in.data() + p * h * w;
    float* dst = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      const float* r0 = src + a.lo * w;
      const float* r1 = src + a.hi * w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[ox];
        const double top = r0[b.lo] + (static_cast<double>(r0[b.hi]) - r0[b.lo]) * b.frac;
        const double bot = r1[b.lo] + (static_cast<double>(r1[b.hi]) - r1[b.lo]) * b.frac;
        dst[oy * out_w + ox] = static_cast<float>(top + (bot - top) * a.frac);
      }
    }
  }
  return Tensor({x.dim(0), x.dim(1), out_h, out_w}, std::move(out));
}

inline Tensor add(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw DimensionError("add: shapes " + to_string(x.shape()) + " and " + to_string(y.shape()) + " differ");
  }
  auto a = x.data();
  auto b = y.data();
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return Tensor(x.shape(), std::move(out));
}

inline Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Tensor& first = xs.front();
  if (first.rank() != 4) throw DimensionError("concat: inputs must be N,C,H,W, got " + to_string(first.shape()));
  std::size_t channels = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != 4 || t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3)) {
      throw DimensionError("concat: " + to_string(t.shape()) + " does not match " + to_string(first.shape()) +
                           " outside the channel axis");
    }
    channels += t.dim(1);
  }
  const std::size_t batch = first.dim(0);
  const std::size_t plane = first.dim(2) * first.dim(3);
  std::vector<float> out(batch * channels * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    float* dst = out.data() + n * channels * plane;
    for (const Tensor& t : xs) {
      const std::size_t count = t.dim(1) * plane;
      auto src = t.data().subspan(n * count, count);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return Tensor({batch, channels, first.dim(2), first.dim(3)}, std::move(out));
}

inline Tensor concat_channels(std::initializer_list<Tensor> xs) {
  return concat_channels(std::span<const Tensor>(xs.begin(), xs.size()));
}

inline Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() != 4 || count == 0 || begin + count > x.dim(1)) {
    throw DimensionError("slice: channels [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + to_string(x.shape()));
  }
  const std::size_t plane = x.dim(2) * x.dim(3);
  std::vector<float> out(x.dim(0) * count * plane);
  auto in = x.data();
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    auto src = in.subspan((n * x.dim(1) + begin) * plane, count * plane);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(n * count * plane));
  }
  return Tensor({x.dim(0), count, x.dim(2), x.dim(3)}, std::move(out));
}

inline Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool: input must be N,C,H,W, got " + to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  auto in = x.data();
  std::vector<float> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += in[p * plane + i];
    out[p] = static_cast<float>(sum / static_cast<double>(plane));
  }
  return Tensor({x.dim(0), x.dim(1), 1, 1}, std::move(out));
}

// Feature map of batch item n viewed as tokens: (H*W) x C, token index h*W + w.
inline Tensor map_to_tokens(const Tensor& x, std::size_t n) {
  if (x.rank() != 4 || n >= x.dim(0)) {
    throw DimensionError("map_to_tokens: bad batch index for " + to_string(x.shape()));
  }
  const std::size_t c = x.dim(1), plane = x.dim(2) * x.dim(3);
  auto in = x.data().subspan(n * c * plane, c * plane);
  std::vector<float> out(c * plane);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out[p * c + ch] = in[ch * plane + p];
  return Tensor({plane, c}, std::move(out));
}

// Inverse of map_to_tokens for a whole batch: tokens[n] is (H*W) x C.
inline Tensor tokens_to_map(std::span<const Tensor> tokens, std::size_t h, std::size_t w) {
  if (tokens.empty()) throw DimensionError("tokens_to_map: no batch items");
  const std::size_t plane = h * w;
  const std::size_t c = tokens.front().rank() == 2 ? tokens.front().dim(1) : 0;
  std::vector<float> out(tokens.size() * c * plane);
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    const Tensor& t = tokens[n];
    if (t.rank() != 2 || t.dim(0) != plane || t.dim(1) != c) {
      throw DimensionError("tokens_to_map: tokens " + to_string(t.shape()) + " do not tile " +
                           std::to_string(h) + "x" + std::to_string(w) + " with " + std::to_string(c) +
                           " channels");
    }
    auto in = t.data();
    float* dst = out.data() + n * c * plane;
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch * plane + p] = in[p * c + ch];
  }
  return Tensor({tokens.size(), c, h, w}, std::move(out));
}

}  // namespace evit
