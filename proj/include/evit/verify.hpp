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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "evit/attention.hpp"
#include "evit/io.hpp"
#include "evit/tensor.hpp"

// Self-check of the attention kernels: linear form vs quadratic form,
// invariances of ReLU attention, and the analytic backward pass against
// central differences of a double-precision quadratic evaluation.
namespace evit::verify {

struct Options {
  std::uint64_t seed = 0;
  std::size_t max_n = 256;
  float eps = 1e-6f;
  std::size_t equivalence_draws = 200;
  std::size_t invariance_draws = 100;
  std::size_t gradient_draws = 50;
};

struct PropertyResult {
  std::string name;
  std::string metric;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t samples = 0;
  std::uint64_t worst_seed = 0;
  bool passed = true;
  bool diagnostic = false;  // informational; never fails the run
};

struct Report {
  std::vector<PropertyResult> properties;

  bool passed() const {
    return std::all_of(properties.begin(), properties.end(),
                       [](const PropertyResult& p) { return p.diagnostic || p.passed; });
  }
};

inline constexpr std::array<std::size_t, 6> kTokenCounts{1, 2, 3, 8, 64, 256};
inline constexpr std::array<std::size_t, 3> kHeadDims{1, 4, 32};
inline constexpr std::array<std::size_t, 3> kHeadCounts{1, 2, 4};

inline constexpr double kEquivalenceAbs = 1e-6;
inline constexpr double kEquivalenceRel = 1e-5;
inline constexpr double kGradientRel = 1e-3;
inline constexpr double kGradientFloor = 1e-3;
inline constexpr double kLinearityAbs = 1e-6;
inline constexpr double kFiniteDifferenceStep = 1e-3;
inline constexpr float kInvarianceEps = 1e-9f;

// |a - b| measured against max(abs, rel * max(|a|, |b|)); <= 1 means within.
inline double tolerance_ratio(double a, double b, double abs_tol, double rel_tol) {
  const double allowed = std::max(abs_tol, rel_tol * std::max(std::fabs(a), std::fabs(b)));
  return std::fabs(a - b) / allowed;
}

inline double worst_ratio(const Tensor& a, const Tensor& b, double abs_tol = kEquivalenceAbs,
                          double rel_tol = kEquivalenceRel) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, tolerance_ratio(a[i], b[i], abs_tol, rel_tol));
  return worst;
}

inline Tensor uniform_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float lo = -1.0f,
                             float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(rows * cols);
  for (float& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v));
}

// Entries with magnitude in [margin, 1] and random sign.
inline Tensor away_from_zero(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float margin) {
  std::uniform_real_distribution<float> mag(margin, 1.0f);
  std::bernoulli_distribution sign(0.5);
  std::vector<float> v(rows * cols);
  for (float& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor({rows, cols}, std::move(v));
}

inline Tensor scaled(const Tensor& x, float c) {
  return map_elements(x, [c](float v) { return v * c; });
}

inline Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t cols = x.dim(1);
  std::vector<float> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(in.data() + perm[i] * cols, cols, out.data() + i * cols);
  return Tensor(x.shape(), std::move(out));
}

// Per query: does it have a non-zero similarity with at least one key?
inline std::vector<bool> live_queries(const Tensor& q, const Tensor& k) {
  const std::size_t n = q.dim(0), d = q.dim(1);
  std::vector<bool> key_active(d, false);
  for (std::size_t j = 0; j < k.dim(0); ++j)
    for (std::size_t a = 0; a < d; ++a)
      if (k[j * d + a] > 0.0f) key_active[a] = true;
  std::vector<bool> live(n, false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d && !live[i]; ++a) live[i] = q[i * d + a] > 0.0f && key_active[a];
  return live;
}

inline std::size_t dead_queries(const Tensor& q, const Tensor& k) {
  const auto live = live_queries(q, k);
  return static_cast<std::size_t>(std::count(live.begin(), live.end(), false));
}

// sum_i sum_b g_ib O_ib for the quadratic ReLU form, all in double.
inline double naive_objective(const std::vector<double>& q, const std::vector<double>& k, const std::vector<double>& v,
                              const std::vector<double>& g, std::size_t n, std::size_t d, double eps) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = eps;
    std::vector<double> num(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += std::max(q[i * d + a], 0.0) * std::max(k[j * d + a], 0.0);
      denom += s;
      for (std::size_t b = 0; b < d; ++b) num[b] += s * v[j * d + b];
    }
    for (std::size_t b = 0; b < d; ++b) total += g[i * d + b] * num[b] / denom;
  }
  return total;
}

inline std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

namespace detail {

inline void record(PropertyResult& p, double value, std::uint64_t seed) {
  ++p.samples;
  if (value > p.worst || std::isnan(value)) {
    p.worst = std::isnan(value) ? INFINITY : value;
    p.worst_seed = seed;
  }
}

inline void finish(PropertyResult& p) { p.passed = p.worst <= p.tolerance; }

inline std::uint64_t draw_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t i) {
  return evit::detail::splitmix64(base ^ evit::detail::splitmix64(stream * 0x100000001b3ull + i));
}

inline std::vector<std::size_t> token_counts(std::size_t max_n) {
  std::vector<std::size_t> ns;
  for (std::size_t n : kTokenCounts)
    if (n <= max_n) ns.push_back(n);
  if (ns.empty()) ns.push_back(1);
  return ns;
}

}  // namespace detail

inline Report run(const Options& opt) {
  Report report;
  const auto ns = detail::token_counts(opt.max_n);
  std::size_t hazards = 0;

  // Linear form against quadratic form.
  {
    PropertyResult p{"linearization: relu_fast == relu_naive", "max |fast-naive| / max(1e-6, 1e-5*|naive|)"};
    p.tolerance = 1.0;
    for (std::size_t i = 0; i < opt.equivalence_draws; ++i) {
      const std::uint64_t seed = detail::draw_seed(opt.seed, 1, i);
      std::mt19937_64 rng(seed);
      const std::size_t n = ns[i % ns.size()];
      const std::size_t d = kHeadDims[(i / ns.size()) % kHeadDims.size()];
      const std::size_t heads = kHeadCounts[(i / (ns.size() * kHeadDims.size())) % kHeadCounts.size()];
      double worst = 0.0;
      for (std::size_t h = 0; h < heads; ++h) {
        const Tensor q = uniform_matrix(rng, n, d), k = uniform_matrix(rng, n, d), v = uniform_matrix(rng, n, d);
        if (opt.eps == 0.0f && dead_queries(q, k) > 0) {
          hazards += dead_queries(q, k);
          continue;
        }
        worst = std::max(worst, worst_ratio(relu_attention_fast(q, k, v, opt.eps), relu_attention_naive(q, k, v, opt.eps)));
      }
      detail::record(p, worst, seed);
    }
    detail::finish(p);
    report.properties.push_back(p);
  }

  // Invariances, relu kinds at eps -> 0.
  {
    PropertyResult scale{"positive scale invariance (c in {0.1, 1, 10})", "max ratio to max(1e-6, 1e-5 rel)"};
    PropertyResult kv{"joint K/V permutation invariance", "max ratio to max(1e-6, 1e-5 rel)"};
    PropertyResult qperm{"query permutation equivariance", "max ratio to max(1e-6, 1e-5 rel)"};
    PropertyResult convex{"convex-combination bounds", "max excursion outside [min V, max V] / tolerance"};
    scale.tolerance = kv.tolerance = qperm.tolerance = convex.tolerance = 1.0;
    for (std::size_t i = 0; i < opt.invariance_draws; ++i) {
      const std::uint64_t seed = detail::draw_seed(opt.seed, 2, i);
      std::mt19937_64 rng(seed);
      const std::size_t n = ns[i % ns.size()];
      const std::size_t d = kHeadDims[(i / ns.size()) % kHeadDims.size()];
      const Tensor q = uniform_matrix(rng, n, d), k = uniform_matrix(rng, n, d), v = uniform_matrix(rng, n, d);
      const float eps = kInvarianceEps;
      const Tensor base = relu_attention_fast(q, k, v, eps);

      double s_worst = 0.0;
      for (float c : {0.1f, 1.0f, 10.0f}) {
        s_worst = std::max(s_worst, worst_ratio(relu_attention_fast(scaled(q, c), k, v, eps), base));
        s_worst = std::max(s_worst, worst_ratio(relu_attention_fast(q, scaled(k, c), v, eps), base));
        s_worst = std::max(s_worst, worst_ratio(relu_attention_naive(scaled(q, c), k, v, eps), base));
      }
      detail::record(scale, s_worst, seed);

      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      double kv_worst = 0.0, q_worst = 0.0, c_worst = 0.0;
      const auto live = live_queries(q, k);
      for (AttentionKind kind : {AttentionKind::relu_fast, AttentionKind::relu_naive, AttentionKind::softmax}) {
        const Tensor out = attention(q, k, v, kind, eps);
        kv_worst = std::max(kv_worst, worst_ratio(attention(q, permute_rows(k, perm), permute_rows(v, perm), kind, eps), out));
        q_worst = std::max(q_worst, worst_ratio(attention(permute_rows(q, perm), k, v, kind, eps), permute_rows(out, perm)));

        for (std::size_t b = 0; b < d; ++b) {
          float lo = INFINITY, hi = -INFINITY;
          for (std::size_t j = 0; j < n; ++j) {
            lo = std::min(lo, v[j * d + b]);
            hi = std::max(hi, v[j * d + b]);
          }
          const double tol = 1e-6 + 1e-5 * (hi - lo);
          for (std::size_t r = 0; r < n; ++r) {
            if (kind != AttentionKind::softmax && !live[r]) continue;
            const double o = out[r * d + b];
            const double excursion = std::max({0.0, lo - o, o - hi});
            c_worst = std::max(c_worst, excursion / tol);
          }
        }
      }
      detail::record(kv, kv_worst, seed);
      detail::record(qperm, q_worst, seed);
      detail::record(convex, c_worst, seed);
    }
    for (auto* p : {&scale, &kv, &qperm, &convex}) {
      detail::finish(*p);
      report.properties.push_back(*p);
    }
  }

  // Backward pass against central differences of the quadratic form.
  {
    PropertyResult grad{"backward vs finite differences (N=6, d=3)", "max |analytic-fd| / max(|fd|, 1e-3)"};
    PropertyResult lin{"dV equals finite-difference slope (linear in V)", "max |analytic-fd|"};
    grad.tolerance = kGradientRel;
    lin.tolerance = kLinearityAbs;
    const std::size_t n = 6, d = 3;
    const double h = kFiniteDifferenceStep;
    for (std::size_t i = 0; i < opt.gradient_draws; ++i) {
      const std::uint64_t seed = detail::draw_seed(opt.seed, 3, i);
      std::mt19937_64 rng(seed);
      const Tensor q = away_from_zero(rng, n, d, 0.1f), k = away_from_zero(rng, n, d, 0.1f);
      const Tensor v = uniform_matrix(rng, n, d), g = uniform_matrix(rng, n, d);
      if (opt.eps == 0.0f && dead_queries(q, k) > 0) {
        hazards += dead_queries(q, k);
        continue;
      }
      const AttentionGrads an = relu_attention_fast_backward(q, k, v, g, opt.eps);
      std::array<std::vector<double>, 3> inputs{to_double(q), to_double(k), to_double(v)};
      const auto gd = to_double(g);
      const std::array<const Tensor*, 3> analytic{&an.dq, &an.dk, &an.dv};
      double g_worst = 0.0, l_worst = 0.0;
      for (std::size_t which = 0; which < 3; ++which) {
        for (std::size_t e = 0; e < n * d; ++e) {
          auto plus = inputs, minus = inputs;
          plus[which][e] += h;
          minus[which][e] -= h;
          const double fd = (naive_objective(plus[0], plus[1], plus[2], gd, n, d, opt.eps) -
                             naive_objective(minus[0], minus[1], minus[2], gd, n, d, opt.eps)) /
                            (2.0 * h);
          const double a = (*analytic[which])[e];
          g_worst = std::max(g_worst, std::fabs(a - fd) / std::max(std::fabs(fd), kGradientFloor));
          if (which == 2) l_worst = std::max(l_worst, std::fabs(a - fd));
        }
      }
      detail::record(grad, g_worst, seed);
      detail::record(lin, l_worst, seed);
    }
    detail::finish(grad);
    detail::finish(lin);
    report.properties.push_back(grad);
    report.properties.push_back(lin);
  }

  if (opt.eps == 0.0f) {
    PropertyResult hazard{"dead-query division hazard (eps = 0)", "query rows with zero denominator (0/0)"};
    hazard.diagnostic = true;
    hazard.worst = static_cast<double>(hazards);
    hazard.samples = hazards;
    hazard.passed = hazards == 0;
    report.properties.push_back(hazard);
  }
  return report;
}

}  // namespace evit::verify
