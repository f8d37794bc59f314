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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "evit/attention.hpp"
#include "evit/errors.hpp"
#include "evit/tensor.hpp"

namespace evit::bench {

// Keeps the compiler from discarding a value whose computation is being timed.
template <typename T>
inline void do_not_optimize(const T& value) {
#if defined(__GNUC__) || defined(__clang__)
  asm volatile("" : : "r"(&value) : "memory");
#else
  static volatile const void* sink;
  sink = &value;
#endif
}

struct Timing {
  std::vector<std::uint64_t> samples_ns;  // post-warmup only
  std::uint64_t median_ns = 0;
};

inline std::uint64_t median(std::vector<std::uint64_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : (v[mid - 1] + v[mid]) / 2;
}

// Runs thunk warmup times untimed, then repeats times against the monotonic
// clock. The thunk's return value is consumed.
template <typename Thunk>
Timing time_op(Thunk&& thunk, std::size_t warmup = 3, std::size_t repeats = 11) {
  if (warmup < 1) throw ParameterError("time_op: warmup must be >= 1");
  if (repeats < 5) throw ParameterError("time_op: repeats must be >= 5");
  for (std::size_t i = 0; i < warmup; ++i) {
    auto out = thunk();
    do_not_optimize(out);
  }
  Timing t;
  t.samples_ns.reserve(repeats);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    auto out = thunk();
    do_not_optimize(out);
    const auto stop = std::chrono::steady_clock::now();
    t.samples_ns.push_back(
        static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count()));
  }
  t.median_ns = median(t.samples_ns);
  return t;
}

struct BenchRecord {
  AttentionKind kind = AttentionKind::relu_fast;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t heads = 1;
  std::size_t repeats = 0;
  std::size_t warmup = 0;
  std::uint64_t median_ns = 0;
  std::uint64_t macs = 0;
};

struct ScalingOptions {
  std::size_t warmup = 3;
  std::size_t repeats = 11;
  std::uint64_t seed = 0;
};

// Times `kind` at every token count in ns on fixed uniform(-1, 1) inputs.
inline std::vector<BenchRecord> scaling_experiment(AttentionKind kind, std::span<const std::size_t> ns, std::size_t d,
                                                   std::size_t heads, const ScalingOptions& opt = {}) {
  if (ns.empty()) throw ParameterError("scaling_experiment: no token counts given");
  if (d == 0 || heads == 0) throw ParameterError("scaling_experiment: d and heads must be positive");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 64) throw ParameterError("scaling_experiment: token counts must be >= 64");
    if (i > 0 && ns[i] <= ns[i - 1]) throw ParameterError("scaling_experiment: token counts must increase strictly");
  }
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  auto random_matrix = [&](std::size_t rows, std::size_t cols) {
    std::vector<float> v(rows * cols);
    for (float& x : v) x = dist(rng);
    return Tensor({rows, cols}, std::move(v));
  };

  std::vector<BenchRecord> records;
  for (std::size_t n : ns) {
    struct Head {
      Tensor q, k, v;
    };
    std::vector<Head> inputs;
    for (std::size_t h = 0; h < heads; ++h) inputs.push_back({random_matrix(n, d), random_matrix(n, d), random_matrix(n, d)});
    auto thunk = [&] {
      float checksum = 0.0f;
      for (const Head& h : inputs) checksum += attention(h.q, h.k, h.v, kind, 1e-6f)[0];
      return checksum;
    };
    const Timing t = time_op(thunk, opt.warmup, opt.repeats);
    records.push_back({kind, n, d, heads, opt.repeats, opt.warmup, t.median_ns, heads * attention_macs(kind, n, d)});
  }
  return records;
}

// Least-squares slope of log(y) against log(x).
inline double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ParameterError("fit_loglog_slope: x and y lengths differ");
  if (xs.size() < 4) throw ParameterError("fit_loglog_slope: need at least 4 points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw ParameterError("fit_loglog_slope: values must be positive");
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
  }
  std::vector<double> sorted = lx;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ParameterError("fit_loglog_slope: x values must be distinct");
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

inline double fit_loglog_slope(std::span<const BenchRecord> records) {
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    xs.push_back(static_cast<double>(r.n));
    ys.push_back(static_cast<double>(std::max<std::uint64_t>(r.median_ns, 1)));
  }
  return fit_loglog_slope(xs, ys);
}

inline constexpr const char* kCsvHeader = "kind,N,d,heads,median_ns,macs";

inline void write_csv(std::span<const BenchRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << to_string(r.kind) << ',' << r.n << ',' << r.d << ',' << r.heads << ',' << r.median_ns << ',' << r.macs
        << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace evit::bench
