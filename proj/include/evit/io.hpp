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
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evit/checkpoint.hpp"
#include "evit/errors.hpp"
#include "evit/layers.hpp"
#include "evit/model.hpp"
#include "evit/tensor.hpp"

namespace evit {

// ---------------------------------------------------------------------------
// Deterministic initialisation

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Each tensor draws from its own mt19937_64 stream keyed by (seed, name), so
// values do not depend on where the tensor sits in the model. Kernels and
// biases are uniform in +-sqrt(6 / (fan_in + fan_out)); norms start as the
// identity (gamma 1, beta 0, mean 0, var 1). Raw engine output is mapped to
// floats by hand because the standard distributions are not portable.
inline Checkpoint init_weights(std::span<const ParamSpec> params, std::uint64_t seed) {
  Checkpoint ckpt;
  for (const ParamSpec& p : params) {
    const std::size_t n = shape_numel(p.shape);
    std::vector<float> values(n);
    switch (p.role) {
      case ParamRole::norm_gamma:
      case ParamRole::norm_var:
        std::fill(values.begin(), values.end(), 1.0f);
        break;
      case ParamRole::norm_beta:
      case ParamRole::norm_mean:
        break;
      case ParamRole::weight:
      case ParamRole::bias: {
        const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(1, p.fan_in + p.fan_out)));
        std::mt19937_64 engine(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a64(p.name))));
        for (float& v : values) {
          const double unit = (static_cast<double>(engine() >> 40) + 0.5) / 16777216.0;  // (0, 1)
          v = static_cast<float>((2.0 * unit - 1.0) * bound);
        }
        break;
      }
    }
    ckpt.add(p.name, Tensor(p.shape, std::move(values)));
  }
  return ckpt;
}

inline Checkpoint init_weights(const Model& model, std::uint64_t seed) { return init_weights(model.params, seed); }

// ---------------------------------------------------------------------------
// LMA1 checkpoint files
//
//   "LMA1" | u32 count | count x ( u16 name_len | name | u8 rank |
//                                   rank x u32 extent | f32 payload )
// All integers and floats little-endian.

inline constexpr char kCheckpointMagic[4] = {'L', 'M', 'A', '1'};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    le(bits);
  }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.le(static_cast<std::uint32_t>(ckpt.size()));
  for (const auto& [name, value] : ckpt.entries()) {
    if (name.size() > 0xffff) throw ConfigError("checkpoint: tensor name longer than 65535 bytes");
    w.le(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le(static_cast<std::uint8_t>(value.rank()));
    for (std::size_t e : value.shape()) {
      if (e > 0xffffffffull) throw ConfigError("checkpoint: extent of '" + name + "' exceeds u32");
      w.le(static_cast<std::uint32_t>(e));
    }
    for (float v : value.data()) w.f32(v);
  }
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const auto count = r.le<std::uint32_t>("tensor count");
  Checkpoint ckpt;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t entry_offset = r.offset();
    const auto name_len = r.le<std::uint16_t>("name length");
    auto name_bytes = r.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::size_t rank_offset = r.offset();
    const auto rank = r.le<std::uint8_t>("rank");
    if (rank < 1 || rank > 4) throw FormatError("tensor '" + name + "' has invalid rank " + std::to_string(rank), rank_offset);
    Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const std::size_t at = r.offset();
      const auto e = r.le<std::uint32_t>("extent");
      if (e == 0) throw FormatError("tensor '" + name + "' has a zero extent", at);
      shape.push_back(e);
    }
    const std::size_t n = shape_numel(shape);
    if (n > (bytes.size() - r.offset()) / 4) {
      throw FormatError("truncated checkpoint while reading payload of '" + name + "'", r.offset());
    }
    std::vector<float> values(n);
    for (float& v : values) {
      const auto bits = r.le<std::uint32_t>("payload");
      std::memcpy(&v, &bits, sizeof v);
    }
    if (ckpt.contains(name)) throw FormatError("duplicate tensor name '" + name + "'", entry_offset);
    ckpt.add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor", r.offset());
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Netpbm images: binary RGB (P6) in, binary grey (P5) class maps out.

struct ClassMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> labels;  // row-major
};

namespace detail {

struct PnmHeader {
  std::size_t width, height, maxval, data_offset;
};

inline PnmHeader parse_pnm_header(std::span<const std::uint8_t> bytes, std::string_view magic) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    throw FormatError("expected a binary " + std::string(magic) + " header", 0);
  }
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 30)) throw FormatError(std::string("image ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("missing image ") + what, start);
    return v;
  };
  PnmHeader h{};
  h.width = number("width");
  h.height = number("height");
  const std::size_t maxval_at = pos;
  h.maxval = number("maxval");
  if (h.width == 0 || h.height == 0) throw FormatError("image has a zero dimension", maxval_at);
  if (h.maxval != 255) throw FormatError("maxval must be 255, got " + std::to_string(h.maxval), maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("missing whitespace after maxval", pos);
  h.data_offset = pos + 1;
  return h;
}

}  // namespace detail

// P6 -> 1,3,H,W tensor with channel values byte / 255.
inline Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  const auto h = detail::parse_pnm_header(bytes, "P6");
  const std::size_t plane = h.width * h.height;
  if (bytes.size() - h.data_offset < plane * 3) throw FormatError("truncated P6 pixel data", bytes.size());
  std::vector<float> out(3 * plane);
  const std::uint8_t* px = bytes.data() + h.data_offset;
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + p] = static_cast<float>(px[p * 3 + c]) / 255.0f;
  return Tensor({1, 3, h.height, h.width}, std::move(out));
}

inline Tensor load_ppm(const std::filesystem::path& path) { return decode_ppm(detail::read_file(path)); }

// Inverse of decode_ppm for values in [0, 1] (rounded to the nearest byte).
inline std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3) {
    throw DimensionError("encode_ppm: expected 1,3,H,W, got " + to_string(image.shape()));
  }
  const std::size_t hgt = image.dim(2), wid = image.dim(3), plane = hgt * wid;
  const std::string header = "P6\n" + std::to_string(wid) + " " + std::to_string(hgt) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  auto data = image.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(data[c * plane + p], 0.0f, 1.0f);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  return out;
}

inline void save_ppm(const Tensor& image, const std::filesystem::path& path) {
  detail::write_file(path, encode_ppm(image));
}

inline std::vector<std::uint8_t> encode_pgm(const ClassMap& map) {
  if (map.labels.size() != map.height * map.width || map.height == 0 || map.width == 0) {
    throw DimensionError("encode_pgm: class map has " + std::to_string(map.labels.size()) + " labels for " +
                         std::to_string(map.height) + "x" + std::to_string(map.width));
  }
  const std::string header = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::uint32_t label : map.labels) {
    if (label > 255) throw ParameterError("encode_pgm: class index " + std::to_string(label) + " does not fit a byte");
    out.push_back(static_cast<std::uint8_t>(label));
  }
  return out;
}

inline ClassMap decode_pgm(std::span<const std::uint8_t> bytes) {
  const auto h = detail::parse_pnm_header(bytes, "P5");
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < n) throw FormatError("truncated P5 pixel data", bytes.size());
  ClassMap map{h.height, h.width, {}};
  map.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + n));
  return map;
}

inline void save_pgm(const ClassMap& map, const std::filesystem::path& path) {
  detail::write_file(path, encode_pgm(map));
}

inline ClassMap load_pgm(const std::filesystem::path& path) { return decode_pgm(detail::read_file(path)); }

// Per-pixel argmax over the class axis of batch item n; ties go to the
// lower class index.
inline ClassMap argmax_classes(const Tensor& logits, std::size_t n = 0) {
  if (logits.rank() != 4 || n >= logits.dim(0)) {
    throw DimensionError("argmax_classes: expected N,C,H,W logits, got " + to_string(logits.shape()));
  }
  const std::size_t classes = logits.dim(1), hgt = logits.dim(2), wid = logits.dim(3), plane = hgt * wid;
  auto data = logits.data().subspan(n * classes * plane, classes * plane);
  ClassMap map{hgt, wid, std::vector<std::uint32_t>(plane, 0)};
  for (std::size_t p = 0; p < plane; ++p) {
    float best = data[p];
    for (std::size_t c = 1; c < classes; ++c) {
      if (data[c * plane + p] > best) {
        best = data[c * plane + p];
        map.labels[p] = static_cast<std::uint32_t>(c);
      }
    }
  }
  return map;
}

}  // namespace evit
