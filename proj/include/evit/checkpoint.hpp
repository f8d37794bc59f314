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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evit/errors.hpp"
#include "evit/tensor.hpp"

namespace evit {

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Ordered collection of uniquely named tensors. Order is insertion order,
// which for model checkpoints is the canonical traversal order.
class Checkpoint {
 public:
  void add(std::string name, Tensor value) {
    if (value.empty()) throw ConfigError("checkpoint: tensor '" + name + "' has no payload");
    if (index_.count(name)) throw ConfigError("checkpoint: duplicate tensor name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Tensor* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &entries_[it->second].value;
  }

  const Tensor& at(std::string_view name) const {
    if (const Tensor* t = find(name)) return *t;
    throw ConfigError("checkpoint: missing tensor '" + std::string(name) + "'");
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::span<const NamedTensor> entries() const noexcept { return entries_; }

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Same names, order, shapes and bit patterns.
inline bool bit_identical(const Checkpoint& a, const Checkpoint& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i];
    const auto& y = b.entries()[i];
    if (x.name != y.name || !bit_equal(x.value, y.value)) return false;
  }
  return true;
}

}  // namespace evit
