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
#include <stdexcept>
#include <string>

namespace evit {

// Root of every error raised by the library. Callers that only need a
// message can catch this; the subclasses tell what kind of contract broke.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents disagree (matmul inner dims, conv geometry, concat...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A numeric parameter is outside its domain (negative variance, bad stride).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Model, block or checkpoint configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// User-supplied input (image size, resolution) violates a precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. Carries the byte offset at which decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace evit
