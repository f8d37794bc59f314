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

#include "evit/attention.hpp"
#include "evit/bench.hpp"
#include "evit/blocks.hpp"
#include "evit/checkpoint.hpp"
#include "evit/errors.hpp"
#include "evit/io.hpp"
#include "evit/layers.hpp"
#include "evit/model.hpp"
#include "evit/msa.hpp"
#include "evit/tensor.hpp"
#include "evit/verify.hpp"
