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

// Builds B0 for 19-class segmentation with seeded weights, runs a synthetic
// gradient image through it and prints the class histogram.
//
//   segment_demo [height width]

#include <cstdio>
#include <cstdlib>
#include <map>

#include "evit/evit.hpp"

int main(int argc, char** argv) {
  const std::size_t h = argc > 2 ? std::strtoul(argv[1], nullptr, 10) : 256;
  const std::size_t w = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 512;
  try {
    const evit::Model model = evit::build_model("B0", evit::Task::segmentation(19));
    const evit::Checkpoint weights = evit::init_weights(model, 0);
    std::vector<float> pixels(3 * h * w);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) pixels[(c * h + y) * w + x] = float((x + y + 40 * c) % 256) / 255.0f;
    const evit::Tensor image({1, 3, h, w}, std::move(pixels));
    evit::check_input(image);

    evit::ScopedMacCount count;
    const evit::ClassMap labels = evit::argmax_classes(evit::forward(model, weights, image));
    std::printf("B0 seg %zux%zu: %.2fM params, %.3fG MACs executed\n", h, w, evit::count_params(model) / 1e6,
                count.total() / 1e9);

    std::map<std::uint32_t, std::size_t> histogram;
    for (auto l : labels.labels) ++histogram[l];
    for (auto [label, n] : histogram) std::printf("  class %2u  %6.2f%%\n", unsigned(label), 100.0 * n / (h * w));
  } catch (const evit::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
