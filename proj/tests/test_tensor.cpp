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


#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "evit/tensor.hpp"
#include "oracles.hpp"

namespace evit {
namespace {

Tensor map(Shape s, std::vector<float> v) { return Tensor(std::move(s), std::move(v)); }

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor({}, {}), DimensionError);
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1}, {1.0f}), DimensionError);
  EXPECT_THROW(Tensor({2, 0}, {}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), DimensionError);
}

TEST(Tensor, IndexingIsRowMajor) {
  const Tensor t = map({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at({1, 2}), 5.0f);
  EXPECT_EQ(t.at({0, 1}), 1.0f);
  EXPECT_EQ(t.reshaped({3, 2}).at({2, 0}), 4.0f);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor a = map({2, 2}, {1.5f, -2.0f, 0.25f, 8.0f});
  const Tensor eye = map({2, 2}, {1, 0, 0, 1});
  EXPECT_TRUE(bit_equal(matmul(a, eye), a));
}

TEST(Matmul, HandExample) {
  const Tensor c = matmul(map({2, 2}, {1, 2, 3, 4}), map({2, 1}, {5, 6}));
  ASSERT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 17.0f);
  EXPECT_EQ(c[1], 39.0f);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  for (auto [m, k, n] : {std::array<std::size_t, 3>{3, 4, 5}, {64, 64, 64}, {7, 300, 131}, {1, 1, 1}}) {
    const Tensor a = oracle::random_tensor(rng, {m, k});
    const Tensor b = oracle::random_tensor(rng, {k, n});
    EXPECT_LE(max_abs_diff(matmul(a, b), oracle::matmul(a, b)), 1e-6f) << m << "x" << k << "x" << n;
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, TransposeSwapsAxes) {
  const Tensor t = transpose(map({2, 3}, {0, 1, 2, 3, 4, 5}));
  ASSERT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t.at({2, 1}), 5.0f);
  EXPECT_EQ(t.at({1, 0}), 1.0f);
}

TEST(Conv2d, OneByOneMixesChannels) {
  const Tensor x = map({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = conv2d(x, map({1, 1, 1, 1}, {1.0f}), std::nullopt);
  EXPECT_TRUE(bit_equal(y, x));
  const Tensor z = conv2d(x, map({2, 1, 1, 1}, {2.0f, -1.0f}), std::nullopt);
  ASSERT_EQ(z.shape(), (Shape{1, 2, 2, 2}));
  EXPECT_EQ(z.at({0, 0, 1, 1}), 8.0f);
  EXPECT_EQ(z.at({0, 1, 0, 1}), -2.0f);
}

TEST(Conv2d, DeltaDepthwiseIsIdentity) {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor(rng, {2, 5, 7, 6});
  std::vector<float> k(5 * 9, 0.0f);
  for (std::size_t c = 0; c < 5; ++c) k[c * 9 + 4] = 1.0f;
  const Tensor w({5, 1, 3, 3}, k);
  EXPECT_TRUE(bit_equal(conv2d(x, w, std::nullopt, {1, 1, 5}), x));
  EXPECT_TRUE(bit_equal(conv2d_direct(x, w, std::nullopt, {1, 1, 5}), x));
  EXPECT_TRUE(bit_equal(conv2d_im2col(x, w, std::nullopt, {1, 1, 5}), x));
}

TEST(Conv2d, GroupedEqualsIndependentSlices) {
  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor(rng, {1, 8, 5, 5});
  const Tensor w = oracle::random_tensor(rng, {6, 4, 1, 1});
  const Tensor y = conv2d(x, w, std::nullopt, {1, 0, 2});
  const Tensor a = conv2d(slice_channels(x, 0, 4), oracle::kernel_rows(w, 0, 3), std::nullopt);
  const Tensor b = conv2d(slice_channels(x, 4, 4), oracle::kernel_rows(w, 3, 3), std::nullopt);
  EXPECT_LE(max_abs_diff(y, concat_channels({a, b})), 1e-6f);
}

struct ConvCase {
  Shape x, w;
  Conv2dOptions opt;
  bool bias;
};

TEST(Conv2d, DirectAndIm2colMatchOracle) {
  std::mt19937_64 rng(4);
  const std::vector<ConvCase> cases{
      {{1, 3, 9, 9}, {8, 3, 3, 3}, {2, 1, 1}, true},   {{2, 6, 8, 7}, {6, 1, 3, 3}, {1, 1, 6}, false},
      {{1, 6, 8, 8}, {6, 1, 5, 5}, {1, 2, 6}, false},  {{1, 4, 7, 9}, {4, 1, 3, 3}, {2, 1, 4}, true},
      {{1, 8, 4, 4}, {12, 2, 1, 1}, {1, 0, 4}, true},  {{1, 3, 5, 5}, {2, 3, 5, 5}, {1, 0, 1}, false},
      {{1, 2, 3, 3}, {3, 2, 3, 3}, {1, 2, 1}, true},   {{1, 4, 11, 6}, {8, 2, 3, 3}, {2, 1, 2}, false},
      {{1, 1, 1, 1}, {1, 1, 3, 3}, {1, 1, 1}, false},  {{1, 5, 6, 6}, {5, 5, 1, 1}, {2, 0, 1}, true},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const Tensor x = oracle::random_tensor(rng, c.x);
    const Tensor w = oracle::random_tensor(rng, c.w);
    std::optional<Tensor> b;
    if (c.bias) b = oracle::random_tensor(rng, {c.w[0]});
    const Tensor ref = oracle::conv2d(x, w, b, c.opt.stride, c.opt.padding, c.opt.groups);
    EXPECT_LE(max_abs_diff(conv2d_direct(x, w, b, c.opt), ref), 1e-6f) << "case " << i;
    EXPECT_LE(max_abs_diff(conv2d_im2col(x, w, b, c.opt), ref), 1e-6f) << "case " << i;
    EXPECT_LE(max_abs_diff(conv2d(x, w, b, c.opt), ref), 1e-6f) << "case " << i;
  }
}

TEST(Conv2d, StrideTwoOddInputUsesFloorGeometry) {
  const Tensor y = conv2d(Tensor::zeros({1, 2, 7, 5}), Tensor::zeros({2, 1, 3, 3}), std::nullopt, {2, 1, 2});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4, 3}));
}

TEST(Conv2d, IsLinearWithoutBias) {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_tensor(rng, {1, 4, 6, 6});
  const Tensor y = oracle::random_tensor(rng, {1, 4, 6, 6});
  const Tensor w = oracle::random_tensor(rng, {4, 2, 3, 3});
  const Conv2dOptions opt{1, 1, 2};
  const float a = 0.7f, b = -1.3f;
  const Tensor mix = add(map_elements(x, [a](float v) { return a * v; }), map_elements(y, [b](float v) { return b * v; }));
  const Tensor lhs = conv2d(mix, w, std::nullopt, opt);
  const Tensor cx = conv2d(x, w, std::nullopt, opt), cy = conv2d(y, w, std::nullopt, opt);
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    const double rhs = a * double(cx[i]) + b * double(cy[i]);
    EXPECT_LE(std::fabs(lhs[i] - rhs), 1e-5 * std::max(1.0, std::fabs(rhs)));
  }
}

TEST(Conv2d, GeometryErrors) {
  const Tensor x = Tensor::zeros({1, 6, 4, 4});
  EXPECT_THROW(conv2d(x, Tensor::zeros({4, 3, 1, 1}), std::nullopt, {1, 0, 4}), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({5, 3, 1, 1}), std::nullopt, {1, 0, 2}), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({6, 6, 7, 7}), std::nullopt, {1, 1, 1}), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({6, 6, 1, 1}), std::nullopt, {0, 0, 1}), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({6, 6, 1, 1}), Tensor::zeros({5}), {1, 0, 1}), DimensionError);
}

TEST(Activations, Relu) {
  EXPECT_EQ(relu(-2.0f), 0.0f);
  EXPECT_EQ(relu(3.0f), 3.0f);
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor(rng, {50});
  EXPECT_TRUE(bit_equal(relu(relu(x)), relu(x)));
}

TEST(Activations, Hardswish) {
  EXPECT_EQ(hardswish(0.0f), 0.0f);
  EXPECT_EQ(hardswish(3.0f), 3.0f);
  EXPECT_EQ(hardswish(-3.0f), 0.0f);
  EXPECT_NEAR(hardswish(1.0f), 0.6666667f, 1e-7f);
  for (float v : {3.0f, 3.5f, 10.0f, 1e6f}) EXPECT_EQ(hardswish(v), v);
}

TEST(BatchNorm, IdentityStatistics) {
  std::mt19937_64 rng(7);
  const Tensor x = oracle::random_tensor(rng, {2, 3, 4, 4});
  const Tensor y = batchnorm_infer(x, Tensor::full({3}, 1), Tensor::zeros({3}), Tensor::zeros({3}),
                                   Tensor::full({3}, 1), 0.0f);
  EXPECT_TRUE(bit_equal(x, y));
}

TEST(BatchNorm, CenteredGivesBeta) {
  const Tensor y = batchnorm_infer(Tensor::full({1, 1, 2, 2}, 5), Tensor::full({1}, 3), Tensor::full({1}, -0.5f),
                                   Tensor::full({1}, 5), Tensor::full({1}, 2), 1e-5f);
  for (float v : y.data()) EXPECT_EQ(v, -0.5f);
}

TEST(BatchNorm, HandExample) {
  const Tensor y = batchnorm_infer(Tensor::full({1, 1, 1, 1}, 3), Tensor::full({1}, 2), Tensor::full({1}, 1),
                                   Tensor::full({1}, 1), Tensor::full({1}, 4), 0.0f);
  EXPECT_EQ(y[0], 3.0f);
}

TEST(BatchNorm, MatchesOracleAndRejectsNegativeVariance) {
  std::mt19937_64 rng(8);
  const Tensor x = oracle::random_tensor(rng, {2, 4, 3, 5});
  const BatchNorm bn{oracle::random_tensor(rng, {4}), oracle::random_tensor(rng, {4}), oracle::random_tensor(rng, {4}),
                     oracle::random_tensor(rng, {4}, 0.1f, 2.0f)};
  EXPECT_LE(max_abs_diff(batchnorm_infer(x, bn), oracle::batchnorm(x, bn)), 1e-6f);
  BatchNorm bad = bn;
  bad.var = Tensor({4}, {1, 1, -0.1f, 1});
  EXPECT_THROW(batchnorm_infer(x, bad), ParameterError);
}

TEST(Upsample, ConstantFieldStaysConstant) {
  const Tensor y = bilinear_upsample(Tensor::full({1, 2, 3, 5}, 7.0f), 6, 10);
  for (float v : y.data()) EXPECT_EQ(v, 7.0f);
}

TEST(Upsample, SinglePixelReplicates) {
  const Tensor y = bilinear_upsample(Tensor::full({1, 1, 1, 1}, 2.5f), 4, 4);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  for (float v : y.data()) EXPECT_EQ(v, 2.5f);
}

TEST(Upsample, HalfPixelHandExample) {
  const Tensor y = bilinear_upsample(map({1, 1, 1, 2}, {1, 3}), 1, 4);
  EXPECT_EQ(y.to_vector(), (std::vector<float>{1.0f, 1.5f, 2.5f, 3.0f}));
}

TEST(Upsample, StaysWithinInputBounds) {
  std::mt19937_64 rng(9);
  const Tensor x = oracle::random_tensor(rng, {1, 3, 4, 6});
  const Tensor y = bilinear_upsample(x, 32, 48);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto in = slice_channels(x, c, 1).to_vector();
    const auto out = slice_channels(y, c, 1).to_vector();
    const auto [lo, hi] = std::minmax_element(in.begin(), in.end());
    for (float v : out) {
      EXPECT_GE(v, *lo);
      EXPECT_LE(v, *hi);
    }
  }
}

TEST(Upsample, RejectsDownscale) {
  EXPECT_THROW(bilinear_upsample(Tensor::zeros({1, 1, 4, 4}), 2, 4), ParameterError);
}

TEST(Structural, AddConcatPool) {
  std::mt19937_64 rng(10);
  const Tensor x = oracle::random_tensor(rng, {1, 2, 3, 3});
  EXPECT_TRUE(bit_equal(add(x, Tensor::zeros(x.shape())), x));
  EXPECT_THROW(add(x, Tensor::zeros({1, 2, 3, 4})), DimensionError);

  const Tensor y = oracle::random_tensor(rng, {1, 3, 3, 3});
  const Tensor c = concat_channels({x, y});
  ASSERT_EQ(c.shape(), (Shape{1, 5, 3, 3}));
  EXPECT_TRUE(bit_equal(slice_channels(c, 0, 2), x));
  EXPECT_TRUE(bit_equal(slice_channels(c, 2, 3), y));
  EXPECT_THROW(concat_channels({x, Tensor::zeros({1, 1, 2, 3})}), DimensionError);

  const Tensor p = global_avg_pool(map({1, 1, 2, 2}, {1, 2, 3, 4}));
  ASSERT_EQ(p.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(p[0], 2.5f);
}

TEST(Structural, TokensRoundTrip) {
  std::mt19937_64 rng(11);
  const Tensor x = oracle::random_tensor(rng, {2, 3, 4, 5});
  const Tensor t0 = map_to_tokens(x, 0), t1 = map_to_tokens(x, 1);
  ASSERT_EQ(t0.shape(), (Shape{20, 3}));
  EXPECT_EQ(t1.at({2 * 5 + 3, 1}), x.at({1, 1, 2, 3}));
  const std::vector<Tensor> both{t0, t1};
  EXPECT_TRUE(bit_equal(tokens_to_map(both, 4, 5), x));
}

TEST(MacCount, NestedScopesAccumulate) {
  ScopedMacCount outer;
  {
    ScopedMacCount inner;
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}));
    EXPECT_EQ(inner.total(), 24u);
  }
  conv2d(Tensor::zeros({1, 3, 6, 6}), Tensor::zeros({8, 3, 3, 3}), Tensor::zeros({8}), {1, 0, 1});
  EXPECT_EQ(outer.total(), 24u + 3456u);
}

}  // namespace
}  // namespace evit
