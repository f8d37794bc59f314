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


#include <gtest/gtest.h>

#include "evit/verify.hpp"

namespace evit::verify {
namespace {

const PropertyResult* find(const Report& r, const std::string& prefix) {
  for (const auto& p : r.properties)
    if (p.name.rfind(prefix, 0) == 0) return &p;
  return nullptr;
}

TEST(Verify, DefaultRunPasses) {
  const Report r = run({});
  EXPECT_TRUE(r.passed());
  for (const auto& p : r.properties) {
    EXPECT_TRUE(p.passed) << p.name << " worst " << p.worst;
    EXPECT_GT(p.samples, 0u) << p.name;
    EXPECT_FALSE(p.diagnostic) << p.name;
  }
  ASSERT_NE(find(r, "linearization"), nullptr);
  EXPECT_EQ(find(r, "linearization")->samples, 200u);
  ASSERT_NE(find(r, "backward"), nullptr);
  EXPECT_EQ(find(r, "backward")->samples, 50u);
}

TEST(Verify, ZeroEpsReportsDeadQueryHazard) {
  Options opt;
  opt.eps = 0.0f;
  const Report r = run(opt);
  const PropertyResult* hazard = find(r, "dead-query");
  ASSERT_NE(hazard, nullptr);
  EXPECT_TRUE(hazard->diagnostic);
  EXPECT_GT(hazard->worst, 0.0);
  EXPECT_TRUE(r.passed());
}

TEST(Verify, MaxNOneStillRunsSingleToken) {
  Options opt;
  opt.max_n = 1;
  const Report r = run(opt);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(detail::token_counts(1), (std::vector<std::size_t>{1}));
  EXPECT_EQ(detail::token_counts(8), (std::vector<std::size_t>{1, 2, 3, 8}));
}

TEST(Verify, SeedsAreReproducible) {
  Options opt;
  opt.seed = 77;
  opt.equivalence_draws = 20;
  opt.invariance_draws = 10;
  opt.gradient_draws = 5;
  const Report a = run(opt), b = run(opt);
  ASSERT_EQ(a.properties.size(), b.properties.size());
  for (std::size_t i = 0; i < a.properties.size(); ++i) {
    EXPECT_EQ(a.properties[i].worst, b.properties[i].worst);
    EXPECT_EQ(a.properties[i].worst_seed, b.properties[i].worst_seed);
  }
}

TEST(Verify, ToleranceRatio) {
  EXPECT_DOUBLE_EQ(tolerance_ratio(1.0, 1.0, 1e-6, 1e-5), 0.0);
  EXPECT_NEAR(tolerance_ratio(0.0, 1e-6, 1e-6, 1e-5), 1.0, 1e-9);
  EXPECT_NEAR(tolerance_ratio(1000.0, 1000.01, 1e-6, 1e-5), 1.0, 1e-3);
}

}  // namespace
}  // namespace evit::verify
