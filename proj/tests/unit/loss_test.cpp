// Copyright 2026 The advmask Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "advmask/errors.hpp"
#include "advmask/loss.hpp"

namespace advmask {
namespace {

TEST(Loss, SoftmaxRowsSumToOneAndAreShiftInvariant) {
  Tensor z({2, 3}, {1, 2, 3, 1001, 1002, 1003});
  const Tensor p = softmax(z);
  for (int r = 0; r < 2; ++r) {
    EXPECT_NEAR(p[r * 3] + p[r * 3 + 1] + p[r * 3 + 2], 1.0, 1e-6);
  }
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(p[j], p[3 + j], 1e-6);
}

TEST(Loss, CrossEntropyMatchesClosedForm) {
  Tensor z({1, 3}, {0.5f, -1.0f, 2.0f});
  const std::vector<int> y{1};
  const CrossEntropy ce = cross_entropy_logits(z, y);
  const double lse = std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0));
  EXPECT_NEAR(ce.mean, lse + 1.0, 1e-6);
  const double p1 = std::exp(-1.0) / std::exp(lse);
  EXPECT_NEAR(ce.grad[1], p1 - 1.0, 1e-6);
}

TEST(Loss, MeanReductionScalesGradient) {
  Tensor z({2, 2}, {1, 0, 0, 1});
  const std::vector<int> y{0, 0};
  const CrossEntropy mean = cross_entropy_logits(z, y, Reduction::kMean);
  const CrossEntropy sum = cross_entropy_logits(z, y, Reduction::kSum);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(2.0f * mean.grad[i], sum.grad[i], 1e-7);
  EXPECT_NEAR(mean.mean, 0.5 * (sum.per_example[0] + sum.per_example[1]), 1e-6);
}

TEST(Loss, ProbabilityInputUsesNegativeLog) {
  Tensor p({1, 2}, {0.25f, 0.75f});
  const std::vector<int> y{1};
  EXPECT_NEAR(cross_entropy_probs(p, y).mean, -std::log(0.75), 1e-6);
}

TEST(Loss, LabelValidation) {
  Tensor z({1, 2}, {0, 0});
  EXPECT_THROW(cross_entropy_logits(z, std::vector<int>{2}), PreconditionError);
  EXPECT_THROW(cross_entropy_logits(z, std::vector<int>{-1}), PreconditionError);
  EXPECT_THROW(cross_entropy_logits(z, std::vector<int>{0, 1}), ShapeError);
}

TEST(Loss, ArgmaxTiesPickFirst) {
  Tensor z({2, 3}, {1, 3, 3, 0, -1, -2});
  EXPECT_EQ(argmax_rows(z), (std::vector<int>{1, 0}));
}

}  // namespace
}  // namespace advmask
