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

#include <memory>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "advmask/ensemble_analysis.hpp"
#include "advmask/errors.hpp"
#include "fixtures.hpp"

namespace advmask {
namespace {

TransferMatrix two_by_two() {
  TransferMatrix tm;
  tm.sources = {"a", "b"};
  tm.targets = {"a", "b"};
  tm.acc = {{0.0, 0.6}, {0.8, 0.1}};
  tm.bound = {{false, false}, {false, false}};
  return tm;
}

TEST(ExpectedAccuracy, WeightedRowAverage) {
  const TransferMatrix tm = two_by_two();
  const EnsemblePolicy p{{0.25, 0.75}};
  EXPECT_DOUBLE_EQ(expected_accuracy(tm, p, 0), 0.75 * 0.6);
  EXPECT_DOUBLE_EQ(expected_accuracy(tm, p, 1), 0.25 * 0.8 + 0.75 * 0.1);
  const BestResponse br = attacker_best_response(tm, p);
  EXPECT_EQ(br.source, 1u);
  EXPECT_DOUBLE_EQ(br.value, 0.275);
}

TEST(ExpectedAccuracy, DegeneratePolicyPicksColumn) {
  const TransferMatrix tm = two_by_two();
  EXPECT_DOUBLE_EQ(expected_accuracy(tm, EnsemblePolicy{{0.0, 1.0}}, 0), 0.6);
}

TEST(ExpectedAccuracy, TiesBreakToLowestIndex) {
  TransferMatrix tm = two_by_two();
  tm.acc = {{0.5, 0.5}, {0.5, 0.5}};
  EXPECT_EQ(attacker_best_response(tm, EnsemblePolicy::uniform(2)).source, 0u);
}

TEST(ExpectedAccuracy, BoundsPropagate) {
  TransferMatrix tm = two_by_two();
  tm.bound[0][1] = true;
  EXPECT_TRUE(expected_accuracy_is_bound(tm, EnsemblePolicy::uniform(2), 0));
  EXPECT_FALSE(expected_accuracy_is_bound(tm, EnsemblePolicy{{1.0, 0.0}}, 0));
}

TEST(ExpectedAccuracy, PolicyValidation) {
  EXPECT_THROW(EnsemblePolicy({{0.5, 0.6}}).validate(2), PreconditionError);
  EXPECT_THROW(EnsemblePolicy({{1.0}}).validate(2), ShapeError);
  EXPECT_THROW(EnsemblePolicy({{1.2, -0.2}}).validate(2), PreconditionError);
}

TEST(TransferMatrixIo, CsvAndJsonRoundTrip) {
  TransferMatrix tm = two_by_two();
  tm.bound[1][0] = true;
  const TransferMatrix c = transfer_matrix_from_csv(to_csv(tm));
  EXPECT_EQ(c.acc, tm.acc);
  EXPECT_EQ(c.bound, tm.bound);
  const TransferMatrix j = transfer_matrix_from_json(to_json(tm));
  EXPECT_EQ(j.sources, tm.sources);
  EXPECT_EQ(j.acc, tm.acc);
  EXPECT_EQ(j.bound, tm.bound);
}

TEST(TransferMatrixIo, RejectsMalformed) {
  EXPECT_THROW(transfer_matrix_from_csv("source,a\na,0.5,0.1\n"), Error);
  EXPECT_THROW(transfer_matrix_from_csv("source,a\na,1.5\n"), Error);
  TransferMatrix tm = two_by_two();
  tm.acc[0].pop_back();
  EXPECT_THROW(tm.validate(), Error);
}

TEST(PublishedTables, FixtureArithmetic) {
  const auto checks = replicate_published_tables();
  ASSERT_EQ(checks.size(), 3u);
  EXPECT_NEAR(checks[0].value, 0.5448, 1e-9);
  EXPECT_NEAR(checks[1].value, 0.5506, 1e-9);
  EXPECT_NEAR(checks[2].value, 0.221, 1e-9);
  EXPECT_FALSE(checks[0].within_tolerance());  // fixture entries give 54.48%, not 54.6%
  EXPECT_TRUE(checks[1].within_tolerance());
  EXPECT_TRUE(checks[2].within_tolerance());
  const TransferMatrix f = published_transfer_fixture();
  EXPECT_EQ(f.targets.size(), 10u);
  EXPECT_EQ(f.sources.size(), 11u);  // ten models plus the all-model ensemble
  EXPECT_EQ(f.sources.back(), "ensemble:all");
}

TEST(BuildTransferMatrix, SelfAttackOnDiagonal) {
  const Dataset d = advmask::testing::desk_data(12, 1);
  auto a = std::make_shared<Network>(advmask::testing::trained_backbone(d, 2, 1));
  auto b = std::make_shared<Network>(
      advmask::testing::constant_graph({1, 16, 16}, {0, 0, 0, 1}));
  AttackSpec inner = default_attack_spec(AttackKind::kPgd, 0.2f, 3);
  inner.steps = 5;
  inner.restarts = 1;
  const TransferStudy s =
      build_transfer_matrix({{"a", a, "cnn"}, {"b", b, "const"}}, d, inner);
  ASSERT_EQ(s.matrix.acc.size(), 2u);
  EXPECT_EQ(s.adversarial.size(), 2u);
  // Every source leaves the constant model's accuracy unchanged.
  EXPECT_DOUBLE_EQ(s.matrix.acc[0][1], s.matrix.acc[1][1]);
}

}  // namespace
}  // namespace advmask
