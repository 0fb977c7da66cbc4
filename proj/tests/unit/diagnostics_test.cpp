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
#include <nlohmann/json.hpp>

#include "advmask/diagnostics.hpp"
#include "advmask/errors.hpp"
#include "fixtures.hpp"

namespace advmask {
namespace {

TEST(ConfidenceInterval, NormalApproximation) {
  const AccuracyEstimate e = confidence_interval(454, 500);
  EXPECT_DOUBLE_EQ(e.accuracy, 0.908);
  ASSERT_TRUE(e.ci99);
  EXPECT_NEAR(*e.ci99, 2.576 * std::sqrt(0.908 * 0.092 / 500.0), 1e-12);
  EXPECT_FALSE(confidence_interval(0, 10).ci99);
  EXPECT_FALSE(confidence_interval(10, 10).ci99);
  EXPECT_THROW(confidence_interval(0, 0), PreconditionError);
  EXPECT_THROW(confidence_interval(3, 2), PreconditionError);
}

TEST(ConfidenceInterval, Formatting) {
  EXPECT_EQ(format_estimate(confidence_interval(10, 10)), "1.000");
  EXPECT_EQ(format_estimate(confidence_interval(5, 10)).substr(0, 9), "0.500 +- ");
}

TEST(GradientSummary, QuantilesAndSmallFraction) {
  std::vector<float> raw(100);
  for (int i = 0; i < 100; ++i) raw[i] = (i % 2 ? -1.0f : 1.0f) * float(i) / 1000.0f;
  const GradientTraceReport r = summarize_gradients(raw, 10, 0.0095);
  EXPECT_EQ(r.values, 100u);
  EXPECT_EQ(r.records, 10u);
  EXPECT_DOUBLE_EQ(r.small_fraction, 0.1);
  EXPECT_NEAR(r.q01, 0.0, 1e-9);                   // element 0
  EXPECT_NEAR(r.q50, 49.0 / 1000.0, 1e-7);         // element floor(0.5 * 99) = 49
  EXPECT_NEAR(r.q99, 98.0 / 1000.0, 1e-7);         // element floor(0.99 * 99) = 98
  // Per-record means are 0.0045, 0.0145, ...; their mean is 0.0495.
  EXPECT_NEAR(r.mean, 0.0495, 1e-7);
}

TEST(GradientTrace, RecordsEveryStep) {
  const Dataset d = advmask::testing::desk_data(4, 1);
  Network n = advmask::testing::trained_backbone(d, 2, 0);
  ModelAccess access(n, ThreatLevel::kGradient);
  AttackSpec s = default_attack_spec(AttackKind::kPgd, 8.0f / 255.0f, 3);
  s.steps = 4;
  s.restarts = 2;
  const GradientTrace t = gradient_trace(access, d, s, true);
  EXPECT_EQ(t.report.records, 4u * 2u * 4u);
  EXPECT_EQ(t.raw.size(), t.report.values);
  EXPECT_EQ(t.report.nan_count, 0u);
  s.kind = AttackKind::kSquare;
  EXPECT_THROW(gradient_trace(access, d, s), ConfigError);
}

TEST(Sweep, RadiiAndMonotoneAccuracyOnLinearModel) {
  const auto r = log_spaced_radii(0.01f, 1.0f, 3);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_NEAR(r[1], 0.1f, 1e-6);
  EXPECT_EQ(default_sweep_radii(0.04f).size(), 8u);
  EXPECT_FLOAT_EQ(default_sweep_radii(0.04f).front(), 0.01f);

  const Dataset d = advmask::testing::desk_data(12, 2);
  Network n = advmask::testing::trained_backbone(d, 3, 2);
  ModelAccess access(n, ThreatLevel::kGradient);
  AttackSpec s = default_attack_spec(AttackKind::kPgd, 0.03f, 4);
  s.steps = 5;
  s.restarts = 1;
  const std::vector<float> radii{0.0f, 0.05f, 0.5f};
  const SweepCurve c = epsilon_sweep(access, d, s, radii);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_GE(c.points[0].estimate.accuracy, c.points[2].estimate.accuracy);
  EXPECT_EQ(c.points[2].estimate.accuracy, 0.0);
  EXPECT_NE(to_csv(c).find("radius,accuracy,correct,n,ci99"), std::string::npos);
  EXPECT_NE(to_svg(std::span<const SweepCurve>(&c, 1)).find("<svg"), std::string::npos);
  const std::vector<float> bad{0.1f, 0.05f};
  EXPECT_THROW(epsilon_sweep(access, d, s, bad), Error);
}

TEST(MaskingVerdict, FlagsGapsAboveThreshold) {
  MaskingMeasurements m;
  m.clean = confidence_interval(100, 100);
  m.pgd = confidence_interval(90, 100);
  m.square = confidence_interval(40, 100);
  MaskingReport r = masking_verdict(m);
  EXPECT_DOUBLE_EQ(r.black_box_gap, 50.0);
  EXPECT_TRUE(r.masking_suspected);

  m.square = confidence_interval(80, 100);
  r = masking_verdict(m);
  EXPECT_FALSE(r.masking_suspected);  // 10 points

  m.bpda = confidence_interval(65, 100);
  r = masking_verdict(m);
  EXPECT_DOUBLE_EQ(r.bpda_gap, 25.0);
  EXPECT_TRUE(r.masking_suspected);

  m.bpda = confidence_interval(70, 100);
  EXPECT_FALSE(masking_verdict(m).masking_suspected);  // exactly 20 is not above
}

TEST(MaskingReport, NoFlagOnPlainBackbone) {
  const Dataset d = advmask::testing::desk_data(200, 4);
  Network n = advmask::testing::trained_backbone(d, 5, 3);
  const Dataset sample = d.head(20);
  ModelAccess access(n, ThreatLevel::kFullTrainTime);
  MaskingConfig cfg;
  cfg.seed = 6;
  AttackSpec pgd = default_attack_spec(AttackKind::kPgd, cfg.epsilon, 1);
  pgd.steps = 10;
  pgd.restarts = 1;
  cfg.pgd = pgd;
  AttackSpec sq = default_attack_spec(AttackKind::kSquare, cfg.epsilon, 2);
  sq.budget = 200;
  cfg.square = sq;
  AttackSpec zo = default_attack_spec(AttackKind::kZeroOrderPgd, cfg.epsilon, 3);
  zo.steps = 2;
  cfg.zero_order = zo;
  const MaskingReport r = masking_report(access, sample, cfg);
  EXPECT_FALSE(r.measured.bpda);
  EXPECT_FALSE(r.masking_suspected);
  const nlohmann::json j = to_json(r);
  EXPECT_TRUE(j.contains("masking_suspected"));
}

}  // namespace
}  // namespace advmask
