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

#include "advmask/errors.hpp"
#include "advmask/models.hpp"
#include "advmask/threat.hpp"
#include "fixtures.hpp"

namespace advmask {
namespace {

std::shared_ptr<const Classifier> constant(std::vector<float> logits) {
  return std::make_shared<Network>(
      advmask::testing::constant_graph({1, 2, 2}, logits));
}

TEST(FrontEnd, ZeroInitsAreExactIdentities) {
  Rng rng(1);
  const Tensor x = advmask::testing::random_batch(rng, 4, {1, 16, 16});
  for (FrontEndInit init : {FrontEndInit::kZero, FrontEndInit::kZeroLast}) {
    FrontEndSpec s;
    s.init = init;
    s.seed = 3;
    EXPECT_TRUE(bitwise_equal(frontend_new(s).forward(x), x)) << to_string(init);
  }
}

TEST(FrontEnd, SmallRandomIsNearIdentityWithLiveWeights) {
  Rng rng(2);
  const Tensor x = advmask::testing::random_batch(rng, 2, {1, 16, 16});
  FrontEndSpec s;
  s.seed = 4;
  const Graph f = frontend_new(s);
  EXPECT_LT(max_abs_diff(x, f.forward(x)), 1e-3f);
  for (const Parameter& p : f.parameters()) {
    if (p.name.ends_with(".weight")) EXPECT_GT(max_abs(p.value), 0.0f) << p.name;
  }
}

TEST(FrontEnd, WithoutSkipIsNotIdentity) {
  FrontEndSpec s;
  s.init = FrontEndInit::kZeroLast;
  s.skip = false;
  Rng rng(3);
  const Tensor x = advmask::testing::random_batch(rng, 1, {1, 16, 16});
  EXPECT_GT(max_abs_diff(frontend_new(s).forward(x), x), 0.1f);
}

TEST(FrontEnd, RejectsShallowDepth) {
  FrontEndSpec s;
  s.depth = 1;
  EXPECT_THROW(frontend_new(s), PreconditionError);
}

TEST(Backbone, ShapesAndSeedDeterminism) {
  for (BackboneKind k : {BackboneKind::kSmallConvNet, BackboneKind::kMlp}) {
    BackboneSpec s;
    s.kind = k;
    s.seed = 5;
    const Graph a = backbone_new(s), b = backbone_new(s);
    EXPECT_EQ(a.output_shape(), Shape({4}));
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      EXPECT_TRUE(bitwise_equal(a.parameters()[i].value, b.parameters()[i].value));
    }
    s.seed = 6;
    EXPECT_FALSE(bitwise_equal(backbone_new(s).parameters()[0].value,
                               a.parameters()[0].value));
  }
}

TEST(Composite, GradientChainsThroughFrontEnd) {
  Rng rng(4);
  BackboneSpec bs;
  bs.seed = 7;
  Network back(backbone_new(bs));
  FrontEndSpec fs;
  fs.init = FrontEndInit::kZeroLast;
  CompositeModel c(frontend_new(fs), back);
  const Tensor x = advmask::testing::random_batch(rng, 2, {1, 16, 16});
  const std::vector<int> y{0, 3};
  // Identity front-end: composite gradient equals the backbone gradient.
  const InputGradient gc = c.input_gradient(x, y);
  const InputGradient gb = back.input_gradient(x, y);
  EXPECT_LT(max_abs_diff(gc.grad, gb.grad), 1e-6f);
  EXPECT_FALSE(c.backbone_frozen());
  c.set_backbone_frozen(true);
  EXPECT_TRUE(c.backbone_frozen());
}

TEST(Composite, RejectsShapeMismatch) {
  FrontEndSpec fs;
  fs.height = 8;
  BackboneSpec bs;
  EXPECT_THROW(CompositeModel(frontend_new(fs), Network(backbone_new(bs))), ShapeError);
}

TEST(RandomizedEnsemble, DrawsFollowProbabilities) {
  RandomizedEnsemble e({constant({1, 0}), constant({0, 1})}, {0.25, 0.75}, 9);
  const Tensor x({4000, 1, 2, 2}, 0.0f);
  const std::vector<int> pred = e.predict(x);
  std::size_t ones = 0;
  for (int p : pred) ones += p == 1;
  EXPECT_NEAR(double(ones) / 4000.0, 0.75, 0.03);
  const auto counts = e.selection_counts();
  EXPECT_EQ(counts[0] + counts[1], 4000u);
}

TEST(RandomizedEnsemble, ForkIsDeterministic) {
  RandomizedEnsemble e = RandomizedEnsemble::uniform(
      {constant({1, 0, 0}), constant({0, 1, 0}), constant({0, 0, 1})}, 10);
  const Tensor x({50, 1, 2, 2}, 0.0f);
  EXPECT_EQ(e.fork(1).predict(x), e.fork(1).predict(x));
  EXPECT_NE(e.fork(1).predict(x), e.fork(2).predict(x));
}

TEST(RandomizedEnsemble, ValidatesProbabilities) {
  EXPECT_THROW(RandomizedEnsemble({constant({1, 0})}, {0.5}, 1), PreconditionError);
  EXPECT_THROW(RandomizedEnsemble({constant({1, 0}), constant({0, 1})}, {1.5, -0.5}, 1),
               PreconditionError);
  EXPECT_THROW(RandomizedEnsemble({constant({1, 0}), constant({0, 1, 0})}, {0.5, 0.5}, 1),
               ShapeError);
}

TEST(LossSumEnsemble, LossesAreMemberSums) {
  auto a = constant({1, 0});
  auto b = constant({0, 2});
  LossSumEnsemble e({a, b});
  const Tensor x({1, 1, 2, 2}, 0.0f);
  const std::vector<int> y{0};
  const float want = a->losses(x, y)[0] + b->losses(x, y)[0];
  EXPECT_NEAR(e.losses(x, y)[0], want, 1e-5);
}

TEST(Threat, AccessLevelsAreEnforcedAndCounted) {
  auto m = constant({1, 0});
  const Tensor x({3, 1, 2, 2}, 0.0f);
  const std::vector<int> y{0, 0, 1};
  ModelAccess labels_only(*m, ThreatLevel::kBlackBoxLabels);
  EXPECT_NO_THROW(labels_only.labels(x));
  EXPECT_THROW(labels_only.scores(x), ThreatModelError);
  EXPECT_THROW(labels_only.gradient(x, y), ThreatModelError);
  EXPECT_EQ(labels_only.forward_queries(), 3u);

  ModelAccess scores(*m, ThreatLevel::kBlackBoxScores);
  scores.losses(x, y);
  EXPECT_THROW(scores.gradient(x, y), ThreatModelError);
  EXPECT_EQ(scores.forward_queries(), 3u);

  ModelAccess grad(*m, ThreatLevel::kGradient);
  grad.gradient(x, y);
  EXPECT_EQ(grad.gradient_queries(), 3u);
  EXPECT_THROW(grad.decomposition(), ThreatModelError);

  // The judge does not count.
  grad.judge().predict(x);
  EXPECT_EQ(grad.forward_queries(), 0u);
}

TEST(Threat, DecompositionNeedsFullAccess) {
  BackboneSpec bs;
  FrontEndSpec fs;
  CompositeModel c(frontend_new(fs), Network(backbone_new(bs)));
  ModelAccess g(c, ThreatLevel::kGradient);
  EXPECT_TRUE(g.decomposable());
  EXPECT_THROW(g.decomposition(), ThreatModelError);
  ModelAccess full(c, ThreatLevel::kFullTrainTime);
  EXPECT_NO_THROW(full.decomposition());
  const Tensor x({1, 1, 16, 16}, 0.5f);
  EXPECT_NO_THROW(full.backbone_gradient(x, std::vector<int>{1}));
}

}  // namespace
}  // namespace advmask
