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
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "advmask/dataset.hpp"
#include "advmask/errors.hpp"
#include "advmask/models.hpp"
#include "advmask/training.hpp"
#include "fixtures.hpp"

namespace advmask {
namespace {

TEST(Dataset, SynthIsDeterministicBalancedAndInRange) {
  for (SynthKind k : {SynthKind::kBlobs, SynthKind::kStripes, SynthKind::kDigitsLite}) {
    SynthSpec s;
    s.kind = k;
    s.n = 200;
    s.seed = 4;
    const Dataset a = dataset_synth(s), b = dataset_synth(s);
    EXPECT_TRUE(bitwise_equal(a.images, b.images));
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NO_THROW(a.validate());
    std::vector<int> counts(4, 0);
    for (int y : a.labels) ++counts[y];
    for (int c : counts) EXPECT_EQ(c, 50) << to_string(k);
  }
}

TEST(Dataset, SplitsDiffer) {
  SynthSpec s;
  s.n = 20;
  const Dataset tr = dataset_synth(s);
  s.split = Split::kTest;
  EXPECT_FALSE(bitwise_equal(tr.images, dataset_synth(s).images));
}

TEST(Dataset, MarginSeparatesTemplates) {
  SynthSpec s;
  s.kind = SynthKind::kDigitsLite;
  s.margin = 0.05f;
  s.amplitude = 0.15f;
  const Tensor t = synth_templates(s);
  const std::size_t d = t.example_size();
  for (std::size_t a = 0; a < s.classes; ++a) {
    for (std::size_t b = a + 1; b < s.classes; ++b) {
      float m = 0.0f;
      for (std::size_t j = 0; j < d; ++j) {
        m = std::max(m, std::abs(t.example(a)[j] - t.example(b)[j]));
      }
      EXPECT_GT(m, 0.0f);
    }
  }
}

TEST(Dataset, SpecValidation) {
  SynthSpec s;
  s.classes = 1;
  EXPECT_THROW(dataset_synth(s), ConfigError);
  s.classes = 4;
  s.margin = 1.5f;
  EXPECT_THROW(dataset_synth(s), ConfigError);
  EXPECT_THROW(synth_kind_from_string("mnist"), ConfigError);
  EXPECT_THROW(synth_spec_from_json(nlohmann::json{{"kind", "blobs"}, {"bogus", 1}}),
               ConfigError);
}

TEST(Dataset, EncodeDecodeRoundTrip) {
  const Dataset a = advmask::testing::desk_data(16, 3);
  const auto bytes = dataset_encode(a);
  const Dataset b = dataset_decode(bytes, 4, Split::kTrain);
  EXPECT_TRUE(bitwise_equal(a.images, b.images));
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Dataset, DecodeErrorsAreTyped) {
  const auto good = dataset_encode(advmask::testing::desk_data(4, 3));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(dataset_decode(bad), FormatError);
  bad = good;
  bad[4] = 9;
  try {
    dataset_decode(bad);
    FAIL();
  } catch (const VersionError& e) {
    EXPECT_EQ(e.found(), 9u);
  }
  bad = good;
  bad.resize(good.size() - 3);
  try {
    dataset_decode(bad);
    FAIL();
  } catch (const TruncationError& e) {
    EXPECT_EQ(e.expected(), good.size());
    EXPECT_EQ(e.actual(), good.size() - 3);
  }
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(dataset_decode(bad), FormatError);
}

TEST(Dataset, SaveLoad) {
  const auto path = std::filesystem::temp_directory_path() / "advmask_unit_ds.advd";
  const Dataset a = advmask::testing::desk_data(8, 5);
  dataset_save(a, path);
  const Dataset b = dataset_load(path, 4);
  EXPECT_EQ(a.labels, b.labels);
  std::filesystem::remove(path);
}

TEST(Training, StandardLowersLossAndIsDeterministic) {
  const Dataset d = advmask::testing::desk_data(256, 6);
  BackboneSpec bs;
  bs.seed = 1;
  Network a(backbone_new(bs)), b(backbone_new(bs));
  TrainConfig c;
  c.epochs = 2;
  c.seed = 2;
  const TrainHistory ha = train_standard(a, d, c);
  const TrainHistory hb = train_standard(b, d, c);
  EXPECT_EQ(ha.step_losses, hb.step_losses);
  EXPECT_LT(ha.epochs.back().loss, ha.initial_loss);
  EXPECT_EQ(ha.steps, 2u * 4u);
  EXPECT_EQ(ha.epochs.size(), 2u);
}

TEST(Training, ConfigValidation) {
  const Dataset d = advmask::testing::desk_data(32, 6);
  BackboneSpec bs;
  Network n(backbone_new(bs));
  TrainConfig c;
  c.lr = -1.0f;
  EXPECT_THROW(train_standard(n, d, c), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(train_standard(n, d, c), Error);
  EXPECT_THROW(regime_from_string("fancy"), ConfigError);
}

TEST(Training, AdversarialRunsAndKeepsAccuracyReasonable) {
  const Dataset d = advmask::testing::desk_data(128, 7);
  BackboneSpec bs;
  bs.seed = 3;
  Network n(backbone_new(bs));
  TrainConfig c;
  c.epochs = 1;
  c.inner_steps = 2;
  c.seed = 4;
  const TrainHistory h = train_adversarial(n, d, c);
  EXPECT_EQ(h.regime, Regime::kAdversarial);
  EXPECT_TRUE(std::isfinite(h.epochs.back().loss));
}

TEST(Training, FrontEndRecipeGuards) {
  const Dataset d = advmask::testing::desk_data(64, 8);
  BackboneSpec bs;
  FrontEndSpec fs;
  CompositeModel c(frontend_new(fs), Network(backbone_new(bs)));
  TrainConfig t;
  t.epochs = 1;
  EXPECT_THROW(train_frontend(c, d, t), PreconditionError);  // backbone not frozen
  c.set_backbone_frozen(true);
  t.epochs = 2;
  EXPECT_THROW(train_frontend(c, d, t), PreconditionError);  // more than one epoch
  t.epochs = 1;
  const TrainHistory h = train_frontend(c, d, t);
  EXPECT_FLOAT_EQ(h.lr, t.lr * t.frontend_lr_ratio);
}

TEST(Training, FrontEndLeavesBackboneBitwiseUnchanged) {
  const Dataset d = advmask::testing::desk_data(128, 9);
  Network back = advmask::testing::trained_backbone(d, 10, 1);
  back.graph().set_frozen(true);
  const Graph before = back.graph();
  FrontEndSpec fs;
  fs.seed = 11;
  CompositeModel c(frontend_new(fs), back);
  TrainConfig t;
  t.epochs = 1;
  t.frontend_lr = 1e-2f;
  train_frontend(c, d, t);
  for (std::size_t i = 0; i < before.parameters().size(); ++i) {
    EXPECT_TRUE(bitwise_equal(before.parameters()[i].value,
                              c.back().graph().parameters()[i].value));
  }
  for (std::size_t i = 0; i < before.buffers().size(); ++i) {
    EXPECT_TRUE(bitwise_equal(before.buffers()[i].value,
                              c.back().graph().buffers()[i].value));
  }
}

TEST(Training, AccuracyHelpers) {
  Network c(advmask::testing::constant_graph({1, 16, 16}, {0, 0, 3, 0}));
  const Dataset d = advmask::testing::desk_data(40, 1);
  EXPECT_DOUBLE_EQ(accuracy(c, d), 0.25);
  EXPECT_EQ(count_correct(c, d), 10u);
  EXPECT_THROW(accuracy(c, d.head(0)), PreconditionError);
}

}  // namespace
}  // namespace advmask
