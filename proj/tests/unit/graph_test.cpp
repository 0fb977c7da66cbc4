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
#include "advmask/gradcheck.hpp"
#include "advmask/graph.hpp"
#include "fixtures.hpp"
#include "reference.hpp"

namespace advmask {
namespace {

using testing::ReferenceGraph;

TEST(Graph, ForwardMatchesReferenceInterpreter) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    Graph g = advmask::testing::random_graph(rng);
    const Tensor x = advmask::testing::random_batch(rng, 3, g.input_shape());
    const Tensor y = g.forward(x);
    const std::vector<double> xd(x.data().begin(), x.data().end());
    const std::vector<double> ref = ReferenceGraph(g).forward(xd, 3, false);
    ASSERT_EQ(ref.size(), y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      EXPECT_NEAR(y[i], ref[i], 1e-4 * std::max(1.0, std::abs(ref[i])));
    }
  }
}

TEST(Graph, InputGradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int t = 0; t < 15; ++t) {
    Graph g = advmask::testing::random_graph(rng);
    const Tensor x = advmask::testing::random_batch(rng, 2, g.input_shape());
    const std::vector<int> y{0, 1};
    const bool training = t % 3 == 0;
    const auto r = advmask::testing::check_input_gradient(g, x, y, 1e-3, training);
    EXPECT_LE(r.max_relative_error, 1e-3) << "graph " << t;
    EXPECT_GT(r.checked, 0u);
  }
}

TEST(Graph, ParameterGradientsMatchLibraryFiniteDifferences) {
  Graph g({1, 2, 2});
  g.dense(g.input(), 3, "fc");
  Rng rng(3);
  for (Parameter& p : g.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = float(rng.normal());
  }
  const Tensor x = advmask::testing::random_batch(rng, 4, g.input_shape());
  const std::vector<int> y{0, 1, 2, 1};
  const LossAndGrad lg = g.loss_and_grad(x, y);
  // Dense: dL/dW = sum_n dL/dz_n x_n^T; check one weight by central difference.
  Parameter& w = g.param("fc.weight");
  const float orig = w.value[1];
  const double h = 1e-2;
  w.value[1] = float(orig + h);
  const double up = g.loss_and_grad(x, y).loss;
  w.value[1] = float(orig - h);
  const double down = g.loss_and_grad(x, y).loss;
  w.value[1] = orig;
  EXPECT_NEAR(lg.grads.param_grads.at("fc.weight")[1], (up - down) / (2 * h), 2e-3);
}

TEST(Graph, SumReductionGivesPerExampleGradients) {
  Rng rng(4);
  Graph g = advmask::testing::random_graph(rng);
  const Tensor x = advmask::testing::random_batch(rng, 3, g.input_shape());
  const std::vector<int> y{0, 1, 2};
  const LossAndGrad all = g.loss_and_grad(x, y, Reduction::kSum, false);
  const Tensor one = x.slice(1, 2);
  const std::vector<int> y1{1};
  const LossAndGrad single = g.loss_and_grad(one, y1, Reduction::kSum, false);
  const std::size_t k = one.size();
  for (std::size_t i = 0; i < k; ++i) {
    EXPECT_NEAR(all.grads.input_grad[k + i], single.grads.input_grad[i], 1e-6);
  }
}

TEST(Graph, FrozenParametersGetNoGradient) {
  Graph g({1, 2, 2});
  g.dense(g.input(), 2, "fc");
  g.set_frozen(true);
  const Tensor x({1, 1, 2, 2}, 0.5f);
  const LossAndGrad lg = g.loss_and_grad(x, std::vector<int>{0});
  EXPECT_TRUE(lg.grads.param_grads.empty());
  EXPECT_EQ(lg.grads.input_grad.size(), 4u);
}

TEST(Graph, TrainingBatchNormUsesBiasedBatchStatistics) {
  Graph g({1, 1, 2});
  g.batch_norm(g.input(), "bn", 0.0f);
  const Tensor x({2, 1, 1, 2}, {0, 2, 4, 6});
  const Activations a = g.trace(x, BatchNormMode::kTraining);
  // mean 3, biased variance 5
  const double s = std::sqrt(5.0);
  EXPECT_NEAR(a.output()[0], -3.0 / s, 1e-6);
  EXPECT_NEAR(a.output()[3], 3.0 / s, 1e-6);
}

TEST(Graph, CommitBatchStatisticsUpdatesRunningStats) {
  Graph g({1, 1, 2});
  g.batch_norm(g.input(), "bn");
  const Tensor x({2, 1, 1, 2}, {0, 2, 4, 6});
  Tensor before_mean = g.buffers()[0].value;
  const Activations inf = g.trace(x);
  g.commit_batch_statistics(inf, 0.5f);
  EXPECT_EQ(g.buffers()[0].value, before_mean);  // inference traces change nothing
  const Activations tr = g.trace(x, BatchNormMode::kTraining);
  g.commit_batch_statistics(tr, 0.5f);
  EXPECT_NEAR(g.buffers()[0].value[0], 0.5 * before_mean[0] + 0.5 * 3.0, 1e-6);
}

TEST(Graph, ConvPreservesSpatialSizeWithDefaultPadding) {
  Graph g({2, 6, 8});
  const NodeId c = g.conv2d(g.input(), 3, 3, "c");
  EXPECT_EQ(g.nodes()[c].shape, Shape({3, 6, 8}));
  const NodeId p = g.avg_pool2(g.conv2d(c, 1, 3, "d"));
  EXPECT_EQ(g.nodes()[p].shape, Shape({1, 3, 4}));
  EXPECT_THROW(g.avg_pool2(p), ShapeError);
}

TEST(Graph, ShapeErrors) {
  Graph g({1, 4, 4});
  const NodeId d = g.dense(g.input(), 3, "fc");
  EXPECT_THROW(g.conv2d(d, 2, 3, "c"), ShapeError);
  const NodeId c = g.conv2d(g.input(), 2, 3, "c");
  EXPECT_THROW(g.add(c, d), ShapeError);
  EXPECT_THROW(g.forward(Tensor({1, 1, 3, 4})), ShapeError);
}

TEST(Graph, NonFiniteLossNamesNode) {
  Graph g({1, 1, 2});
  g.scale(g.dense(g.input(), 2, "fc"), 1e30f);
  g.param("fc.weight").value = Tensor({2, 2}, {1e10f, 0, -1e10f, 0});
  const Tensor x({1, 1, 1, 2}, {1, 1});
  try {
    g.loss_and_grad(x, std::vector<int>{1});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_GE(e.node(), 1);
  }
}

TEST(GradCheck, LibraryFiniteDifferenceAgreesOnSmoothGraph) {
  Graph g({1, 2, 2});
  g.dense(g.relu(g.dense(g.input(), 4, "a")), 3, "b");
  Rng rng(5);
  for (Parameter& p : g.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = float(rng.normal());
  }
  const Tensor x = advmask::testing::random_batch(rng, 2, g.input_shape());
  FiniteDiffOptions o;
  o.samples = 0;
  const FiniteDiffResult r = finite_diff_check(g, x, std::vector<int>{0, 2}, 1e-2, o);
  EXPECT_LT(r.max_relative_error, 2e-2);
  EXPECT_EQ(r.checked + r.skipped_kinks, x.size());
}

}  // namespace
}  // namespace advmask
