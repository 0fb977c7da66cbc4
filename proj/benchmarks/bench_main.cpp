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

#include <benchmark/benchmark.h>

#include "advmask/attacks.hpp"
#include "advmask/dataset.hpp"
#include "advmask/ensemble_analysis.hpp"
#include "advmask/models.hpp"
#include "advmask/threat.hpp"

namespace advmask {
namespace {

Dataset bench_data(std::size_t n) {
  SynthSpec s;
  s.kind = SynthKind::kDigitsLite;
  s.n = n;
  s.margin = 0.05f;
  s.amplitude = 0.15f;
  s.seed = 1;
  return dataset_synth(s);
}

Network backbone(BackboneKind kind) {
  BackboneSpec s;
  s.kind = kind;
  s.seed = 2;
  return Network(backbone_new(s));
}

void BM_BackboneForward(benchmark::State& state) {
  const Network net = backbone(BackboneKind::kSmallConvNet);
  const Dataset d = bench_data(std::size_t(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(net.scores(d.images));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BackboneForward)->Arg(1)->Arg(32)->Arg(128);

void BM_BackboneTrainingStep(benchmark::State& state) {
  const Network net = backbone(BackboneKind::kSmallConvNet);
  const Dataset d = bench_data(std::size_t(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.graph().loss_and_grad(
        d.images, d.labels, Reduction::kMean, true, BatchNormMode::kTraining));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BackboneTrainingStep)->Arg(32)->Arg(64);

void BM_CompositeInputGradient(benchmark::State& state) {
  FrontEndSpec fs;
  fs.init = FrontEndInit::kZeroLast;
  const CompositeModel comp(frontend_new(fs), backbone(BackboneKind::kSmallConvNet));
  const Dataset d = bench_data(std::size_t(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(comp.input_gradient(d.images, d.labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CompositeInputGradient)->Arg(1)->Arg(32);

void BM_PgdStep(benchmark::State& state) {
  const Network net = backbone(BackboneKind::kSmallConvNet);
  const Dataset d = bench_data(32);
  PgdConfig c;
  c.steps = 1;
  c.restarts = 1;
  for (auto _ : state) {
    ModelAccess access(net, ThreatLevel::kGradient);
    benchmark::DoNotOptimize(pgd(access, d.images, d.labels, 8.0f / 255.0f, c));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_PgdStep);

void BM_SquareQueries(benchmark::State& state) {
  const Network net = backbone(BackboneKind::kMlp);
  const Dataset d = bench_data(8);
  SquareConfig c;
  c.budget = std::size_t(state.range(0));
  c.stop_on_success = false;
  for (auto _ : state) {
    ModelAccess access(net, ThreatLevel::kBlackBoxScores);
    benchmark::DoNotOptimize(square_attack(access, d.images, d.labels, 8.0f / 255.0f, c));
  }
  state.SetItemsProcessed(state.iterations() * 8 * state.range(0));
}
BENCHMARK(BM_SquareQueries)->Arg(100)->Arg(500);

void BM_ZeroOrderGradient(benchmark::State& state) {
  const Network net = backbone(BackboneKind::kSmallConvNet);
  const Dataset d = bench_data(4);
  Rng rng(3);
  const BlockSpec blocks = random_blocks(d.images.example_size(), 5, rng);
  for (auto _ : state) {
    ModelAccess access(net, ThreatLevel::kBlackBoxScores);
    benchmark::DoNotOptimize(zero_order_grad(access, d.images, d.labels, 1e-2f, blocks));
  }
}
BENCHMARK(BM_ZeroOrderGradient);

void BM_BestResponse(benchmark::State& state) {
  const TransferMatrix tm = published_transfer_fixture();
  const EnsemblePolicy p = EnsemblePolicy::uniform(tm.targets.size());
  for (auto _ : state) benchmark::DoNotOptimize(attacker_best_response(tm, p));
}
BENCHMARK(BM_BestResponse);

}  // namespace
}  // namespace advmask

BENCHMARK_MAIN();
