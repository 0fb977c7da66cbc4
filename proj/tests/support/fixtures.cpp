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

#include "fixtures.hpp"

#include <cmath>

#include "advmask/training.hpp"

namespace advmask::testing {

namespace {

void fill(Tensor& t, Rng& rng, double std) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(rng.normal() * std);
}

}  // namespace

Graph random_graph(Rng& rng, std::size_t classes) {
  const std::size_t c = 1 + rng.below(2);
  const std::size_t h = 4 + rng.below(3);
  const std::size_t w = 4 + rng.below(3);
  Graph g({c, h, w});
  const std::size_t f = 2 + rng.below(3);
  NodeId x = g.conv2d(g.input(), f, 3, "c0");
  x = g.relu(g.batch_norm(x, "bn0"));
  if (rng.below(2)) {
    NodeId r = g.conv2d(x, f, 3, "c1", false);
    r = g.batch_norm(r, "bn1");
    x = g.relu(g.add(x, r));
  }
  if (rng.below(2) && h % 2 == 0 && w % 2 == 0) x = g.avg_pool2(x);
  if (rng.below(2)) x = g.relu(g.dense(x, 6, "d0"));
  g.dense(x, classes, "head");
  if (rng.below(4) == 0) g.softmax(g.output());

  for (Parameter& p : g.parameters()) {
    if (p.name.ends_with(".gamma")) {
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.uniform(0.5f, 1.5f);
    } else if (p.name.ends_with(".beta") || p.name.ends_with(".bias")) {
      fill(p.value, rng, 0.1);
    } else {
      const std::size_t fan_in = p.value.size() / p.value.dim(0);
      fill(p.value, rng, std::sqrt(2.0 / double(fan_in)));
    }
  }
  for (Parameter& b : g.buffers()) {
    for (std::size_t i = 0; i < b.value.size(); ++i) {
      b.value[i] = b.name.ends_with("running_var") ? rng.uniform(0.5f, 2.0f)
                                                    : rng.uniform(-0.3f, 0.3f);
    }
  }
  return g;
}

Graph linear_graph(std::size_t d, const std::vector<float>& w,
                   const std::vector<float>& b) {
  Graph g({1, 1, d});
  g.dense(g.input(), b.size(), "lin");
  g.param("lin.weight").value = Tensor({b.size(), d}, w);
  g.param("lin.bias").value = Tensor({b.size()}, b);
  return g;
}

Graph constant_graph(const Shape& input, const std::vector<float>& logits) {
  Graph g(input);
  g.dense(g.input(), logits.size(), "const");
  g.param("const.bias").value = Tensor({logits.size()}, logits);
  return g;
}

Dataset desk_data(std::size_t n, std::uint64_t seed, Split split) {
  SynthSpec s;
  s.kind = SynthKind::kDigitsLite;
  s.n = n;
  s.margin = 0.05f;
  s.amplitude = 0.15f;
  s.seed = seed;
  s.split = split;
  return dataset_synth(s);
}

Network trained_backbone(const Dataset& train, std::uint64_t seed,
                         std::size_t epochs, BackboneKind kind) {
  BackboneSpec bs;
  bs.kind = kind;
  bs.input = train.images.example_shape();
  bs.classes = train.classes;
  bs.seed = seed;
  Network net(backbone_new(bs));
  if (epochs == 0) return net;
  TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = seed;
  train_standard(net, train, tc);
  return net;
}

Tensor random_batch(Rng& rng, std::size_t n, const Shape& example) {
  Shape s = {n};
  s.insert(s.end(), example.begin(), example.end());
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(rng.uniform());
  return t;
}

}  // namespace advmask::testing
