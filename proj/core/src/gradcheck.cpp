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

#include "advmask/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advmask/errors.hpp"
#include "advmask/rng.hpp"

namespace advmask {

double max_relative_error(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, std::span<const double> analytic, double h,
    std::span<const std::size_t> coords) {
  if (!(h > 0.0)) throw PreconditionError("finite-difference step must be > 0");
  if (analytic.size() != x.size()) {
    throw ShapeError("analytic gradient size differs from point size");
  }
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i : coords) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst,
                     std::fabs(analytic[i] - fd) / (std::fabs(analytic[i]) + 1e-8));
  }
  return worst;
}

namespace {

// Sign pattern of every piecewise-linear switch (ReLU input > 0, clamp
// input inside its range) in a trace.
std::vector<bool> kink_pattern(const Graph& graph, const Activations& acts) {
  std::vector<bool> pattern;
  const auto nodes = graph.nodes();
  for (NodeId id = 1; id < nodes.size(); ++id) {
    const Node& n = nodes[id];
    if (n.kind != OpKind::kRelu && n.kind != OpKind::kClamp) continue;
    const Tensor& in = acts.at(n.inputs[0]);
    for (float v : in.data()) {
      if (n.kind == OpKind::kRelu) {
        pattern.push_back(v > 0.0f);
      } else {
        pattern.push_back(v >= n.a);
        pattern.push_back(v <= n.b);
      }
    }
  }
  return pattern;
}

}  // namespace

FiniteDiffResult finite_diff_check(const Graph& graph, const Tensor& batch,
                                   std::span<const int> labels, double h,
                                   const FiniteDiffOptions& options) {
  if (!(h > 0.0)) throw PreconditionError("finite-difference step must be > 0");
  LossAndGrad lg = graph.loss_and_grad(batch, labels, Reduction::kMean, false,
                                       options.mode);
  const Tensor& analytic = lg.grads.input_grad;

  std::vector<std::size_t> coords(batch.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.samples && options.samples < coords.size()) {
    Rng rng(options.seed, 0x6772616463686bULL);
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(options.samples);
  }

  const std::vector<bool> base = options.skip_kinks
                                     ? kink_pattern(graph, graph.trace(batch, options.mode))
                                     : std::vector<bool>{};
  FiniteDiffResult result;
  Tensor probe = batch;
  for (std::size_t i : coords) {
    const float orig = batch[i];
    const float up_v = static_cast<float>(orig + h);
    const float down_v = static_cast<float>(orig - h);
    auto eval = [&](float v, bool& kinked) {
      probe[i] = v;
      Activations acts = graph.trace(probe, options.mode);
      if (options.skip_kinks && kink_pattern(graph, acts) != base) kinked = true;
      CrossEntropy ce =
          graph.outputs_probabilities()
              ? cross_entropy_probs(acts.output(), labels, Reduction::kMean, false)
              : cross_entropy_logits(acts.output(), labels, Reduction::kMean,
                                     false);
      return ce.mean;
    };
    bool kinked = false;
    const double up = eval(up_v, kinked);
    const double down = eval(down_v, kinked);
    probe[i] = orig;
    if (kinked) {
      ++result.skipped_kinks;
      continue;
    }
    // Divide by the step actually realized in float32.
    const double fd = (up - down) / (double(up_v) - double(down_v));
    const double a = analytic[i];
    result.max_relative_error = std::max(
        result.max_relative_error, std::fabs(a - fd) / (std::fabs(a) + 1e-8));
    ++result.checked;
  }
  return result;
}

}  // namespace advmask
