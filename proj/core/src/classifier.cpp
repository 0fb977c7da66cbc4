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

#include "advmask/classifier.hpp"

#include "advmask/errors.hpp"
#include "advmask/loss.hpp"

namespace advmask {

std::vector<float> score_losses(const Tensor& scores,
                                std::span<const int> labels,
                                bool probabilities) {
  CrossEntropy ce =
      probabilities
          ? cross_entropy_probs(scores, labels, Reduction::kSum, false)
          : cross_entropy_logits(scores, labels, Reduction::kSum, false);
  return std::move(ce.per_example);
}

std::vector<float> Classifier::losses(const Tensor& batch,
                                      std::span<const int> labels) const {
  return score_losses(scores(batch), labels, probabilities());
}

std::vector<int> Classifier::predict(const Tensor& batch) const {
  return argmax_rows(scores(batch));
}

Network::Network(Graph graph) : graph_(std::move(graph)) {
  if (graph_.output_shape().size() != 1) {
    throw ShapeError("a classifier graph must output [c], got " +
                     to_string(graph_.output_shape()));
  }
}

InputGradient Network::input_gradient(const Tensor& batch,
                                      std::span<const int> labels) const {
  LossAndGrad lg =
      graph_.loss_and_grad(batch, labels, Reduction::kSum, false);
  return {std::move(lg.grads.input_grad), std::move(lg.per_example)};
}

}  // namespace advmask
