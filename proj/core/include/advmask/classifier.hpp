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

#pragma once

#include <span>
#include <vector>

#include "advmask/graph.hpp"
#include "advmask/tensor.hpp"

namespace advmask {

struct InputGradient {
  Tensor grad;                ///< d loss_i / d x_i for every example i
  std::vector<float> losses;  ///< per-example cross-entropy
};

/// Anything that maps an image batch to class scores and can be attacked.
class Classifier {
 public:
  virtual ~Classifier() = default;

  /// Per-example input shape, e.g. [C, H, W].
  virtual const Shape& input_shape() const = 0;
  virtual std::size_t num_classes() const = 0;
  /// [N, c] scores (logits unless probabilities() is true).
  virtual Tensor scores(const Tensor& batch) const = 0;
  virtual bool probabilities() const { return false; }
  /// Gradient of each example's own cross-entropy w.r.t. its input.
  virtual InputGradient input_gradient(const Tensor& batch,
                                       std::span<const int> labels) const = 0;

  /// Per-example loss; cross-entropy of scores() unless overridden.
  virtual std::vector<float> losses(const Tensor& batch,
                                    std::span<const int> labels) const;
  std::vector<int> predict(const Tensor& batch) const;
};

/// Per-example cross-entropy of precomputed scores.
std::vector<float> score_losses(const Tensor& scores,
                                std::span<const int> labels,
                                bool probabilities);

/// A classifier backed by a single graph with a flat [c] output.
class Network : public Classifier {
 public:
  explicit Network(Graph graph);

  const Shape& input_shape() const override { return graph_.input_shape(); }
  std::size_t num_classes() const override {
    return graph_.output_shape()[0];
  }
  Tensor scores(const Tensor& batch) const override {
    return graph_.forward(batch);
  }
  bool probabilities() const override {
    return graph_.outputs_probabilities();
  }
  InputGradient input_gradient(const Tensor& batch,
                               std::span<const int> labels) const override;

  Graph& graph() { return graph_; }
  const Graph& graph() const { return graph_; }

 private:
  Graph graph_;
};

}  // namespace advmask
