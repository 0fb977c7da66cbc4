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

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advmask/loss.hpp"
#include "advmask/tensor.hpp"

namespace advmask {

enum class OpKind {
  kInput,
  kDense,
  kConv2d,
  kRelu,
  kBatchNorm,
  kAdd,
  kScale,
  kClamp,
  kSoftmax,
  kAvgPool2,
};

const char* to_string(OpKind kind);

enum class BatchNormMode {
  kInference,  ///< running statistics, never updated
  kTraining,   ///< batch statistics; running stats updated on commit
};

using NodeId = std::size_t;

struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

/// Input gradient plus gradients of every unfrozen parameter.
struct GradientBundle {
  Tensor input_grad;
  std::map<std::string, Tensor> param_grads;
};

struct Node {
  OpKind kind = OpKind::kInput;
  std::vector<NodeId> inputs;
  Shape shape;                      // per example
  std::vector<std::size_t> params;  // dense/conv: weight[, bias]; bn: gamma, beta
  std::vector<std::size_t> buffers; // bn: running mean, running var
  float a = 0.0f;                   // scale factor, clamp low, bn eps, conv pad
  float b = 0.0f;                   // clamp high
  std::string name;
};

/// Every node's value from one forward pass, plus batch-norm batch stats.
class Activations {
 public:
  const Tensor& output() const { return values_.at(output_); }
  const Tensor& at(NodeId id) const { return values_.at(id); }
  BatchNormMode mode() const { return mode_; }

 private:
  friend class Graph;
  std::vector<Tensor> values_;
  std::vector<std::vector<float>> bn_mean_;
  std::vector<std::vector<float>> bn_invstd_;
  std::vector<std::vector<float>> bn_var_;
  BatchNormMode mode_ = BatchNormMode::kInference;
  NodeId output_ = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<float> per_example;
  GradientBundle grads;
};

/// Static acyclic computation graph with reverse-mode differentiation.
///
/// Nodes are appended in topological order by the builder methods, so a node
/// can only consume nodes that already exist and the graph is acyclic by
/// construction. Shapes are checked when a node is added.
class Graph {
 public:
  /// Creates node 0, the input, with the given per-example shape.
  explicit Graph(Shape input_shape);

  NodeId input() const { return 0; }
  NodeId dense(NodeId x, std::size_t out_features, const std::string& name,
               bool bias = true);
  /// Stride-1 convolution; padding defaults to kernel/2 ("same" size).
  NodeId conv2d(NodeId x, std::size_t out_channels, std::size_t kernel,
                const std::string& name, bool bias = true,
                std::optional<std::size_t> padding = std::nullopt);
  NodeId relu(NodeId x);
  NodeId batch_norm(NodeId x, const std::string& name, float eps = 1e-5f);
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId x, float factor);
  NodeId clamp(NodeId x, float lo, float hi);
  NodeId softmax(NodeId x);
  NodeId avg_pool2(NodeId x);

  /// Output defaults to the most recently added node.
  void set_output(NodeId id);
  NodeId output() const { return output_; }

  const Shape& input_shape() const { return nodes_.front().shape; }
  const Shape& output_shape() const { return nodes_[output_].shape; }
  bool outputs_probabilities() const {
    return nodes_[output_].kind == OpKind::kSoftmax;
  }

  std::span<const Node> nodes() const { return nodes_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& buffers() { return buffers_; }
  const std::vector<Parameter>& buffers() const { return buffers_; }
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  void set_frozen(bool frozen);
  std::size_t parameter_count() const;

  /// Inference-mode forward pass of a [N, ...input_shape] batch.
  Tensor forward(const Tensor& batch) const;
  Activations trace(const Tensor& batch,
                    BatchNormMode mode = BatchNormMode::kInference) const;

  /// Back-propagates `output_grad` (d loss / d output) through a trace.
  GradientBundle backward(const Activations& acts, const Tensor& output_grad,
                          bool with_params = true) const;

  /// Cross-entropy of the output against `labels`, with gradients.
  /// Throws NumericalError naming the first node with a non-finite value
  /// when the loss is not finite.
  LossAndGrad loss_and_grad(const Tensor& batch, std::span<const int> labels,
                            Reduction reduction = Reduction::kMean,
                            bool with_params = true,
                            BatchNormMode mode = BatchNormMode::kInference,
                            Activations* keep = nullptr) const;

  /// Folds a training-mode trace's batch statistics into running stats.
  void commit_batch_statistics(const Activations& acts, float momentum = 0.1f);

  /// First node whose activation contains NaN/Inf, or -1.
  long first_nonfinite_node(const Activations& acts) const;

 private:
  GradientBundle backward_from(const Activations& acts, NodeId start,
                               const Tensor& start_grad, bool with_params) const;
  NodeId push(Node node);
  std::size_t add_param(const std::string& name, Shape shape,
                        float fill = 0.0f);
  std::size_t add_buffer(const std::string& name, Shape shape, float fill);
  void check_node(NodeId id) const;
  void check_batch(const Tensor& batch) const;

  std::vector<Node> nodes_;
  std::vector<Parameter> params_;
  std::vector<Parameter> buffers_;
  NodeId output_ = 0;
};

}  // namespace advmask
