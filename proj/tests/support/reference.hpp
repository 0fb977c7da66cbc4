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

namespace advmask::testing {

/// Double-precision interpreter of a Graph, written independently of the
/// library kernels. Reads nodes, parameters and buffers only.
class ReferenceGraph {
 public:
  explicit ReferenceGraph(const Graph& g);

  /// Per-example outputs for a batch stored row-major as doubles.
  std::vector<double> forward(std::span<const double> batch, std::size_t n,
                              bool training_bn,
                              std::vector<bool>* relu_pattern = nullptr) const;
  /// Mean cross-entropy of the output against labels.
  double mean_loss(std::span<const double> batch, std::span<const int> labels,
                   bool training_bn, std::vector<bool>* relu_pattern = nullptr) const;

  std::size_t input_size() const { return in_size_; }
  std::size_t output_size() const { return out_size_; }

 private:
  const Graph& g_;
  std::size_t in_size_ = 0;
  std::size_t out_size_ = 0;
};

struct OracleCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double floor = 0.0;  ///< denominator floor actually applied
};

/// Float32 analytic input gradient of the mean loss against double central
/// differences of the reference interpreter with step h. Coordinates whose
/// probes flip a ReLU or clamp are skipped. Relative error is
/// |a - fd| / max(|a|, |fd|, floor'), floor' = max(floor, relative_floor *
/// max|a|): float32 cannot resolve components far below the largest one.
OracleCheck check_input_gradient(const Graph& g, const Tensor& batch,
                                 std::span<const int> labels, double h,
                                 bool training_bn, double floor = 1e-6,
                                 double relative_floor = 1e-4);

}  // namespace advmask::testing
