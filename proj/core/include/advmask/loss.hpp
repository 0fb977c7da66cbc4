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

#include "advmask/tensor.hpp"

namespace advmask {

enum class Reduction {
  kMean,  ///< gradient of the batch-mean loss (training)
  kSum,   ///< gradient of each example's own loss (attacks)
};

struct CrossEntropy {
  double mean = 0.0;                ///< accumulated in double
  std::vector<float> per_example;
  Tensor grad;                      ///< d loss / d scores, empty if not requested
};

/// Row-wise softmax of [N, c] logits, log-sum-exp stabilized.
Tensor softmax(const Tensor& logits);

/// Fused softmax + cross-entropy on [N, c] logits.
CrossEntropy cross_entropy_logits(const Tensor& logits,
                                  std::span<const int> labels,
                                  Reduction reduction = Reduction::kMean,
                                  bool want_grad = true);

/// Cross-entropy on [N, c] rows that are already probabilities.
CrossEntropy cross_entropy_probs(const Tensor& probs,
                                 std::span<const int> labels,
                                 Reduction reduction = Reduction::kMean,
                                 bool want_grad = true);

/// Throws PreconditionError naming the first label outside [0, classes).
void check_labels(std::span<const int> labels, std::size_t classes);

std::vector<int> argmax_rows(const Tensor& scores);

}  // namespace advmask
