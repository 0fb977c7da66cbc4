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

#include "advmask/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advmask/errors.hpp"

namespace advmask {

namespace {

void check_scores(const Tensor& scores, std::span<const int> labels) {
  if (scores.rank() != 2) {
    throw ShapeError("expected [N, c] scores, got " +
                     to_string(scores.shape()));
  }
  if (scores.dim(0) != labels.size()) {
    throw ShapeError("scores batch " + std::to_string(scores.dim(0)) +
                     " != label count " + std::to_string(labels.size()));
  }
  check_labels(labels, scores.dim(1));
}

}  // namespace

void check_labels(std::span<const int> labels, std::size_t classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw PreconditionError("label " + std::to_string(labels[i]) +
                              " at index " + std::to_string(i) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax expects [N, c], got " +
                     to_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const float* z = logits.data().data() + r * c;
    float* p = out.data().data() + r * c;
    const float m = *std::max_element(z, z + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(double(z[j]) - m);
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = static_cast<float>(std::exp(double(z[j]) - m) / sum);
    }
  }
  return out;
}

CrossEntropy cross_entropy_logits(const Tensor& logits,
                                  std::span<const int> labels,
                                  Reduction reduction, bool want_grad) {
  check_scores(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  CrossEntropy ce;
  ce.per_example.resize(n);
  if (want_grad) ce.grad = Tensor(logits.shape());
  const double scale = reduction == Reduction::kMean ? 1.0 / double(n) : 1.0;
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const float* z = logits.data().data() + r * c;
    const double m = *std::max_element(z, z + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(double(z[j]) - m);
    const double lse = m + std::log(sum);
    const double loss = lse - double(z[labels[r]]);
    ce.per_example[r] = static_cast<float>(loss);
    total += loss;
    if (want_grad) {
      float* g = ce.grad.data().data() + r * c;
      for (std::size_t j = 0; j < c; ++j) {
        double p = std::exp(double(z[j]) - lse);
        if (static_cast<int>(j) == labels[r]) p -= 1.0;
        g[j] = static_cast<float>(p * scale);
      }
    }
  }
  ce.mean = n ? total / double(n) : 0.0;
  return ce;
}

CrossEntropy cross_entropy_probs(const Tensor& probs,
                                 std::span<const int> labels,
                                 Reduction reduction, bool want_grad) {
  check_scores(probs, labels);
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  CrossEntropy ce;
  ce.per_example.resize(n);
  if (want_grad) ce.grad = Tensor(probs.shape());
  const double scale = reduction == Reduction::kMean ? 1.0 / double(n) : 1.0;
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double p = probs.data()[r * c + labels[r]];
    const double loss = -std::log(p);
    ce.per_example[r] = static_cast<float>(loss);
    total += loss;
    if (want_grad) {
      ce.grad.data()[r * c + labels[r]] = static_cast<float>(-scale / p);
    }
  }
  ce.mean = n ? total / double(n) : 0.0;
  return ce;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) {
    throw ShapeError("argmax_rows expects [N, c], got " +
                     to_string(scores.shape()));
  }
  const std::size_t n = scores.dim(0), c = scores.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* z = scores.data().data() + r * c;
    out[r] = static_cast<int>(std::max_element(z, z + c) - z);
  }
  return out;
}

}  // namespace advmask
