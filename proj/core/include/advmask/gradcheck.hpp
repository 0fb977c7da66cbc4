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

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "advmask/graph.hpp"

namespace advmask {

struct FiniteDiffOptions {
  std::size_t samples = 64;  ///< coordinates checked; 0 means all
  std::uint64_t seed = 0;
  /// Skip coordinates whose +-h probes change a ReLU/clamp pattern.
  bool skip_kinks = true;
  BatchNormMode mode = BatchNormMode::kInference;
};

struct FiniteDiffResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// |analytic - central difference| / (|analytic| + 1e-8), maximized over
/// `coords`, for a scalar function of a double vector.
double max_relative_error(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, std::span<const double> analytic, double h,
    std::span<const std::size_t> coords);

/// Checks Graph::loss_and_grad's input gradient (mean cross-entropy) against
/// central differences with step h on sampled input coordinates.
FiniteDiffResult finite_diff_check(const Graph& graph, const Tensor& batch,
                                   std::span<const int> labels, double h,
                                   const FiniteDiffOptions& options = {});

}  // namespace advmask
