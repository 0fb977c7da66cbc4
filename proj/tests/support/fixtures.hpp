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
#include <vector>

#include "advmask/classifier.hpp"
#include "advmask/dataset.hpp"
#include "advmask/graph.hpp"
#include "advmask/models.hpp"
#include "advmask/rng.hpp"

namespace advmask::testing {

/// conv + BN + ReLU stack with an optional residual block, optional
/// pooling and a dense head; random weights and batch-norm statistics.
Graph random_graph(Rng& rng, std::size_t classes = 3);

/// Logits W x + b on a [1, 1, d] input; W is [classes, d] row-major.
Graph linear_graph(std::size_t d, const std::vector<float>& w,
                   const std::vector<float>& b);

/// Ignores the input, returns fixed logits.
Graph constant_graph(const Shape& input, const std::vector<float>& logits);

/// Desk data: digits-lite, margin 0.05, amplitude 0.15, 16x16x1, 4 classes.
Dataset desk_data(std::size_t n, std::uint64_t seed, Split split = Split::kTrain);

/// Backbone trained with the standard regime; zero epochs leaves it at init.
Network trained_backbone(const Dataset& train, std::uint64_t seed,
                         std::size_t epochs = 5,
                         BackboneKind kind = BackboneKind::kSmallConvNet);

/// A batch of uniform random inputs in [0, 1].
Tensor random_batch(Rng& rng, std::size_t n, const Shape& example);

}  // namespace advmask::testing
