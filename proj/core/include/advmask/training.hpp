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
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "advmask/classifier.hpp"
#include "advmask/dataset.hpp"
#include "advmask/models.hpp"

namespace advmask {

enum class Regime { kStandard, kAdversarial, kFrontEnd };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 10;
  float lr = 0.05f;
  std::size_t batch_size = 64;
  float momentum = 0.9f;  ///< 0 gives plain SGD
  /// Inner PGD of the adversarial regimes; epsilon 0 or 0 steps trains on
  /// clean batches.
  float epsilon = 8.0f / 255.0f;
  std::size_t inner_steps = 7;
  float inner_alpha = 0.0f;  ///< 0 selects epsilon / 4
  /// Front-end recipe: learning rate relative to `lr`, unless an absolute
  /// rate is given.
  float frontend_lr_ratio = 1e-4f;
  float frontend_lr = 0.0f;
  /// Stop after this many optimizer steps (0: no limit).
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;

  float resolved_inner_alpha() const {
    return inner_alpha > 0.0f ? inner_alpha : epsilon / 4.0f;
  }
  float resolved_frontend_lr() const {
    return frontend_lr > 0.0f ? frontend_lr : lr * frontend_lr_ratio;
  }
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;       ///< mean loss over the epoch's training batches
  double clean_acc = 0.0;  ///< training-set accuracy after the epoch
};

struct TrainHistory {
  Regime regime = Regime::kStandard;
  double initial_loss = 0.0;  ///< mean clean training loss before step 1
  std::vector<EpochRecord> epochs;
  std::vector<float> step_losses;
  std::size_t steps = 0;
  float lr = 0.0f;  ///< rate actually applied
};

nlohmann::json to_json(const TrainHistory& h);

/// Empirical risk minimization with SGD; batch-norm in training mode.
TrainHistory train_standard(Network& model, const Dataset& data,
                            const TrainConfig& cfg);

/// Minimizes the loss on PGD-perturbed batches (7 steps, alpha = eps / 4,
/// one random restart by default).
TrainHistory train_adversarial(Network& model, const Dataset& data,
                               const TrainConfig& cfg);

/// Adversarial training of the front-end only: the backbone must be frozen,
/// at most one epoch, batch-norm statistics never updated.
TrainHistory train_frontend(CompositeModel& model, const Dataset& data,
                            const TrainConfig& cfg);

/// Correct predictions of `model` on `data`, evaluated in chunks.
std::size_t count_correct(const Classifier& model, const Dataset& data);
double accuracy(const Classifier& model, const Dataset& data);
double mean_loss(const Classifier& model, const Dataset& data);

}  // namespace advmask
