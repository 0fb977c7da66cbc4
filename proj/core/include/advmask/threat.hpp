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
#include <span>
#include <string>
#include <vector>

#include "advmask/classifier.hpp"

namespace advmask {

class CompositeModel;

/// Attacker access levels, weakest first.
enum class ThreatLevel {
  kBlackBoxLabels = 0,
  kBlackBoxScores = 1,
  kGradient = 2,
  kFullTrainTime = 3,
};

std::string to_string(ThreatLevel level);

/// Gatekeeper between an attack and a model. Every call is checked against
/// the granted level and counted per example.
class ModelAccess {
 public:
  ModelAccess(const Classifier& model, ThreatLevel level);
  /// Full-train-time access to a composite also exposes its decomposition.
  ModelAccess(const CompositeModel& model, ThreatLevel level);

  ThreatLevel level() const { return level_; }
  /// Throws ThreatModelError if `needed` exceeds the granted level.
  void require(ThreatLevel needed, const std::string& who) const;

  std::vector<int> labels(const Tensor& batch);
  Tensor scores(const Tensor& batch);
  std::vector<float> losses(const Tensor& batch, std::span<const int> labels);
  InputGradient gradient(const Tensor& batch, std::span<const int> labels);
  const CompositeModel& decomposition() const;
  /// Backbone-only input gradient of a composite, evaluated at the raw
  /// input. Needs full-train-time access; counted as a gradient query.
  InputGradient backbone_gradient(const Tensor& batch,
                                  std::span<const int> labels);
  bool decomposable() const { return composite_ != nullptr; }

  /// Evaluation by the experimenter; not an attacker query, not counted.
  const Classifier& judge() const { return model_; }
  const Shape& input_shape() const { return model_.input_shape(); }
  std::size_t num_classes() const { return model_.num_classes(); }

  std::size_t forward_queries() const { return forwards_; }
  std::size_t gradient_queries() const { return gradients_; }

 private:
  const Classifier& model_;
  const CompositeModel* composite_ = nullptr;
  ThreatLevel level_;
  std::size_t forwards_ = 0;
  std::size_t gradients_ = 0;
};

}  // namespace advmask
