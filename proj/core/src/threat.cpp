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

#include "advmask/threat.hpp"

#include "advmask/errors.hpp"
#include "advmask/models.hpp"

namespace advmask {

std::string to_string(ThreatLevel level) {
  switch (level) {
    case ThreatLevel::kBlackBoxLabels: return "black-box-labels";
    case ThreatLevel::kBlackBoxScores: return "black-box-scores";
    case ThreatLevel::kGradient: return "gradient";
    case ThreatLevel::kFullTrainTime: return "full-train-time";
  }
  return "?";
}

ModelAccess::ModelAccess(const Classifier& model, ThreatLevel level)
    : model_(model), level_(level) {}

ModelAccess::ModelAccess(const CompositeModel& model, ThreatLevel level)
    : model_(model), composite_(&model), level_(level) {}

void ModelAccess::require(ThreatLevel needed, const std::string& who) const {
  if (static_cast<int>(needed) > static_cast<int>(level_)) {
    throw ThreatModelError(who + " needs " + to_string(needed) +
                           " access but the threat model grants " +
                           to_string(level_));
  }
}

std::vector<int> ModelAccess::labels(const Tensor& batch) {
  require(ThreatLevel::kBlackBoxLabels, "label query");
  forwards_ += batch.batch();
  return model_.predict(batch);
}

Tensor ModelAccess::scores(const Tensor& batch) {
  require(ThreatLevel::kBlackBoxScores, "score query");
  forwards_ += batch.batch();
  return model_.scores(batch);
}

std::vector<float> ModelAccess::losses(const Tensor& batch,
                                       std::span<const int> labels) {
  require(ThreatLevel::kBlackBoxScores, "loss query");
  forwards_ += batch.batch();
  return model_.losses(batch, labels);
}

InputGradient ModelAccess::gradient(const Tensor& batch,
                                    std::span<const int> labels) {
  require(ThreatLevel::kGradient, "gradient query");
  gradients_ += batch.batch();
  return model_.input_gradient(batch, labels);
}

const CompositeModel& ModelAccess::decomposition() const {
  require(ThreatLevel::kFullTrainTime, "front-end decomposition");
  if (!composite_) {
    throw PreconditionError(
        "model has no front-end/backbone decomposition");
  }
  return *composite_;
}

InputGradient ModelAccess::backbone_gradient(const Tensor& batch,
                                             std::span<const int> labels) {
  const CompositeModel& composite = decomposition();
  gradients_ += batch.batch();
  return composite.back().input_gradient(batch, labels);
}

}  // namespace advmask
