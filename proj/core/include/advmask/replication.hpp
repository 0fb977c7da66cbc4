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

#include <nlohmann/json.hpp>

#include "advmask/dataset.hpp"
#include "advmask/diagnostics.hpp"
#include "advmask/models.hpp"
#include "advmask/training.hpp"

namespace advmask {

struct MaskingReplicationConfig {
  std::uint64_t seed = 0;
  float epsilon = 8.0f / 255.0f;
  SynthSpec data = default_data();
  std::size_t test_size = 500;
  std::size_t sample_size = 100;  ///< examples under the attack battery
  BackboneSpec backbone;
  TrainConfig backbone_train;
  FrontEndSpec frontend = default_frontend();
  TrainConfig frontend_train = default_frontend_train();
  MaskingConfig battery;
  bool ablation = true;  ///< also train a front-end without its skip

  static SynthSpec default_data();
  static FrontEndSpec default_frontend();
  static TrainConfig default_frontend_train();
};

nlohmann::json to_json(const MaskingReplicationConfig& cfg);

struct LossCurve {
  double initial_loss = 0.0;
  std::vector<float> step_losses;
  double final_clean_acc = 0.0;  ///< training-set accuracy after the epoch
};

struct MaskingReplicationReport {
  nlohmann::json config;
  AccuracyEstimate backbone_clean;   ///< full test set
  AccuracyEstimate composite_clean;  ///< full test set
  MaskingReport masking;             ///< battery on the sample
  LossCurve with_skip;
  std::optional<LossCurve> without_skip;

  double clean_drop_points() const;
  double pgd_minus_bpda_points() const;
  bool clean_preserved() const;   ///< drop within 2 points
  bool gap_reproduced() const;    ///< PGD minus BPDA >= 20 points
  bool bpda_breaks() const;       ///< BPDA accuracy <= 10%
  bool phenomenon() const { return clean_preserved() && gap_reproduced() && bpda_breaks(); }
};

nlohmann::json to_json(const MaskingReplicationReport& r);

/// Standard backbone, frozen; identity-initialized front-end trained
/// adversarially for one epoch at a small rate; then the indicator battery
/// and, optionally, the skip ablation.
MaskingReplicationReport run_masking_replication(
    const MaskingReplicationConfig& cfg);

}  // namespace advmask
