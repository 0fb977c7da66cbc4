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

#include "advmask/replication.hpp"

#include <cmath>

#include "advmask/errors.hpp"
#include "advmask/experiment.hpp"

namespace advmask {

namespace {

constexpr std::uint64_t kStream = 0x3a5c;

nlohmann::json curve_json(const LossCurve& c) {
  return {{"initial_loss", c.initial_loss},
          {"step_losses", c.step_losses},
          {"final_clean_acc", c.final_clean_acc}};
}

LossCurve curve_of(const TrainHistory& h) {
  LossCurve c;
  c.initial_loss = h.initial_loss;
  c.step_losses = h.step_losses;
  if (!h.epochs.empty()) c.final_clean_acc = h.epochs.back().clean_acc;
  return c;
}

}  // namespace

SynthSpec MaskingReplicationConfig::default_data() {
  SynthSpec s;
  s.kind = SynthKind::kDigitsLite;
  s.margin = 0.05f;
  s.amplitude = 0.15f;
  return s;
}

FrontEndSpec MaskingReplicationConfig::default_frontend() {
  FrontEndSpec f;
  f.init = FrontEndInit::kZeroLast;
  return f;
}

TrainConfig MaskingReplicationConfig::default_frontend_train() {
  TrainConfig t;
  t.epochs = 1;
  return t;
}

nlohmann::json to_json(const MaskingReplicationConfig& c) {
  return {{"seed", c.seed},
          {"epsilon", c.epsilon},
          {"data", to_json(c.data)},
          {"test_size", c.test_size},
          {"sample_size", c.sample_size},
          {"backbone", to_json(c.backbone)},
          {"backbone_train", to_json(c.backbone_train)},
          {"frontend", to_json(c.frontend)},
          {"frontend_train", to_json(c.frontend_train)},
          {"black_box", c.battery.black_box},
          {"thresholds",
           {{"black_box_points", c.battery.thresholds.black_box_points},
            {"bpda_points", c.battery.thresholds.bpda_points}}},
          {"ablation", c.ablation}};
}

double MaskingReplicationReport::clean_drop_points() const {
  return 100.0 * (backbone_clean.accuracy - composite_clean.accuracy);
}

double MaskingReplicationReport::pgd_minus_bpda_points() const {
  return masking.bpda_gap;
}

bool MaskingReplicationReport::clean_preserved() const {
  return std::abs(clean_drop_points()) <= 2.0 + 1e-9;
}

bool MaskingReplicationReport::gap_reproduced() const {
  return masking.measured.bpda && masking.bpda_gap >= 20.0 - 1e-9;
}

bool MaskingReplicationReport::bpda_breaks() const {
  return masking.measured.bpda && masking.measured.bpda->accuracy <= 0.10 + 1e-12;
}

nlohmann::json to_json(const MaskingReplicationReport& r) {
  const MaskingMeasurements& m = r.masking.measured;
  nlohmann::json j = {
      {"config", r.config},
      {"backbone_clean", to_json(r.backbone_clean)},
      {"composite_clean", to_json(r.composite_clean)},
      {"masking", to_json(r.masking)},
      {"verdict",
       {{"clean_acc", r.composite_clean.accuracy},
        {"pgd_acc", m.pgd.accuracy},
        {"bpda_acc", m.bpda ? nlohmann::json(m.bpda->accuracy) : nlohmann::json(nullptr)},
        {"flag", r.masking.masking_suspected}}},
      {"checks",
       {{"clean_drop_points", r.clean_drop_points()},
        {"pgd_minus_bpda_points", r.pgd_minus_bpda_points()},
        {"clean_preserved", r.clean_preserved()},
        {"gap_reproduced", r.gap_reproduced()},
        {"bpda_breaks", r.bpda_breaks()},
        {"phenomenon", r.phenomenon()}}},
      {"ablation", {{"skip", curve_json(r.with_skip)}}}};
  j["ablation"]["no_skip"] =
      r.without_skip ? curve_json(*r.without_skip) : nlohmann::json(nullptr);
  return j;
}

MaskingReplicationReport run_masking_replication(
    const MaskingReplicationConfig& in) {
  MaskingReplicationConfig cfg = in;
  const std::uint64_t s = cfg.seed;
  cfg.data.seed = derive_seed(s, kStream, 0);
  cfg.data.split = Split::kTrain;
  cfg.backbone.seed = derive_seed(s, kStream, 2);
  cfg.backbone_train.seed = derive_seed(s, kStream, 3);
  cfg.frontend.seed = derive_seed(s, kStream, 4);
  cfg.frontend_train.seed = derive_seed(s, kStream, 5);
  cfg.frontend_train.epsilon = cfg.epsilon;
  cfg.battery.seed = derive_seed(s, kStream, 6);
  cfg.battery.epsilon = cfg.epsilon;
  cfg.backbone.input = {cfg.data.channels, cfg.data.height, cfg.data.width};
  cfg.backbone.classes = cfg.data.classes;
  cfg.frontend.channels = cfg.data.channels;
  cfg.frontend.height = cfg.data.height;
  cfg.frontend.width = cfg.data.width;

  const Dataset train = dataset_synth(cfg.data);
  SynthSpec ts = cfg.data;
  ts.n = cfg.test_size;
  ts.seed = derive_seed(s, kStream, 1);
  ts.split = Split::kTest;
  const Dataset test = dataset_synth(ts);
  const Dataset sample =
      sample_rows(test, cfg.sample_size, derive_seed(s, kStream, 7));

  MaskingReplicationReport r;
  r.config = to_json(cfg);

  Network backbone(backbone_new(cfg.backbone));
  train_standard(backbone, train, cfg.backbone_train);
  backbone.graph().set_frozen(true);
  r.backbone_clean = confidence_interval(count_correct(backbone, test), test.size());

  CompositeModel composite(frontend_new(cfg.frontend), backbone);
  r.with_skip = curve_of(train_frontend(composite, train, cfg.frontend_train));
  r.composite_clean =
      confidence_interval(count_correct(composite, test), test.size());

  ModelAccess access(composite, ThreatLevel::kFullTrainTime);
  r.masking = masking_report(access, sample, cfg.battery);

  if (cfg.ablation) {
    FrontEndSpec plain = cfg.frontend;
    plain.skip = false;
    CompositeModel ablated(frontend_new(plain), backbone);
    r.without_skip = curve_of(train_frontend(ablated, train, cfg.frontend_train));
  }
  return r;
}

}  // namespace advmask
