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
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advmask/attacks.hpp"
#include "advmask/dataset.hpp"
#include "advmask/diagnostics.hpp"
#include "advmask/models.hpp"
#include "advmask/training.hpp"

namespace advmask {

/// Seed for component `index` of `stream` under a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                          std::uint64_t index = 0);

/// A dataset is either synthesized or read from an ADVB file.
struct DatasetSource {
  std::optional<SynthSpec> synth;
  std::filesystem::path path;
  std::size_t classes = 0;  ///< for files; 0 infers
};

/// One model of an experiment. Exactly one of: a backbone trained under
/// `regime`; a front-end trained on top of `backbone_from`; a uniform
/// randomized ensemble of earlier models; a checkpoint.
struct ModelEntry {
  std::string id;
  std::string family;  ///< defaults to the backbone kind
  std::optional<BackboneSpec> backbone;
  Regime regime = Regime::kStandard;
  TrainConfig train;
  std::string backbone_from;
  std::optional<FrontEndSpec> frontend;
  TrainConfig frontend_train;
  std::vector<std::string> ensemble;
  std::uint64_t ensemble_seed = 0;  ///< member-selection stream
  std::filesystem::path checkpoint;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  float epsilon = 8.0f / 255.0f;
  std::size_t sample_size = 500;  ///< test examples evaluated
  DatasetSource train;
  DatasetSource test;
  std::vector<ModelEntry> models;
  std::vector<AttackSpec> attacks;
  std::filesystem::path output_dir;
  bool dump_adversarial = true;
  bool save_checkpoints = true;
};

/// Parses a config, filling every unset seed from the root seed and
/// resolving relative paths against `base_dir`. Throws ConfigError on
/// unknown keys, a missing seed or a missing referenced file.
ExperimentConfig experiment_config_from_json(
    const nlohmann::json& j, const std::filesystem::path& base_dir = {});
/// Fully resolved config, every default spelled out.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// A built model with the handles the harness needs.
struct BuiltModel {
  std::string id;
  std::string family;
  std::shared_ptr<Network> network;
  std::shared_ptr<CompositeModel> composite;
  std::shared_ptr<RandomizedEnsemble> ensemble;
  std::string checkpoint_hash;  ///< empty when not persisted
  nlohmann::json training = nlohmann::json::object();

  std::shared_ptr<const Classifier> classifier() const;
  /// Access at `level`; composites expose their decomposition and
  /// ensembles answer from a private stream forked by `stream`.
  struct Handle {
    std::shared_ptr<const Classifier> model;
    std::unique_ptr<ModelAccess> access;
  };
  Handle access(ThreatLevel level, std::uint64_t stream) const;
};

/// Trains or loads every model in order; checkpoints go to
/// `checkpoint_dir` when it is non-empty.
std::vector<BuiltModel> build_models(const std::vector<ModelEntry>& entries,
                                     const Dataset& train,
                                     const std::filesystem::path& checkpoint_dir);

Dataset load_source(const DatasetSource& src, Split split);
/// `n` rows drawn without replacement from a seeded permutation, in
/// ascending order (all rows when n >= size).
Dataset sample_rows(const Dataset& data, std::size_t n, std::uint64_t seed);

struct ReportRow {
  std::string model;
  std::string attack;  ///< attack label
  AttackKind kind = AttackKind::kNone;
  AccuracyEstimate estimate;
  std::size_t queries = 0;  ///< target queries, all examples
  std::string dump;         ///< adversarial dump file, relative
  std::string dump_hash;
};

struct ExperimentReport {
  nlohmann::json config;
  std::map<std::string, std::string> checkpoints;  ///< id -> manifest hash
  std::vector<ReportRow> rows;  ///< model-major, attack-minor
  nlohmann::json error;         ///< null unless a stage failed
};

nlohmann::json to_json(const ExperimentReport& r);
/// model,attack,kind,accuracy,correct,n,ci99,queries
std::string to_csv(const ExperimentReport& r);

/// Trains or loads the models, runs the battery on a seeded test sample
/// and writes report.json, report.csv, checkpoints/ and adv/ under the
/// output directory. On failure the rows finished so far are flushed and
/// the error is rethrown naming the stage.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Accuracy recomputed from an adversarial dump by a fresh forward pass.
AccuracyEstimate recount(const Classifier& model, const Dataset& dump);

}  // namespace advmask
