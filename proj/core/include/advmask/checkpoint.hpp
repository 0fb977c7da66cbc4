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
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "advmask/classifier.hpp"
#include "advmask/models.hpp"

namespace advmask {

/// Architecture of a checkpointed model: a backbone, optionally behind a
/// front-end.
struct ModelSpec {
  BackboneSpec backbone;
  std::optional<FrontEndSpec> frontend;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// How the weights came to be.
struct Provenance {
  std::string regime;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);

struct LoadedModel {
  ModelSpec spec;
  Provenance provenance;
  std::shared_ptr<Network> network;          ///< set without a front-end
  std::shared_ptr<CompositeModel> composite;  ///< set with a front-end
  std::string hash;  ///< git-style hash of the manifest

  std::shared_ptr<const Classifier> classifier() const;
};

/// Writes `path` (JSON manifest) and the sibling `path` + ".bin" (f32 LE
/// parameters and batch-norm statistics in manifest order). Returns the
/// manifest hash.
std::string checkpoint_save(const Network& model, const ModelSpec& spec,
                            const Provenance& provenance,
                            const std::filesystem::path& path);
std::string checkpoint_save(const CompositeModel& model, const ModelSpec& spec,
                            const Provenance& provenance,
                            const std::filesystem::path& path);

/// Rebuilds the model from its manifest. Throws FormatError on a corrupt
/// manifest, VersionError on an unknown version, TruncationError on a short
/// blob and FormatError on a blob hash mismatch.
LoadedModel checkpoint_load(const std::filesystem::path& path);

/// Overwrites the weights of an existing model. Throws ShapeError when the
/// checkpoint's tensors do not match the model's.
void checkpoint_load_into(Network& model, const std::filesystem::path& path);
void checkpoint_load_into(CompositeModel& model,
                          const std::filesystem::path& path);

}  // namespace advmask
