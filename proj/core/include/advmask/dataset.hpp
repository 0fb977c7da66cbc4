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
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "advmask/tensor.hpp"

namespace advmask {

enum class Split { kTrain, kTest };

std::string to_string(Split split);

/// Labelled images in [0, 1], shape [N, C, H, W].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return labels.size(); }
  /// Throws unless N > 0, labels are in range and pixels lie in [0, 1].
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  /// First `n` examples (all if n >= size()).
  Dataset head(std::size_t n) const;
};

enum class SynthKind { kBlobs, kStripes, kDigitsLite };

std::string to_string(SynthKind kind);
SynthKind synth_kind_from_string(const std::string& s);

/// Every image is base + amplitude * T[label] + u with a binary class
/// template T and per-pixel noise u ~ U[-d, d], d = (amplitude - margin) / 2.
/// Templates of different classes differ in at least one pixel, so images of
/// different classes are at least `margin` apart in L-infinity and a
/// classifier robust at any radius below margin / 2 exists.
struct SynthSpec {
  SynthKind kind = SynthKind::kBlobs;
  std::size_t n = 2000;
  std::size_t classes = 4;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  float margin = 0.5f;
  /// 0 selects the largest amplitude that keeps pixels in [0, 1].
  float amplitude = 0.0f;
  std::uint64_t seed = 0;
  Split split = Split::kTrain;
};

/// Binary class templates, [classes, C, H, W].
Tensor synth_templates(const SynthSpec& spec);
Dataset dataset_synth(const SynthSpec& spec);

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

/// "ADVB" | u32 version | u32 N, C, H, W | f32 images | u8 labels, all LE.
void dataset_save(const Dataset& ds, const std::filesystem::path& path);
/// `classes` is inferred as max label + 1 unless given.
Dataset dataset_load(const std::filesystem::path& path,
                     std::size_t classes = 0, Split split = Split::kTest);

/// Bytes of the encoded dataset, as written by dataset_save.
std::vector<unsigned char> dataset_encode(const Dataset& ds);
Dataset dataset_decode(std::span<const unsigned char> bytes,
                       std::size_t classes = 0, Split split = Split::kTest);

}  // namespace advmask
