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

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advmask/attacks.hpp"
#include "advmask/classifier.hpp"
#include "advmask/dataset.hpp"

namespace advmask {

/// acc[k][i]: accuracy of target i on examples crafted against source k.
struct TransferMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  std::vector<std::vector<double>> acc;
  /// Entries known only as lower bounds; empty means none.
  std::vector<std::vector<bool>> bound;
  /// Free-form description of each entry's origin; empty means none.
  std::vector<std::vector<std::string>> cells;
  nlohmann::json attack;  ///< spec used to build the matrix

  /// Throws unless dimensions agree and entries lie in [0, 1].
  void validate() const;
  bool is_bound(std::size_t k, std::size_t i) const;
  std::size_t source_index(const std::string& id) const;
};

/// Selection probabilities over a matrix's targets.
struct EnsemblePolicy {
  std::vector<double> p;

  static EnsemblePolicy uniform(std::size_t n);
  /// Throws unless p >= 0, sum within 1e-9 of 1 and size n.
  void validate(std::size_t n) const;
};

/// sum_i acc[k][i] * p_i.
double expected_accuracy(const TransferMatrix& tm, const EnsemblePolicy& policy,
                         std::size_t source);
/// True when a term with positive weight is a lower bound.
bool expected_accuracy_is_bound(const TransferMatrix& tm,
                                const EnsemblePolicy& policy,
                                std::size_t source);

struct BestResponse {
  std::size_t source = 0;  ///< lowest index among minimizers
  double value = 0.0;
  bool lower_bound = false;
  std::vector<double> per_source;
};

BestResponse attacker_best_response(const TransferMatrix& tm,
                                    const EnsemblePolicy& policy);

std::string to_csv(const TransferMatrix& tm);
TransferMatrix transfer_matrix_from_csv(const std::string& text);
nlohmann::json to_json(const TransferMatrix& tm);
TransferMatrix transfer_matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EnsemblePolicy& policy);
EnsemblePolicy policy_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Building matrices from models.

struct NamedModel {
  std::string id;
  std::shared_ptr<const Classifier> model;
  std::string family;  ///< architecture group, e.g. "cnn" or "mlp"
};

struct TransferOptions {
  /// Loss-sum ensembles of every model (and of every family with two or
  /// more members) as extra sources.
  bool inclusive_ensembles = false;
  /// Same, but the entry for target i excludes model i from the source.
  bool leave_one_out = false;
};

struct TransferStudy {
  TransferMatrix matrix;
  /// Adversarial batch crafted against each single-model source, in source
  /// order (ensemble sources excluded).
  std::vector<Tensor> adversarial;
};

TransferStudy build_transfer_matrix(const std::vector<NamedModel>& models,
                                    const Dataset& data,
                                    const AttackSpec& inner,
                                    const TransferOptions& options = {});

// ---------------------------------------------------------------------------
// Published composition arithmetic.

struct TableCheck {
  std::string name;
  std::string expression;
  double value = 0.0;      ///< computed, as a fraction
  double reported = 0.0;   ///< published, as a fraction
  bool lower_bound = false;
  /// |value - reported| <= 0.1 percentage point.
  bool within_tolerance() const;
};

/// Ten-model fixture: five "resnet" and five "vit" targets with the
/// published single-source transfer accuracies, plus an all-model ensemble
/// source row.
TransferMatrix published_transfer_fixture();
std::vector<TableCheck> replicate_published_tables();
nlohmann::json to_json(const std::vector<TableCheck>& checks);

}  // namespace advmask
