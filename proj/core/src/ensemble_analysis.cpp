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

#include "advmask/ensemble_analysis.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "advmask/errors.hpp"
#include "advmask/models.hpp"
#include "advmask/threat.hpp"
#include "advmask/training.hpp"

namespace advmask {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_entry(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::size_t count_correct_on(const Classifier& model, const Tensor& adv,
                             std::span<const int> labels) {
  const std::vector<int> pred = model.predict(adv);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    correct += pred[i] == labels[i] ? 1 : 0;
  }
  return correct;
}

}  // namespace

void TransferMatrix::validate() const {
  if (acc.size() != sources.size()) {
    throw ShapeError("transfer matrix has " + std::to_string(acc.size()) +
                     " rows for " + std::to_string(sources.size()) +
                     " sources");
  }
  for (std::size_t k = 0; k < acc.size(); ++k) {
    if (acc[k].size() != targets.size()) {
      throw ShapeError("transfer matrix row " + std::to_string(k) + " has " +
                       std::to_string(acc[k].size()) + " entries for " +
                       std::to_string(targets.size()) + " targets");
    }
    for (double v : acc[k]) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw PreconditionError("transfer accuracy " + std::to_string(v) +
                                " outside [0, 1]");
      }
    }
  }
  if (!bound.empty() && bound.size() != acc.size()) {
    throw ShapeError("bound flags do not match the transfer matrix");
  }
}

bool TransferMatrix::is_bound(std::size_t k, std::size_t i) const {
  return !bound.empty() && bound.at(k).at(i);
}

std::size_t TransferMatrix::source_index(const std::string& id) const {
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (sources[k] == id) return k;
  }
  throw PreconditionError("unknown source model '" + id + "'");
}

EnsemblePolicy EnsemblePolicy::uniform(std::size_t n) {
  if (n == 0) throw PreconditionError("uniform policy over zero targets");
  return {std::vector<double>(n, 1.0 / double(n))};
}

void EnsemblePolicy::validate(std::size_t n) const {
  if (p.size() != n) {
    throw ShapeError("policy has " + std::to_string(p.size()) +
                     " probabilities for " + std::to_string(n) + " targets");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw PreconditionError("negative policy probability");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw PreconditionError("policy probabilities sum to " +
                            std::to_string(total));
  }
}

double expected_accuracy(const TransferMatrix& tm, const EnsemblePolicy& policy,
                         std::size_t source) {
  tm.validate();
  policy.validate(tm.targets.size());
  if (source >= tm.sources.size()) {
    throw PreconditionError("source index " + std::to_string(source) +
                            " outside " + std::to_string(tm.sources.size()) +
                            " sources");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < tm.targets.size(); ++i) {
    total += tm.acc[source][i] * policy.p[i];
  }
  return total;
}

bool expected_accuracy_is_bound(const TransferMatrix& tm,
                                const EnsemblePolicy& policy,
                                std::size_t source) {
  for (std::size_t i = 0; i < tm.targets.size(); ++i) {
    if (policy.p.at(i) > 0.0 && tm.is_bound(source, i)) return true;
  }
  return false;
}

BestResponse attacker_best_response(const TransferMatrix& tm,
                                    const EnsemblePolicy& policy) {
  if (tm.sources.empty()) throw PreconditionError("no source models");
  BestResponse best;
  for (std::size_t k = 0; k < tm.sources.size(); ++k) {
    const double v = expected_accuracy(tm, policy, k);
    best.per_source.push_back(v);
    if (k == 0 || v < best.value) {
      best.source = k;
      best.value = v;
    }
  }
  best.lower_bound = expected_accuracy_is_bound(tm, policy, best.source);
  return best;
}

std::string to_csv(const TransferMatrix& tm) {
  tm.validate();
  std::ostringstream os;
  os << "source";
  for (const std::string& t : tm.targets) os << ',' << t;
  os << '\n';
  for (std::size_t k = 0; k < tm.sources.size(); ++k) {
    os << tm.sources[k];
    for (std::size_t i = 0; i < tm.targets.size(); ++i) {
      os << ',' << (tm.is_bound(k, i) ? ">=" : "") << format_entry(tm.acc[k][i]);
    }
    os << '\n';
  }
  return os.str();
}

TransferMatrix transfer_matrix_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty transfer matrix CSV");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2) {
    throw FormatError("transfer matrix CSV header needs at least one target");
  }
  TransferMatrix tm;
  tm.targets.assign(header.begin() + 1, header.end());
  bool any_bound = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("CSV row '" + cells.front() + "' has " +
                        std::to_string(cells.size() - 1) + " entries, expected " +
                        std::to_string(tm.targets.size()));
    }
    tm.sources.push_back(cells[0]);
    std::vector<double> row;
    std::vector<bool> flags;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      std::string cell = cells[i];
      const bool b = cell.rfind(">=", 0) == 0;
      if (b) cell = cell.substr(2);
      any_bound = any_bound || b;
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError("bad transfer accuracy '" + cells[i] + "'");
      }
      flags.push_back(b);
    }
    tm.acc.push_back(std::move(row));
    tm.bound.push_back(std::move(flags));
  }
  if (!any_bound) tm.bound.clear();
  tm.validate();
  return tm;
}

nlohmann::json to_json(const TransferMatrix& tm) {
  tm.validate();
  nlohmann::json j = {{"sources", tm.sources},
                      {"targets", tm.targets},
                      {"acc", tm.acc},
                      {"attack", tm.attack}};
  if (!tm.bound.empty()) j["bound"] = tm.bound;
  if (!tm.cells.empty()) j["cells"] = tm.cells;
  return j;
}

TransferMatrix transfer_matrix_from_json(const nlohmann::json& j) {
  try {
    TransferMatrix tm;
    tm.sources = j.at("sources").get<std::vector<std::string>>();
    tm.targets = j.at("targets").get<std::vector<std::string>>();
    tm.acc = j.at("acc").get<std::vector<std::vector<double>>>();
    if (j.contains("bound")) {
      tm.bound = j["bound"].get<std::vector<std::vector<bool>>>();
    }
    if (j.contains("cells")) {
      tm.cells = j["cells"].get<std::vector<std::vector<std::string>>>();
    }
    tm.attack = j.value("attack", nlohmann::json());
    tm.validate();
    return tm;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed transfer matrix: ") + e.what());
  }
}

nlohmann::json to_json(const EnsemblePolicy& policy) {
  return {{"p", policy.p}};
}

EnsemblePolicy policy_from_json(const nlohmann::json& j) {
  try {
    if (j.is_array()) return {j.get<std::vector<double>>()};
    return {j.at("p").get<std::vector<double>>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed policy: ") + e.what());
  }
}

TransferStudy build_transfer_matrix(const std::vector<NamedModel>& models,
                                    const Dataset& data,
                                    const AttackSpec& inner,
                                    const TransferOptions& options) {
  if (data.size() == 0) throw PreconditionError("transfer study on an empty dataset");
  if (models.empty()) throw PreconditionError("transfer study needs a model");
  for (const NamedModel& m : models) {
    if (m.model->input_shape() != models[0].model->input_shape() ||
        m.model->num_classes() != models[0].model->num_classes()) {
      throw ShapeError("model " + m.id + " does not share the input/label "
                       "space of " + models[0].id);
    }
  }
  const std::size_t n = models.size();
  TransferStudy study;
  TransferMatrix& tm = study.matrix;
  tm.attack = to_json(inner);
  for (const NamedModel& m : models) tm.targets.push_back(m.id);

  auto accuracy_row = [&](const Tensor& adv) {
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = double(count_correct_on(*models[i].model, adv, data.labels)) /
               double(data.size());
    }
    return row;
  };
  auto craft = [&](const Classifier& source) {
    ModelAccess access(source, ThreatLevel::kGradient);
    return adversarial_batch(run_attack(inner, access, data.images, data.labels));
  };

  for (const NamedModel& m : models) {
    Tensor adv = craft(*m.model);
    tm.sources.push_back(m.id);
    tm.acc.push_back(accuracy_row(adv));
    study.adversarial.push_back(std::move(adv));
  }

  // Groups for ensemble sources: everything, then each family of size >= 2.
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    groups.emplace_back("all", all);
    std::map<std::string, std::vector<std::size_t>> families;
    for (std::size_t i = 0; i < n; ++i) {
      if (!models[i].family.empty()) families[models[i].family].push_back(i);
    }
    if (families.size() > 1) {
      for (auto& [name, members] : families) {
        if (members.size() >= 2) groups.emplace_back(name, members);
      }
    }
  }
  auto ensemble_of = [&](const std::vector<std::size_t>& members,
                         std::size_t exclude) {
    std::vector<std::shared_ptr<const Classifier>> parts;
    for (std::size_t i : members) {
      if (i != exclude) parts.push_back(models[i].model);
    }
    return parts;
  };

  if (options.inclusive_ensembles && n >= 2) {
    for (const auto& [name, members] : groups) {
      const LossSumEnsemble source(ensemble_of(members, n));
      tm.sources.push_back("ensemble:" + name);
      tm.acc.push_back(accuracy_row(craft(source)));
    }
  }
  if (options.leave_one_out && n >= 2) {
    for (const auto& [name, members] : groups) {
      std::vector<double> row(n);
      std::vector<Tensor> cache(n);
      bool usable = true;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::shared_ptr<const Classifier>> parts =
            ensemble_of(members, i);
        if (parts.empty()) {
          usable = false;
          break;
        }
        const LossSumEnsemble source(std::move(parts));
        const Tensor adv = craft(source);
        row[i] = double(count_correct_on(*models[i].model, adv, data.labels)) /
                 double(data.size());
      }
      if (!usable) continue;
      tm.sources.push_back("loo:" + name);
      tm.acc.push_back(std::move(row));
    }
  }
  tm.validate();
  return study;
}

// ---------------------------------------------------------------------------

bool TableCheck::within_tolerance() const {
  return std::fabs(value - reported) * 100.0 <= 0.1 + 1e-9;
}

TransferMatrix published_transfer_fixture() {
  constexpr std::size_t kPerFamily = 5;
  TransferMatrix tm;
  const char* families[2] = {"resnet", "vit"};
  for (const char* f : families) {
    for (std::size_t i = 1; i <= kPerFamily; ++i) {
      tm.targets.push_back(std::string(f) + std::to_string(i));
    }
  }
  // Lowest transfer accuracy observed between different models of the
  // given source and target families.
  const double cross[2][2] = {{0.442, 0.736}, {0.654, 0.559}};
  const std::size_t n = tm.targets.size();
  for (std::size_t k = 0; k < n; ++k) {
    tm.sources.push_back(tm.targets[k]);
    std::vector<double> row(n);
    std::vector<bool> flags(n);
    std::vector<std::string> cells(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t fk = k / kPerFamily;
      const std::size_t fi = i / kPerFamily;
      if (k == i) {
        row[i] = 0.0;
        cells[i] = "self-attack (approximately zero)";
      } else {
        row[i] = cross[fk][fi];
        flags[i] = true;
        cells[i] = std::string("best ") + families[fk] + " source, " +
                   families[fi] + " target";
      }
    }
    tm.acc.push_back(std::move(row));
    tm.bound.push_back(std::move(flags));
    tm.cells.push_back(std::move(cells));
  }
  // All-inclusive ensemble of every model as the source.
  tm.sources.push_back("ensemble:all");
  std::vector<double> row(n);
  std::vector<std::string> cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool vit = i >= kPerFamily;
    row[i] = vit ? 0.261 : 0.181;
    cells[i] = std::string("all-inclusive all-model ensemble source, ") +
               (vit ? "vit" : "resnet") + " target";
  }
  tm.acc.push_back(std::move(row));
  tm.bound.emplace_back(n, false);
  tm.cells.push_back(std::move(cells));
  tm.attack = {{"kind", "pgd"}, {"steps", 50}};
  tm.validate();
  return tm;
}

std::vector<TableCheck> replicate_published_tables() {
  const TransferMatrix tm = published_transfer_fixture();
  const EnsemblePolicy uniform = EnsemblePolicy::uniform(tm.targets.size());
  auto check = [&](const std::string& name, const std::string& source,
                   const std::string& expression, double reported) {
    const std::size_t k = tm.source_index(source);
    TableCheck c;
    c.name = name;
    c.expression = expression;
    c.value = expected_accuracy(tm, uniform, k);
    c.reported = reported;
    c.lower_bound = expected_accuracy_is_bound(tm, uniform, k);
    return c;
  };
  return {
      check("single resnet source", "resnet1",
            "0 * 0.1 + 0.442 * 0.4 + 0.736 * 0.5", 0.546),
      check("single vit source", "vit1",
            "0 * 0.1 + 0.559 * 0.4 + 0.654 * 0.5", 0.55),
      check("all-model ensemble source", "ensemble:all",
            "0.181 * 0.5 + 0.261 * 0.5", 0.22),
  };
}

nlohmann::json to_json(const std::vector<TableCheck>& checks) {
  nlohmann::json rows = nlohmann::json::array();
  for (const TableCheck& c : checks) {
    rows.push_back({{"name", c.name},
                    {"expression", c.expression},
                    {"value", c.value},
                    {"value_percent", c.value * 100.0},
                    {"reported_percent", c.reported * 100.0},
                    {"difference_points", (c.value - c.reported) * 100.0},
                    {"lower_bound", c.lower_bound},
                    {"within_0_1_points", c.within_tolerance()}});
  }
  return rows;
}

}  // namespace advmask
