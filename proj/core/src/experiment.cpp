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

#include "advmask/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "advmask/checkpoint.hpp"
#include "advmask/errors.hpp"
#include "advmask/io.hpp"
#include "advmask/rng.hpp"

namespace advmask {

namespace {

constexpr std::uint64_t kDataStream = 0xda7a;
constexpr std::uint64_t kInitStream = 0x1217;
constexpr std::uint64_t kTrainStream = 0x7a17;
constexpr std::uint64_t kFrontInitStream = 0xf217;
constexpr std::uint64_t kFrontTrainStream = 0xf7a1;
constexpr std::uint64_t kEnsembleStream = 0xe25e;
constexpr std::uint64_t kAttackStream = 0xa77a;
constexpr std::uint64_t kSampleStream = 0x5a3e;
constexpr std::uint64_t kAccessStream = 0xacce;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

DatasetSource parse_source(const nlohmann::json& j, const std::filesystem::path& base,
                           std::uint64_t root, std::uint64_t index,
                           Split split, const std::string& where) {
  check_keys(j, {"synth", "path", "classes"}, where);
  DatasetSource s;
  if (j.contains("synth") == j.contains("path")) {
    throw ConfigError(where + " needs exactly one of 'synth' and 'path'");
  }
  if (j.contains("synth")) {
    s.synth = synth_spec_from_json(j.at("synth"));
    if (!j.at("synth").contains("seed")) {
      s.synth->seed = derive_seed(root, kDataStream, index);
    }
    s.synth->split = split;
  } else {
    s.path = resolve(base, j.at("path").get<std::string>());
    if (!std::filesystem::exists(s.path)) {
      throw ConfigError(where + ": dataset file " + s.path.string() +
                        " does not exist");
    }
    s.classes = j.value("classes", std::size_t{0});
  }
  return s;
}

nlohmann::json source_json(const DatasetSource& s) {
  if (s.synth) return {{"synth", to_json(*s.synth)}};
  return {{"path", s.path.string()}, {"classes", s.classes}};
}

TrainConfig parse_train(const nlohmann::json& j, std::uint64_t seed) {
  TrainConfig c = train_config_from_json(j);
  if (!j.contains("seed")) c.seed = seed;
  return c;
}

AttackSpec parse_attack(const nlohmann::json& j, std::uint64_t seed) {
  AttackSpec a = attack_spec_from_json(j);
  if (!j.contains("seed")) a.seed = seed;
  if (a.inner && !(j.contains("inner") && j.at("inner").contains("seed"))) {
    a.inner->seed = seed;
  }
  return a;
}

const BuiltModel& find_built(const std::vector<BuiltModel>& built,
                             const std::string& id, const std::string& who) {
  for (const BuiltModel& b : built) {
    if (b.id == id) return b;
  }
  throw ConfigError(who + " refers to unknown model '" + id + "'");
}

nlohmann::json history_summary(const TrainHistory& h) {
  nlohmann::json j = {{"regime", to_string(h.regime)},
                      {"lr", h.lr},
                      {"steps", h.steps},
                      {"initial_loss", h.initial_loss}};
  if (!h.epochs.empty()) {
    j["final_loss"] = h.epochs.back().loss;
    j["train_clean_acc"] = h.epochs.back().clean_acc;
  }
  return j;
}

Provenance provenance_of(const TrainHistory& h, const TrainConfig& cfg) {
  Provenance p;
  p.regime = to_string(h.regime);
  p.seed = cfg.seed;
  p.epochs = h.epochs.size();
  p.steps = h.steps;
  p.extra = {{"train", to_json(cfg)}, {"history", history_summary(h)}};
  return p;
}

/// Rethrows the active exception with the stage prefixed, keeping the
/// category the CLI maps to exit codes.
[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  try {
    throw;
  } catch (const NumericalError& e) {
    throw NumericalError("stage '" + stage + "': " + e.what(), e.node());
  } catch (const ConfigError& e) {
    throw ConfigError("stage '" + stage + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error("stage '" + stage + "': " + e.what());
  }
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
          c == '.')) {
      c = '_';
    }
  }
  return s;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                          std::uint64_t index) {
  return Rng(root, stream).fork(index).next_u64();
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base) {
  try {
    check_keys(j, {"seed", "epsilon", "sample_size", "train", "test", "models",
                   "attacks", "output_dir", "dump_adversarial",
                   "save_checkpoints"},
               "experiment config");
    if (!j.contains("seed")) throw ConfigError("experiment config needs a seed");
    ExperimentConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epsilon = j.value("epsilon", c.epsilon);
    c.sample_size = j.value("sample_size", c.sample_size);
    if (c.sample_size == 0) throw ConfigError("sample_size must be positive");
    if (!(c.epsilon >= 0.0f)) throw ConfigError("epsilon must be >= 0");
    c.train = parse_source(j.at("train"), base, c.seed, 0, Split::kTrain, "train");
    c.test = parse_source(j.at("test"), base, c.seed, 1, Split::kTest, "test");
    c.output_dir = resolve(base, j.value("output_dir", std::string("out")));
    c.dump_adversarial = j.value("dump_adversarial", c.dump_adversarial);
    c.save_checkpoints = j.value("save_checkpoints", c.save_checkpoints);

    std::set<std::string> ids;
    std::size_t k = 0;
    for (const nlohmann::json& m : j.at("models")) {
      const std::string where = "model " + std::to_string(k);
      check_keys(m, {"id", "family", "backbone", "regime", "train",
                     "backbone_from", "frontend", "frontend_train", "ensemble",
                     "ensemble_seed", "checkpoint"},
                 where);
      ModelEntry e;
      e.id = m.at("id").get<std::string>();
      if (e.id.empty() || !ids.insert(e.id).second) {
        throw ConfigError(where + ": empty or duplicate id '" + e.id + "'");
      }
      const int kinds = int(m.contains("backbone")) +
                        int(m.contains("backbone_from")) +
                        int(m.contains("ensemble")) +
                        int(m.contains("checkpoint"));
      if (kinds != 1) {
        throw ConfigError(where + " ('" + e.id + "') needs exactly one of "
                          "backbone, backbone_from, ensemble, checkpoint");
      }
      e.family = m.value("family", "");
      if (m.contains("backbone")) {
        e.backbone = backbone_spec_from_json(m.at("backbone"));
        if (!m.at("backbone").contains("seed")) {
          e.backbone->seed = derive_seed(c.seed, kInitStream, k);
        }
        e.regime = regime_from_string(m.value("regime", "standard"));
        if (e.regime == Regime::kFrontEnd) {
          throw ConfigError(where + ": the frontend regime needs backbone_from");
        }
        e.train = parse_train(m.value("train", nlohmann::json::object()),
                              derive_seed(c.seed, kTrainStream, k));
        if (e.family.empty()) e.family = to_string(e.backbone->kind);
      }
      if (m.contains("backbone_from")) {
        e.backbone_from = m.at("backbone_from").get<std::string>();
        if (!ids.count(e.backbone_from) || e.backbone_from == e.id) {
          throw ConfigError(where + ": backbone_from must name an earlier model");
        }
        e.regime = Regime::kFrontEnd;
        e.frontend = frontend_spec_from_json(
            m.value("frontend", nlohmann::json::object()));
        if (!m.contains("frontend") || !m.at("frontend").contains("seed")) {
          e.frontend->seed = derive_seed(c.seed, kFrontInitStream, k);
        }
        nlohmann::json fj = m.value("frontend_train", nlohmann::json::object());
        if (!fj.contains("epochs")) fj["epochs"] = 1;
        e.frontend_train = parse_train(fj, derive_seed(c.seed, kFrontTrainStream, k));
      }
      if (m.contains("ensemble")) {
        e.ensemble = m.at("ensemble").get<std::vector<std::string>>();
        if (e.ensemble.empty()) throw ConfigError(where + ": empty ensemble");
        for (const std::string& id : e.ensemble) {
          if (!ids.count(id) || id == e.id) {
            throw ConfigError(where + ": ensemble member '" + id +
                              "' must name an earlier model");
          }
        }
        e.ensemble_seed = m.contains("ensemble_seed")
                              ? m.at("ensemble_seed").get<std::uint64_t>()
                              : derive_seed(c.seed, kEnsembleStream, k);
        if (e.family.empty()) e.family = "ensemble";
      }
      if (m.contains("checkpoint")) {
        e.checkpoint = resolve(base, m.at("checkpoint").get<std::string>());
        if (!std::filesystem::exists(e.checkpoint)) {
          throw ConfigError(where + ": checkpoint " + e.checkpoint.string() +
                            " does not exist");
        }
      }
      c.models.push_back(std::move(e));
      ++k;
    }
    if (c.models.empty()) throw ConfigError("experiment config has no models");

    std::size_t a = 0;
    for (const nlohmann::json& aj : j.at("attacks")) {
      AttackSpec spec = parse_attack(aj, derive_seed(c.seed, kAttackStream, a));
      if (!aj.contains("epsilon")) {
        spec.epsilon = c.epsilon;
        if (spec.inner && !aj.at("inner").contains("epsilon")) {
          spec.inner->epsilon = c.epsilon;
        }
      }
      if (spec.kind == AttackKind::kTransfer && !ids.count(spec.source)) {
        throw ConfigError("transfer attack source '" + spec.source +
                          "' is not a model of the experiment");
      }
      c.attacks.push_back(std::move(spec));
      ++a;
    }
    if (c.attacks.empty()) throw ConfigError("experiment config has no attacks");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json models = nlohmann::json::array();
  for (const ModelEntry& e : c.models) {
    nlohmann::json m = {{"id", e.id}, {"family", e.family}};
    if (e.backbone) {
      m["backbone"] = to_json(*e.backbone);
      m["regime"] = to_string(e.regime);
      m["train"] = to_json(e.train);
    }
    if (!e.backbone_from.empty()) {
      m["backbone_from"] = e.backbone_from;
      m["frontend"] = to_json(*e.frontend);
      m["frontend_train"] = to_json(e.frontend_train);
    }
    if (!e.ensemble.empty()) {
      m["ensemble"] = e.ensemble;
      m["ensemble_seed"] = e.ensemble_seed;
    }
    if (!e.checkpoint.empty()) m["checkpoint"] = e.checkpoint.string();
    models.push_back(m);
  }
  nlohmann::json attacks = nlohmann::json::array();
  for (const AttackSpec& a : c.attacks) attacks.push_back(to_json(a));
  return {{"seed", c.seed},
          {"epsilon", c.epsilon},
          {"sample_size", c.sample_size},
          {"train", source_json(c.train)},
          {"test", source_json(c.test)},
          {"models", models},
          {"attacks", attacks},
          {"output_dir", c.output_dir.string()},
          {"dump_adversarial", c.dump_adversarial},
          {"save_checkpoints", c.save_checkpoints},
          {"ci_method", "normal approximation, z = 2.576"}};
}

std::shared_ptr<const Classifier> BuiltModel::classifier() const {
  if (composite) return composite;
  if (ensemble) return ensemble;
  return network;
}

BuiltModel::Handle BuiltModel::access(ThreatLevel level,
                                      std::uint64_t stream) const {
  Handle h;
  if (composite) {
    h.model = composite;
    h.access = std::make_unique<ModelAccess>(*composite, level);
  } else if (ensemble) {
    auto fork = std::make_shared<RandomizedEnsemble>(ensemble->fork(stream));
    h.model = fork;
    h.access = std::make_unique<ModelAccess>(*fork, level);
  } else {
    h.model = network;
    h.access = std::make_unique<ModelAccess>(*network, level);
  }
  return h;
}

std::vector<BuiltModel> build_models(const std::vector<ModelEntry>& entries,
                                     const Dataset& train,
                                     const std::filesystem::path& checkpoint_dir) {
  std::vector<BuiltModel> built;
  std::map<std::string, BackboneSpec> backbone_specs;
  auto save_path = [&](const std::string& id) {
    return checkpoint_dir / (file_safe(id) + ".json");
  };
  for (const ModelEntry& e : entries) {
    BuiltModel b;
    b.id = e.id;
    b.family = e.family;
    if (!e.checkpoint.empty()) {
      LoadedModel lm = checkpoint_load(e.checkpoint);
      b.network = lm.network;
      b.composite = lm.composite;
      b.checkpoint_hash = lm.hash;
      b.training = to_json(lm.provenance);
      if (b.family.empty()) b.family = to_string(lm.spec.backbone.kind);
      backbone_specs[e.id] = lm.spec.backbone;
    } else if (e.backbone) {
      b.network = std::make_shared<Network>(backbone_new(*e.backbone));
      const TrainHistory h = e.regime == Regime::kAdversarial
                                 ? train_adversarial(*b.network, train, e.train)
                                 : train_standard(*b.network, train, e.train);
      b.training = history_summary(h);
      backbone_specs[e.id] = *e.backbone;
      if (!checkpoint_dir.empty()) {
        b.checkpoint_hash = checkpoint_save(*b.network, ModelSpec{*e.backbone, {}},
                                            provenance_of(h, e.train),
                                            save_path(e.id));
      }
    } else if (!e.backbone_from.empty()) {
      const BuiltModel& src = find_built(built, e.backbone_from, e.id);
      if (!src.network) {
        throw ConfigError("model '" + e.id + "': backbone_from '" +
                          e.backbone_from + "' is not a plain network");
      }
      Network back = *src.network;
      back.graph().set_frozen(true);
      b.composite = std::make_shared<CompositeModel>(frontend_new(*e.frontend),
                                                     std::move(back));
      const TrainHistory h = train_frontend(*b.composite, train, e.frontend_train);
      b.training = history_summary(h);
      const BackboneSpec bs = backbone_specs.at(e.backbone_from);
      backbone_specs[e.id] = bs;
      if (b.family.empty()) b.family = to_string(bs.kind);
      if (!checkpoint_dir.empty()) {
        Provenance p = provenance_of(h, e.frontend_train);
        p.extra["backbone_from"] = e.backbone_from;
        if (!src.checkpoint_hash.empty()) p.extra["backbone_hash"] = src.checkpoint_hash;
        b.checkpoint_hash = checkpoint_save(*b.composite, ModelSpec{bs, e.frontend},
                                            p, save_path(e.id));
      }
    } else {
      std::vector<std::shared_ptr<const Classifier>> members;
      for (const std::string& id : e.ensemble) {
        members.push_back(find_built(built, id, e.id).classifier());
      }
      b.ensemble = std::make_shared<RandomizedEnsemble>(
          RandomizedEnsemble::uniform(std::move(members), e.ensemble_seed));
      b.training = {{"members", e.ensemble}, {"seed", e.ensemble_seed}};
    }
    built.push_back(std::move(b));
  }
  return built;
}

Dataset load_source(const DatasetSource& src, Split split) {
  if (src.synth) {
    SynthSpec s = *src.synth;
    s.split = split;
    return dataset_synth(s);
  }
  return dataset_load(src.path, src.classes, split);
}

Dataset sample_rows(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n >= data.size()) return data;
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  Rng rng(seed, kSampleStream);
  rng.shuffle(std::span<std::size_t>(rows));
  rows.resize(n);
  std::sort(rows.begin(), rows.end());
  return data.subset(rows);
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ReportRow& row : r.rows) {
    nlohmann::json j = to_json(row.estimate);
    j["model"] = row.model;
    j["attack"] = row.attack;
    j["kind"] = to_string(row.kind);
    j["queries"] = row.queries;
    if (!row.dump.empty()) {
      j["dump"] = row.dump;
      j["dump_hash"] = row.dump_hash;
    }
    rows.push_back(j);
  }
  return {{"config", r.config},
          {"checkpoints", r.checkpoints},
          {"rows", rows},
          {"error", r.error}};
}

std::string to_csv(const ExperimentReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "model,attack,kind,accuracy,correct,n,ci99,queries\n";
  for (const ReportRow& row : r.rows) {
    os << row.model << ',' << row.attack << ',' << to_string(row.kind) << ','
       << row.estimate.accuracy << ',' << row.estimate.correct << ','
       << row.estimate.n << ',';
    if (row.estimate.ci99) os << *row.estimate.ci99;
    os << ',' << row.queries << '\n';
  }
  return os.str();
}

AccuracyEstimate recount(const Classifier& model, const Dataset& dump) {
  return confidence_interval(count_correct(model, dump), dump.size());
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  ExperimentReport report;
  report.config = to_json(cfg);
  const std::filesystem::path out = cfg.output_dir;
  auto flush = [&] {
    write_text(out / "report.json", to_json(report).dump(2) + "\n");
    write_text(out / "report.csv", to_csv(report));
  };
  std::string stage = "load data";
  try {
    const Dataset train = load_source(cfg.train, Split::kTrain);
    const Dataset test = sample_rows(load_source(cfg.test, Split::kTest),
                                     cfg.sample_size,
                                     derive_seed(cfg.seed, kSampleStream));
    stage = "build models";
    const std::vector<BuiltModel> models = build_models(
        cfg.models, train,
        cfg.save_checkpoints ? out / "checkpoints" : std::filesystem::path{});
    for (const BuiltModel& m : models) {
      if (!m.checkpoint_hash.empty()) report.checkpoints[m.id] = m.checkpoint_hash;
    }
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      const BuiltModel& m = models[mi];
      for (std::size_t ai = 0; ai < cfg.attacks.size(); ++ai) {
        const AttackSpec& spec = cfg.attacks[ai];
        stage = "attack " + m.id + "/" + spec.label();
        auto target = m.access(required_level(spec.kind),
                               derive_seed(cfg.seed, kAccessStream,
                                           mi * cfg.attacks.size() + ai));
        std::vector<AttackOutcome> outcomes;
        if (spec.kind == AttackKind::kTransfer) {
          const BuiltModel& src = find_built(models, spec.source, "transfer");
          auto source = src.access(ThreatLevel::kGradient,
                                   derive_seed(cfg.seed, kAccessStream, ~mi));
          outcomes = run_attack(spec, *target.access, test.images, test.labels,
                                source.access.get());
        } else {
          outcomes = run_attack(spec, *target.access, test.images, test.labels);
        }
        ReportRow row;
        row.model = m.id;
        row.attack = spec.label();
        row.kind = spec.kind;
        row.estimate = robust_accuracy(outcomes);
        row.queries = target.access->forward_queries() +
                      target.access->gradient_queries();
        if (cfg.dump_adversarial) {
          Dataset dump;
          dump.images = adversarial_batch(outcomes);
          dump.labels = test.labels;
          dump.classes = test.classes;
          dump.split = Split::kTest;
          row.dump = "adv/" + file_safe(m.id) + "__" + std::to_string(ai) + "-" +
                     file_safe(spec.label()) + ".advb";
          const std::vector<unsigned char> bytes = dataset_encode(dump);
          write_bytes(out / row.dump, bytes);
          row.dump_hash = git_blob_hash(bytes);
        }
        report.rows.push_back(std::move(row));
      }
    }
    stage = "write report";
    flush();
  } catch (...) {
    try {
      rethrow_in_stage(stage);
    } catch (const std::exception& e) {
      report.error = {{"stage", stage}, {"message", e.what()}};
      try {
        flush();
      } catch (...) {
      }
      throw;
    }
  }
  return report;
}

}  // namespace advmask
