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

#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advmask/attacks.hpp"
#include "advmask/checkpoint.hpp"
#include "advmask/dataset.hpp"
#include "advmask/diagnostics.hpp"
#include "advmask/ensemble_analysis.hpp"
#include "advmask/errors.hpp"
#include "advmask/experiment.hpp"
#include "advmask/io.hpp"
#include "advmask/models.hpp"
#include "advmask/replication.hpp"
#include "advmask/training.hpp"

namespace advmask::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kInitStream = 0x1217;
constexpr std::uint64_t kTrainStream = 0x7a17;
constexpr std::uint64_t kAttackStream = 0xa77a;
constexpr std::uint64_t kEnsembleStream = 0xe25e;
constexpr std::uint64_t kSampleStream = 0x5a3e;

void emit(const fs::path& path, const json& report) {
  if (!path.empty()) write_text(path, report.dump(2) + "\n");
}

// A checkpointed model, or a uniform randomized ensemble of several.
struct Target {
  std::vector<LoadedModel> loaded;
  std::shared_ptr<RandomizedEnsemble> ensemble;

  const Classifier& classifier() const {
    if (ensemble) return *ensemble;
    return *loaded.front().classifier();
  }
  ModelAccess access(ThreatLevel level) const {
    if (ensemble) return ModelAccess(*ensemble, level);
    const LoadedModel& m = loaded.front();
    if (m.composite) return ModelAccess(*m.composite, level);
    return ModelAccess(*m.network, level);
  }
  json describe() const {
    json models = json::array();
    for (const LoadedModel& m : loaded) models.push_back(m.hash);
    return {{"checkpoints", models}, {"ensemble", ensemble != nullptr}};
  }
};

Target load_target(const std::vector<std::string>& paths, std::uint64_t seed) {
  if (paths.empty()) throw ConfigError("at least one --model is required");
  Target t;
  for (const std::string& p : paths) t.loaded.push_back(checkpoint_load(p));
  if (paths.size() > 1) {
    std::vector<std::shared_ptr<const Classifier>> members;
    for (const LoadedModel& m : t.loaded) members.push_back(m.classifier());
    t.ensemble = std::make_shared<RandomizedEnsemble>(RandomizedEnsemble::uniform(
        std::move(members), derive_seed(seed, kEnsembleStream)));
  }
  return t;
}

Dataset load_data(const std::string& path, std::size_t sample,
                  std::uint64_t seed) {
  Dataset d = dataset_load(path, 0, Split::kTest);
  return sample > 0 ? sample_rows(d, sample, derive_seed(seed, kSampleStream))
                    : d;
}

// Attack flags shared by attack, sweep and diagnose.
struct AttackFlags {
  std::string kind = "pgd";
  float epsilon = 8.0f / 255.0f;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> restarts;
  std::optional<float> alpha;
  std::optional<std::size_t> budget;
  std::optional<std::size_t> draws;
  std::optional<std::size_t> group;
  std::optional<float> probe;
  std::optional<float> p_init;
  bool adaptive = false;
  bool no_random_init = false;
  bool exhaust_budget = false;

  void add(CLI::App* c, bool with_kind) {
    if (with_kind) {
      c->add_option("--kind", kind, "none|pgd|zo-pgd|square|bpda|transfer|eot-pgd")
          ->capture_default_str();
    }
    c->add_option("--epsilon", epsilon, "L-infinity radius")->capture_default_str();
    c->add_option("--steps", steps, "Attack iterations");
    c->add_option("--restarts", restarts, "Random restarts");
    c->add_option("--alpha", alpha, "Step size (default by kind)");
    c->add_option("--budget", budget, "SQUARE query budget per example");
    c->add_option("--draws", draws, "EOT gradient draws");
    c->add_option("--group", group, "Zero-order block size");
    c->add_option("--probe", probe, "Zero-order finite-difference step");
    c->add_option("--p-init", p_init, "SQUARE initial square fraction");
    c->add_flag("--adaptive", adaptive, "Halve the PGD step on stagnation");
    c->add_flag("--no-random-init", no_random_init, "Start at the clean input");
    c->add_flag("--exhaust-budget", exhaust_budget,
                "SQUARE keeps searching after success");
  }

  AttackSpec spec(std::uint64_t seed) const {
    AttackSpec s = default_attack_spec(attack_kind_from_string(kind), epsilon,
                                       derive_seed(seed, kAttackStream));
    AttackSpec* body = s.kind == AttackKind::kTransfer ? s.inner.get() : &s;
    if (steps) body->steps = *steps;
    if (restarts) body->restarts = *restarts;
    if (alpha) body->alpha = *alpha;
    if (budget) s.budget = *budget;
    if (draws) s.eot_draws = *draws;
    if (group) s.group_size = *group;
    if (probe) s.probe = *probe;
    if (p_init) s.p_init = *p_init;
    body->adaptive = adaptive;
    body->random_init = !no_random_init;
    s.stop_on_success = !exhaust_budget;
    return s;
  }
};

// ---------------------------------------------------------------------------

void add_synth(CLI::App& app) {
  auto o = std::make_shared<SynthSpec>();
  auto kind = std::make_shared<std::string>("blobs");
  auto split = std::make_shared<std::string>("train");
  auto out = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>();
  CLI::App* c = app.add_subcommand("synth", "Synthesize a dataset file");
  c->add_option("--kind", *kind, "blobs|stripes|digits-lite")->capture_default_str();
  c->add_option("--n", o->n, "Examples")->capture_default_str();
  c->add_option("--classes", o->classes)->capture_default_str();
  c->add_option("--channels", o->channels)->capture_default_str();
  c->add_option("--height", o->height)->capture_default_str();
  c->add_option("--width", o->width)->capture_default_str();
  c->add_option("--margin", o->margin, "L-infinity class margin")->capture_default_str();
  c->add_option("--amplitude", o->amplitude, "Template amplitude (0: largest)");
  c->add_option("--split", *split, "train|test")->capture_default_str();
  c->add_option("--seed", *seed)->required();
  c->add_option("--out", *out, "Output .advb file")->required();
  c->callback([=] {
    json j = to_json(*o);
    j["kind"] = *kind;
    j["split"] = *split;
    j["seed"] = *seed;
    j["amplitude"] = o->amplitude;
    const Dataset d = dataset_synth(synth_spec_from_json(j));
    dataset_save(d, *out);
    std::printf("wrote %zu examples to %s (%s)\n", d.size(), out->c_str(),
                file_hash(*out).c_str());
  });
}

void add_train(CLI::App& app) {
  struct Opts {
    std::string regime, data, out, history, backbone_ckpt;
    std::uint64_t seed = 0;
    std::string arch = "small-cnn";
    std::size_t width = 8, blocks = 2, features = 16, depth = 5;
    std::vector<std::size_t> hidden = {64};
    bool no_bn = false, no_skip = false;
    std::string init = "zero-last";
    float init_std = 1e-3f;
    TrainConfig train;
    std::optional<std::size_t> epochs;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* c = app.add_subcommand("train", "Train a backbone or a front-end");
  c->add_option("--regime", o->regime, "standard|adversarial|frontend")->required();
  c->add_option("--data", o->data, "Training .advb file")->required();
  c->add_option("--out", o->out, "Checkpoint manifest to write")->required();
  c->add_option("--seed", o->seed)->required();
  c->add_option("--history", o->history, "Write the training history JSON");
  c->add_option("--arch", o->arch, "small-cnn|mlp")->capture_default_str();
  c->add_option("--width", o->width, "Conv channels")->capture_default_str();
  c->add_option("--blocks", o->blocks, "Residual conv blocks")->capture_default_str();
  c->add_option("--hidden", o->hidden, "MLP hidden widths");
  c->add_flag("--no-batch-norm", o->no_bn);
  c->add_option("--epochs", o->epochs, "Epochs (front-end: 1)");
  c->add_option("--lr", o->train.lr)->capture_default_str();
  c->add_option("--batch", o->train.batch_size)->capture_default_str();
  c->add_option("--momentum", o->train.momentum)->capture_default_str();
  c->add_option("--epsilon", o->train.epsilon, "Inner attack radius")->capture_default_str();
  c->add_option("--inner-steps", o->train.inner_steps)->capture_default_str();
  c->add_option("--inner-alpha", o->train.inner_alpha, "0: epsilon / 4");
  c->add_option("--max-steps", o->train.max_steps, "Stop after this many steps");
  c->add_option("--backbone", o->backbone_ckpt, "Frozen backbone checkpoint (frontend)");
  c->add_option("--features", o->features)->capture_default_str();
  c->add_option("--depth", o->depth)->capture_default_str();
  c->add_option("--init", o->init, "zero|small-random|zero-last")->capture_default_str();
  c->add_option("--init-std", o->init_std)->capture_default_str();
  c->add_flag("--no-skip", o->no_skip, "Front-end without its skip connection");
  c->add_option("--frontend-lr", o->train.frontend_lr, "Absolute front-end rate");
  c->add_option("--frontend-lr-ratio", o->train.frontend_lr_ratio)->capture_default_str();
  c->callback([o] {
    const Regime regime = regime_from_string(o->regime);
    const Dataset data = dataset_load(o->data, 0, Split::kTrain);
    TrainConfig tc = o->train;
    tc.seed = derive_seed(o->seed, kTrainStream);
    TrainHistory h;
    std::string hash;
    if (regime == Regime::kFrontEnd) {
      if (o->backbone_ckpt.empty()) {
        throw ConfigError("--regime frontend needs --backbone");
      }
      tc.epochs = o->epochs.value_or(1);
      LoadedModel base = checkpoint_load(o->backbone_ckpt);
      if (!base.network) throw ConfigError("--backbone must be a plain network");
      FrontEndSpec fs = frontend_spec_from_json(
          {{"channels", data.images.dim(1)}, {"height", data.images.dim(2)},
           {"width", data.images.dim(3)}, {"features", o->features},
           {"depth", o->depth}, {"init", o->init}, {"init_std", o->init_std},
           {"skip", !o->no_skip}, {"seed", derive_seed(o->seed, kInitStream)}});
      Network back = *base.network;
      back.graph().set_frozen(true);
      CompositeModel model(frontend_new(fs), std::move(back));
      h = train_frontend(model, data, tc);
      Provenance p{to_string(regime), o->seed, h.epochs.size(), h.steps,
                   {{"train", to_json(tc)}, {"backbone_hash", base.hash}}};
      hash = checkpoint_save(model, ModelSpec{base.spec.backbone, fs}, p, o->out);
    } else {
      tc.epochs = o->epochs.value_or(tc.epochs);
      BackboneSpec bs = backbone_spec_from_json(
          {{"kind", o->arch}, {"input", data.images.example_shape()},
           {"classes", data.classes}, {"width", o->width}, {"blocks", o->blocks},
           {"batch_norm", !o->no_bn}, {"hidden", o->hidden},
           {"seed", derive_seed(o->seed, kInitStream)}});
      Network model(backbone_new(bs));
      h = regime == Regime::kAdversarial ? train_adversarial(model, data, tc)
                                         : train_standard(model, data, tc);
      Provenance p{to_string(regime), o->seed, h.epochs.size(), h.steps,
                   {{"train", to_json(tc)}}};
      hash = checkpoint_save(model, ModelSpec{bs, {}}, p, o->out);
    }
    if (!o->history.empty()) emit(o->history, to_json(h));
    const double acc = h.epochs.empty() ? 0.0 : h.epochs.back().clean_acc;
    std::printf("%s training: %zu steps, train accuracy %.4f, checkpoint %s\n",
                to_string(regime).c_str(), h.steps, acc, hash.c_str());
  });
}

void add_attack(CLI::App& app) {
  struct Opts {
    std::vector<std::string> models;
    std::string data, source, report, dump;
    std::uint64_t seed = 0;
    std::size_t sample = 0;
    AttackFlags flags;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* c = app.add_subcommand("attack", "Attack a model on a dataset");
  c->add_option("--model", o->models,
                "Checkpoint; several form a uniform randomized ensemble")
      ->required();
  c->add_option("--data", o->data, "Evaluation .advb file")->required();
  c->add_option("--seed", o->seed)->required();
  c->add_option("--sample", o->sample, "Evaluate a seeded subset of this size");
  c->add_option("--source", o->source, "Source checkpoint (transfer)");
  c->add_option("--report", o->report, "Report JSON");
  c->add_option("--dump", o->dump, "Adversarial examples as .advb");
  o->flags.add(c, true);
  c->callback([o] {
    const AttackSpec spec = o->flags.spec(o->seed);
    const Target target = load_target(o->models, o->seed);
    const Dataset data = load_data(o->data, o->sample, o->seed);
    ModelAccess access = target.access(required_level(spec.kind));
    std::vector<AttackOutcome> outcomes;
    json source = nullptr;
    if (spec.kind == AttackKind::kTransfer) {
      if (o->source.empty()) throw ConfigError("--kind transfer needs --source");
      const LoadedModel src = checkpoint_load(o->source);
      ModelAccess sa = src.composite
                           ? ModelAccess(*src.composite, ThreatLevel::kGradient)
                           : ModelAccess(*src.network, ThreatLevel::kGradient);
      outcomes = run_attack(spec, access, data.images, data.labels, &sa);
      source = src.hash;
    } else {
      outcomes = run_attack(spec, access, data.images, data.labels);
    }
    const AccuracyEstimate est = robust_accuracy(outcomes);
    json report = {{"command", "attack"},
                   {"attack", to_json(spec)},
                   {"label", spec.label()},
                   {"model", target.describe()},
                   {"source", source},
                   {"data", file_hash(o->data)},
                   {"sample", data.size()},
                   {"estimate", to_json(est)},
                   {"success_rate", success_rate(outcomes)},
                   {"forward_queries", access.forward_queries()},
                   {"gradient_queries", access.gradient_queries()}};
    if (!o->dump.empty()) {
      Dataset dump{adversarial_batch(outcomes), data.labels, data.classes,
                   Split::kTest};
      dataset_save(dump, o->dump);
      report["dump_hash"] = file_hash(o->dump);
    }
    emit(o->report, report);
    std::printf("%s: accuracy %s on %zu examples\n", spec.label().c_str(),
                format_estimate(est).c_str(), data.size());
  });
}

void add_sweep(CLI::App& app) {
  struct Opts {
    std::vector<std::string> models;
    std::string data, report, csv, svg;
    std::uint64_t seed = 0;
    std::size_t sample = 0;
    std::vector<float> radii;
    AttackFlags flags;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* c = app.add_subcommand("sweep", "Robust accuracy over attack radii");
  c->add_option("--model", o->models, "Checkpoint (several: ensemble)")->required();
  c->add_option("--data", o->data)->required();
  c->add_option("--seed", o->seed)->required();
  c->add_option("--sample", o->sample);
  c->add_option("--radii", o->radii, "Ascending radii (default: 8 log-spaced)")
      ->delimiter(',');
  c->add_option("--report", o->report, "Report JSON");
  c->add_option("--csv", o->csv, "Curve CSV");
  c->add_option("--svg", o->svg, "Curve plot");
  o->flags.add(c, true);
  c->callback([o] {
    const AttackSpec spec = o->flags.spec(o->seed);
    const Target target = load_target(o->models, o->seed);
    const Dataset data = load_data(o->data, o->sample, o->seed);
    const std::vector<float> radii =
        o->radii.empty() ? default_sweep_radii(spec.epsilon) : o->radii;
    ModelAccess access = target.access(required_level(spec.kind));
    const SweepCurve curve = epsilon_sweep(access, data, spec, radii);
    emit(o->report, {{"command", "sweep"},
                     {"attack", to_json(spec)},
                     {"model", target.describe()},
                     {"data", file_hash(o->data)},
                     {"curve", to_json(curve)}});
    if (!o->csv.empty()) write_text(o->csv, to_csv(curve));
    if (!o->svg.empty()) write_text(o->svg, to_svg(std::span(&curve, 1)));
    for (const SweepPoint& p : curve.points) {
      std::printf("radius %.5f  accuracy %s\n", p.radius,
                  format_estimate(p.estimate).c_str());
    }
  });
}

void add_transfer_matrix(CLI::App& app) {
  struct Opts {
    std::vector<std::string> models;
    std::string data, csv, json_out;
    std::uint64_t seed = 0;
    std::size_t sample = 0;
    bool inclusive = false, loo = false;
    AttackFlags flags;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* c = app.add_subcommand("transfer-matrix",
                                   "Transfer accuracies between checkpoints");
  c->add_option("--model", o->models, "Checkpoint; id is the file stem")
      ->required();
  c->add_option("--data", o->data)->required();
  c->add_option("--seed", o->seed)->required();
  c->add_option("--sample", o->sample);
  c->add_flag("--inclusive", o->inclusive, "Add loss-sum ensemble sources");
  c->add_flag("--leave-one-out", o->loo, "Add leave-one-out ensemble sources");
  c->add_option("--csv", o->csv, "Matrix CSV");
  c->add_option("--json", o->json_out, "Matrix JSON");
  o->flags.add(c, false);
  c->callback([o] {
    AttackFlags f = o->flags;
    f.kind = "pgd";
    if (!f.restarts) f.restarts = 1;
    const AttackSpec inner = f.spec(o->seed);
    std::vector<NamedModel> named;
    for (const std::string& p : o->models) {
      LoadedModel lm = checkpoint_load(p);
      named.push_back({fs::path(p).stem().string(), lm.classifier(),
                       to_string(lm.spec.backbone.kind)});
    }
    const Dataset data = load_data(o->data, o->sample, o->seed);
    const TransferStudy study =
        build_transfer_matrix(named, data, inner, {o->inclusive, o->loo});
    if (!o->csv.empty()) write_text(o->csv, to_csv(study.matrix));
    if (!o->json_out.empty()) emit(o->json_out, to_json(study.matrix));
    std::printf("%s", to_csv(study.matrix).c_str());
  });
}

void add_ensemble_calc(CLI::App& app) {
  struct Opts {
    std::string matrix, policy, report;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* c = app.add_subcommand(
      "ensemble-calc", "Expected accuracy of a randomized ensemble per source");
  c->add_option("--matrix", o->matrix, "Transfer matrix (.csv or .json)")
      ->required();
  c->add_option("--policy", o->policy, "Policy JSON file, or \"uniform\" (default)");
  c->add_option("--report", o->report, "Report JSON");
  c->callback([o] {
    const std::string text = read_text(o->matrix);
    TransferMatrix tm;
    try {
      tm = fs::path(o->matrix).extension() == ".json"
               ? transfer_matrix_from_json(json::parse(text))
               : transfer_matrix_from_csv(text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed matrix: ") + e.what());
    }
    EnsemblePolicy policy = EnsemblePolicy::uniform(tm.targets.size());
    if (!o->policy.empty() && o->policy != "uniform") {
      try {
        policy = policy_from_json(json::parse(read_text(o->policy)));
      } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed policy: ") + e.what());
      }
    }
    const BestResponse best = attacker_best_response(tm, policy);
    json rows = json::array();
    for (std::size_t k = 0; k < tm.sources.size(); ++k) {
      rows.push_back({{"source", tm.sources[k]},
                      {"expected_accuracy", best.per_source[k]},
                      {"lower_bound", expected_accuracy_is_bound(tm, policy, k)}});
      std::printf("%-24s %.6f%s\n", tm.sources[k].c_str(), best.per_source[k],
                  expected_accuracy_is_bound(tm, policy, k) ? " (lower bound)" : "");
    }
    std::printf("best response: %s at %.6f\n", tm.sources[best.source].c_str(),
                best.value);
    emit(o->report, {{"command", "ensemble-calc"},
                     {"policy", to_json(policy)},
                     {"per_source", rows},
                     {"best_source", tm.sources[best.source]},
                     {"best_value", best.value},
                     {"lower_bound", best.lower_bound}});
  });
}

void add_diagnose(CLI::App& app) {
  struct Opts {
    std::vector<std::string> models;
    std::string data, report, reference;
    std::uint64_t seed = 0;
    std::size_t sample = 0;
    bool trace = false, masking = false, no_black_box = false, sweep = false;
    double bb_threshold = 20.0, bpda_threshold = 20.0;
    AttackFlags flags;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* c = app.add_subcommand("diagnose", "Gradient tracing and masking indicators");
  c->add_option("--model", o->models, "Checkpoint (several: ensemble)")->required();
  c->add_option("--data", o->data)->required();
  c->add_option("--seed", o->seed)->required();
  c->add_option("--sample", o->sample);
  c->add_option("--report", o->report, "Report JSON");
  c->add_flag("--trace", o->trace, "Trace PGD input gradients");
  c->add_flag("--masking", o->masking, "Run the masking indicator battery");
  c->add_option("--reference", o->reference, "Reference checkpoint for the sweep tail");
  c->add_flag("--no-black-box", o->no_black_box, "Skip zero-order PGD and SQUARE");
  c->add_flag("--sweep", o->sweep, "Include the sweep-tail indicator");
  c->add_option("--black-box-threshold", o->bb_threshold, "Points")->capture_default_str();
  c->add_option("--bpda-threshold", o->bpda_threshold, "Points")->capture_default_str();
  o->flags.add(c, false);
  c->callback([o] {
    if (!o->trace && !o->masking) {
      throw ConfigError("diagnose needs --trace and/or --masking");
    }
    const Target target = load_target(o->models, o->seed);
    const Dataset data = load_data(o->data, o->sample, o->seed);
    json report = {{"command", "diagnose"},
                   {"model", target.describe()},
                   {"data", file_hash(o->data)}};
    if (o->trace) {
      AttackFlags f = o->flags;
      f.kind = "pgd";
      const AttackSpec spec = f.spec(o->seed);
      ModelAccess access = target.access(ThreatLevel::kGradient);
      const GradientTrace t = gradient_trace(access, data, spec);
      report["trace"] = {{"attack", to_json(spec)}, {"report", to_json(t.report)}};
      std::printf("gradient trace: %zu values, nan %zu, inf %zu, small %.4f, "
                  "q01 %.3g q50 %.3g q99 %.3g\n",
                  t.report.values, t.report.nan_count, t.report.inf_count,
                  t.report.small_fraction, t.report.q01, t.report.q50,
                  t.report.q99);
    }
    if (o->masking) {
      MaskingConfig mc;
      mc.epsilon = o->flags.epsilon;
      mc.seed = derive_seed(o->seed, kAttackStream);
      mc.black_box = !o->no_black_box;
      mc.sweep = o->sweep;
      mc.thresholds = {o->bb_threshold, o->bpda_threshold};
      ModelAccess access = target.access(ThreatLevel::kFullTrainTime);
      std::optional<Target> ref;
      std::optional<ModelAccess> ref_access;
      if (!o->reference.empty()) {
        ref = load_target({o->reference}, o->seed);
        ref_access.emplace(ref->access(ThreatLevel::kGradient));
      }
      const MaskingReport r = masking_report(
          access, data, mc, ref_access ? &*ref_access : nullptr);
      report["masking"] = to_json(r);
      std::printf("masking: black-box gap %.1f, bpda gap %.1f, suspected %s\n",
                  r.black_box_gap, r.bpda_gap, r.masking_suspected ? "yes" : "no");
    }
    emit(o->report, report);
  });
}

void add_replicate(CLI::App& app) {
  struct Opts {
    bool tables = false, masking = false, no_ablation = false, no_black_box = false;
    std::optional<std::uint64_t> seed;
    std::size_t seeds = 1;
    std::optional<std::size_t> sample;
    std::optional<float> frontend_lr;
    std::string report;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* c = app.add_subcommand("replicate", "Canned replication pipelines");
  c->add_flag("--tables", o->tables, "Composition arithmetic of the published tables");
  c->add_flag("--masking", o->masking, "Front-end masking pipeline");
  c->add_option("--seed", o->seed, "Root seed (required with --masking)");
  c->add_option("--seeds", o->seeds, "Consecutive seeds to run")->capture_default_str();
  c->add_option("--sample", o->sample, "Examples under the attack battery");
  c->add_option("--frontend-lr", o->frontend_lr, "Absolute front-end rate");
  c->add_flag("--no-ablation", o->no_ablation, "Skip the skip-connection ablation");
  c->add_flag("--no-black-box", o->no_black_box, "Skip zero-order PGD and SQUARE");
  c->add_option("--report", o->report, "Report JSON");
  c->callback([o] {
    if (o->tables == o->masking) {
      throw ConfigError("replicate needs exactly one of --tables and --masking");
    }
    if (o->tables) {
      const std::vector<TableCheck> checks = replicate_published_tables();
      for (const TableCheck& t : checks) {
        std::printf("%-44s computed %.4f%%  reported %.4f%%  %s\n",
                    t.name.c_str(), 100.0 * t.value, 100.0 * t.reported,
                    t.within_tolerance() ? "within 0.1 pt" : "OUTSIDE 0.1 pt");
      }
      emit(o->report, {{"command", "replicate-tables"}, {"checks", to_json(checks)}});
      return;
    }
    if (!o->seed) throw ConfigError("--masking needs --seed");
    json runs = json::array();
    std::size_t passed = 0;
    for (std::size_t k = 0; k < o->seeds; ++k) {
      MaskingReplicationConfig cfg;
      cfg.seed = *o->seed + k;
      cfg.ablation = !o->no_ablation;
      cfg.battery.black_box = !o->no_black_box;
      if (o->sample) cfg.sample_size = *o->sample;
      if (o->frontend_lr) cfg.frontend_train.frontend_lr = *o->frontend_lr;
      const MaskingReplicationReport r = run_masking_replication(cfg);
      passed += r.phenomenon() ? 1 : 0;
      runs.push_back(to_json(r));
      const auto& m = r.masking.measured;
      std::printf("seed %llu: backbone clean %.3f, composite clean %.3f, pgd %.3f, "
                  "bpda %.3f, gap %.1f pts, flag %s\n",
                  static_cast<unsigned long long>(cfg.seed),
                  r.backbone_clean.accuracy, r.composite_clean.accuracy,
                  m.pgd.accuracy, m.bpda ? m.bpda->accuracy : -1.0,
                  r.pgd_minus_bpda_points(),
                  r.masking.masking_suspected ? "on" : "off");
    }
    std::printf("phenomenon reproduced on %zu of %zu seeds\n", passed, o->seeds);
    emit(o->report, {{"command", "replicate-masking"},
                     {"runs", runs},
                     {"reproduced", passed},
                     {"seeds", o->seeds}});
  });
}

void add_run(CLI::App& app) {
  auto config = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>();
  auto out = std::make_shared<std::string>();
  CLI::App* c = app.add_subcommand("run", "Run an experiment config");
  c->add_option("--config", *config, "Experiment JSON")->required();
  c->add_option("--seed", *seed, "Root seed, overrides the config")->required();
  c->add_option("--out", *out, "Output directory, overrides the config");
  c->callback([=] {
    json j;
    try {
      j = json::parse(read_text(*config));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }
    j["seed"] = *seed;
    if (!out->empty()) j["output_dir"] = fs::absolute(*out).string();
    const ExperimentConfig cfg =
        experiment_config_from_json(j, fs::path(*config).parent_path());
    const ExperimentReport r = run_experiment(cfg);
    std::printf("%s", to_csv(r).c_str());
  });
}

}  // namespace

void register_commands(CLI::App& app) {
  add_synth(app);
  add_train(app);
  add_attack(app);
  add_sweep(app);
  add_transfer_matrix(app);
  add_ensemble_calc(app);
  add_diagnose(app);
  add_replicate(app);
  add_run(app);
}

}  // namespace advmask::cli
