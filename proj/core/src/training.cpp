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

#include "advmask/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include <nlohmann/json.hpp>

#include "advmask/attacks.hpp"
#include "advmask/errors.hpp"
#include "advmask/rng.hpp"
#include "advmask/threat.hpp"

namespace advmask {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5f1e;
constexpr std::uint64_t kInnerStream = 0x1a1e;
constexpr std::size_t kEvalChunk = 256;

struct Trainee {
  std::function<LossAndGrad(const Tensor&, std::span<const int>)> step;
  std::function<Parameter&(const std::string&)> param;
  std::function<ModelAccess()> access;  // for the inner attack
  const Classifier* classifier = nullptr;
};

void check_common(const Dataset& data, const TrainConfig& cfg,
                  std::size_t classes, const Shape& input) {
  data.validate();
  if (data.images.example_shape() != input) {
    throw ShapeError("training images " + to_string(data.images.shape()) +
                     " do not match model input " + to_string(input));
  }
  if (data.classes > classes) {
    throw ShapeError("dataset has " + std::to_string(data.classes) +
                     " classes, model " + std::to_string(classes));
  }
  if (!(cfg.lr > 0.0f)) {
    throw PreconditionError("learning rate must be positive");
  }
  if (cfg.batch_size == 0) throw PreconditionError("batch size must be positive");
  if (!(cfg.momentum >= 0.0f && cfg.momentum < 1.0f)) {
    throw PreconditionError("momentum must lie in [0, 1)");
  }
  if (!(cfg.epsilon >= 0.0f)) throw PreconditionError("epsilon must be >= 0");
}

TrainHistory run_sgd(const Trainee& t, const Dataset& data,
                     const TrainConfig& cfg, Regime regime, float lr,
                     bool adversarial) {
  TrainHistory h;
  h.regime = regime;
  h.lr = lr;
  h.initial_loss = mean_loss(*t.classifier, data);

  const bool attack = adversarial && cfg.epsilon > 0.0f && cfg.inner_steps > 0;
  const std::size_t n = data.size();
  std::map<std::string, Tensor> velocity;
  const Rng shuffle_base(cfg.seed, kShuffleStream);
  const Rng inner_base(cfg.seed, kInnerStream);
  std::vector<std::size_t> order(n);

  bool done = cfg.max_steps > 0 && h.steps >= cfg.max_steps;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle = shuffle_base.fork(epoch);
    shuffle.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(n, b0 + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + b0, b1 - b0);
      Tensor xb = gather(data.images, rows);
      std::vector<int> yb;
      yb.reserve(rows.size());
      for (std::size_t r : rows) yb.push_back(data.labels[r]);

      if (attack) {
        ModelAccess access = t.access();
        PgdConfig pc;
        pc.steps = cfg.inner_steps;
        pc.alpha = cfg.resolved_inner_alpha();
        pc.restarts = 1;
        pc.seed = inner_base.fork(h.steps).next_u64();
        const auto outcomes = pgd(access, xb, yb, cfg.epsilon, pc);
        xb = adversarial_batch(outcomes);
      }

      LossAndGrad lg;
      try {
        lg = t.step(xb, yb);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(h.steps) + ": " + e.what(),
                             e.node());
      }
      for (auto& [name, g] : lg.grads.param_grads) {
        Parameter& p = t.param(name);
        if (cfg.momentum > 0.0f) {
          auto [it, fresh] = velocity.try_emplace(name, g.shape());
          Tensor& v = it->second;
          for (std::size_t j = 0; j < g.size(); ++j) {
            v[j] = cfg.momentum * v[j] + g[j];
            p.value[j] -= lr * v[j];
          }
        } else {
          for (std::size_t j = 0; j < g.size(); ++j) p.value[j] -= lr * g[j];
        }
      }
      h.step_losses.push_back(static_cast<float>(lg.loss));
      epoch_loss += lg.loss * double(rows.size());
      seen += rows.size();
      ++h.steps;
      if (cfg.max_steps > 0 && h.steps >= cfg.max_steps) {
        done = true;
        break;
      }
    }
    h.epochs.push_back({epoch, seen ? epoch_loss / double(seen) : 0.0,
                        accuracy(*t.classifier, data)});
  }
  return h;
}

TrainHistory train_network(Network& model, const Dataset& data,
                           const TrainConfig& cfg, Regime regime) {
  check_common(data, cfg, model.num_classes(), model.input_shape());
  if (cfg.epochs < 1) throw PreconditionError("training needs epochs >= 1");
  for (const Parameter& p : model.graph().parameters()) {
    if (p.frozen) {
      throw PreconditionError("parameter " + p.name +
                              " is frozen; standard and adversarial training "
                              "need an unfrozen model");
    }
  }
  Graph& g = model.graph();
  Trainee t;
  t.classifier = &model;
  t.step = [&g](const Tensor& x, std::span<const int> y) {
    Activations acts;
    LossAndGrad lg = g.loss_and_grad(x, y, Reduction::kMean, true,
                                     BatchNormMode::kTraining, &acts);
    g.commit_batch_statistics(acts);
    return lg;
  };
  t.param = [&g](const std::string& name) -> Parameter& { return g.param(name); };
  t.access = [&model] { return ModelAccess(model, ThreatLevel::kGradient); };
  return run_sgd(t, data, cfg, regime, cfg.lr,
                 regime == Regime::kAdversarial);
}

}  // namespace

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::kStandard: return "standard";
    case Regime::kAdversarial: return "adversarial";
    case Regime::kFrontEnd: return "frontend";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  for (Regime r : {Regime::kStandard, Regime::kAdversarial, Regime::kFrontEnd}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown training regime '" + s + "'");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"momentum", c.momentum},
          {"epsilon", c.epsilon},
          {"inner_steps", c.inner_steps},
          {"inner_alpha", c.resolved_inner_alpha()},
          {"frontend_lr_ratio", c.frontend_lr_ratio},
          {"frontend_lr", c.frontend_lr},
          {"resolved_frontend_lr", c.resolved_frontend_lr()},
          {"max_steps", c.max_steps},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.momentum = j.value("momentum", c.momentum);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.inner_alpha = j.value("inner_alpha", c.inner_alpha);
    c.frontend_lr_ratio = j.value("frontend_lr_ratio", c.frontend_lr_ratio);
    c.frontend_lr = j.value("frontend_lr", c.frontend_lr);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
}

nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : h.epochs) {
    epochs.push_back(
        {{"epoch", e.epoch}, {"loss", e.loss}, {"clean_acc", e.clean_acc}});
  }
  return {{"regime", to_string(h.regime)},
          {"lr", h.lr},
          {"steps", h.steps},
          {"initial_loss", h.initial_loss},
          {"epochs", epochs},
          {"step_losses", h.step_losses}};
}

TrainHistory train_standard(Network& model, const Dataset& data,
                            const TrainConfig& cfg) {
  return train_network(model, data, cfg, Regime::kStandard);
}

TrainHistory train_adversarial(Network& model, const Dataset& data,
                               const TrainConfig& cfg) {
  return train_network(model, data, cfg, Regime::kAdversarial);
}

TrainHistory train_frontend(CompositeModel& model, const Dataset& data,
                            const TrainConfig& cfg) {
  if (!model.backbone_frozen()) {
    throw PreconditionError(
        "front-end training needs a frozen backbone (recipe violation)");
  }
  if (cfg.epochs > 1) {
    throw PreconditionError("front-end training runs for at most one epoch, "
                            "got " + std::to_string(cfg.epochs));
  }
  TrainConfig local = cfg;
  // The learning-rate checks apply to the rate actually used.
  local.lr = cfg.resolved_frontend_lr();
  check_common(data, local, model.num_classes(), model.input_shape());

  Trainee t;
  t.classifier = &model;
  t.step = [&model](const Tensor& x, std::span<const int> y) {
    // Inference-mode batch-norm everywhere: statistics stay frozen.
    return model.loss_and_grad(x, y, Reduction::kMean, true);
  };
  t.param = [&model](const std::string& key) -> Parameter& {
    if (key.rfind("front/", 0) != 0) {
      throw PreconditionError("backbone parameter " + key +
                              " received a gradient while frozen");
    }
    return model.front().param(key.substr(6));
  };
  t.access = [&model] { return ModelAccess(model, ThreatLevel::kGradient); };
  return run_sgd(t, data, local, Regime::kFrontEnd, local.lr, true);
}

std::size_t count_correct(const Classifier& model, const Dataset& data) {
  std::size_t correct = 0;
  for (std::size_t b0 = 0; b0 < data.size(); b0 += kEvalChunk) {
    const std::size_t b1 = std::min(data.size(), b0 + kEvalChunk);
    const std::vector<int> pred = model.predict(data.images.slice(b0, b1));
    for (std::size_t i = b0; i < b1; ++i) {
      correct += pred[i - b0] == data.labels[i] ? 1 : 0;
    }
  }
  return correct;
}

double accuracy(const Classifier& model, const Dataset& data) {
  if (data.size() == 0) throw PreconditionError("accuracy of an empty dataset");
  return double(count_correct(model, data)) / double(data.size());
}

double mean_loss(const Classifier& model, const Dataset& data) {
  if (data.size() == 0) throw PreconditionError("loss of an empty dataset");
  double total = 0.0;
  for (std::size_t b0 = 0; b0 < data.size(); b0 += kEvalChunk) {
    const std::size_t b1 = std::min(data.size(), b0 + kEvalChunk);
    const std::span<const int> y(data.labels.data() + b0, b1 - b0);
    for (float l : model.losses(data.images.slice(b0, b1), y)) total += l;
  }
  return total / double(data.size());
}

}  // namespace advmask
