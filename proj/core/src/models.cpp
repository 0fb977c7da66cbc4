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

#include "advmask/models.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "advmask/errors.hpp"
#include "advmask/loss.hpp"

namespace advmask {

namespace {

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  for (float& v : t.data()) v = static_cast<float>(rng.normal() * stddev);
}

void he_init(Graph& g, const std::string& layer, Rng& rng) {
  Parameter& w = g.param(layer + ".weight");
  const std::size_t fan_in = w.value.size() / w.value.dim(0);
  fill_normal(w.value, rng, std::sqrt(2.0 / double(fan_in)));
}

}  // namespace

// ---------------------------------------------------------------------------

Graph frontend_new(const FrontEndSpec& spec) {
  if (spec.depth < 2) {
    throw PreconditionError("front-end depth must be >= 2, got " +
                            std::to_string(spec.depth));
  }
  if (spec.features == 0 || spec.channels == 0) {
    throw PreconditionError("front-end needs positive channel counts");
  }
  Graph g({spec.channels, spec.height, spec.width});
  NodeId h = g.relu(g.conv2d(g.input(), spec.features, 3, "fe.conv0"));
  for (std::size_t i = 1; i + 1 < spec.depth; ++i) {
    const std::string name = "fe.conv" + std::to_string(i);
    h = g.conv2d(h, spec.features, 3, name, false);
    h = g.relu(g.batch_norm(h, "fe.bn" + std::to_string(i)));
  }
  const std::string last = "fe.conv" + std::to_string(spec.depth - 1);
  NodeId noise = g.conv2d(h, spec.channels, 3, last);
  if (spec.skip) {
    g.add(g.input(), g.scale(noise, -1.0f));
  }

  Rng rng(spec.seed, 0x6672);
  for (std::size_t i = 0; i < spec.depth; ++i) {
    const std::string name = "fe.conv" + std::to_string(i);
    Parameter& w = g.param(name + ".weight");
    switch (spec.init) {
      case FrontEndInit::kZero:
        break;
      case FrontEndInit::kSmallRandom:
        fill_normal(w.value, rng, spec.init_std);
        break;
      case FrontEndInit::kZeroLast:
        if (i + 1 < spec.depth) he_init(g, name, rng);
        break;
    }
  }
  return g;
}

Graph backbone_new(const BackboneSpec& spec) {
  if (spec.classes < 2) throw PreconditionError("backbone needs >= 2 classes");
  Graph g(spec.input);
  Rng rng(spec.seed, 0x6262);
  std::vector<std::string> convs;
  std::vector<std::string> denses;

  if (spec.kind == BackboneKind::kSmallConvNet) {
    if (spec.input.size() != 3) {
      throw ShapeError("SmallConvNet needs [C, H, W] input, got " +
                       to_string(spec.input));
    }
    if (spec.width == 0) throw PreconditionError("conv width must be > 0");
    auto norm = [&](NodeId x, const std::string& name) {
      return spec.batch_norm ? g.batch_norm(x, name) : x;
    };
    auto pool = [&](NodeId x) {
      const Shape& s = g.nodes()[x].shape;
      return (s[1] % 2 == 0 && s[2] % 2 == 0 && s[1] >= 4 && s[2] >= 4)
                 ? g.avg_pool2(x)
                 : x;
    };
    NodeId h = g.conv2d(g.input(), spec.width, 3, "stem", !spec.batch_norm);
    convs.push_back("stem");
    h = pool(g.relu(norm(h, "stem.bn")));
    for (std::size_t b = 0; b < spec.blocks; ++b) {
      const std::string p = "block" + std::to_string(b);
      NodeId r = g.conv2d(h, spec.width, 3, p + ".conv1", !spec.batch_norm);
      r = g.relu(norm(r, p + ".bn1"));
      r = g.conv2d(r, spec.width, 3, p + ".conv2", !spec.batch_norm);
      r = norm(r, p + ".bn2");
      h = g.relu(g.add(h, r));
      convs.push_back(p + ".conv1");
      convs.push_back(p + ".conv2");
    }
    h = pool(h);
    g.dense(h, spec.classes, "head");
    denses.push_back("head");
  } else {
    NodeId h = g.input();
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
      const std::string name = "fc" + std::to_string(i);
      h = g.relu(g.dense(h, spec.hidden[i], name));
      denses.push_back(name);
    }
    g.dense(h, spec.classes, "head");
    denses.push_back("head");
  }

  for (const auto& c : convs) he_init(g, c, rng);
  for (const auto& d : denses) {
    if (d == "head") {
      Parameter& w = g.param(d + ".weight");
      fill_normal(w.value, rng, 1.0 / std::sqrt(double(w.value.dim(1))));
    } else {
      he_init(g, d, rng);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

CompositeModel::CompositeModel(Graph front, Network back)
    : front_(std::move(front)), back_(std::move(back)) {
  if (front_.output_shape() != back_.input_shape()) {
    throw ShapeError("front-end output " + to_string(front_.output_shape()) +
                     " does not match backbone input " +
                     to_string(back_.input_shape()));
  }
}

Tensor CompositeModel::scores(const Tensor& batch) const {
  return back_.graph().forward(front_.forward(batch));
}

LossAndGrad CompositeModel::loss_and_grad(const Tensor& batch,
                                          std::span<const int> labels,
                                          Reduction reduction,
                                          bool with_params) const {
  Activations front_acts = front_.trace(batch);
  LossAndGrad back =
      back_.graph().loss_and_grad(front_acts.output(), labels, reduction,
                                  with_params);
  GradientBundle front = front_.backward(front_acts, back.grads.input_grad,
                                         with_params);
  LossAndGrad out;
  out.loss = back.loss;
  out.per_example = std::move(back.per_example);
  out.grads.input_grad = std::move(front.input_grad);
  for (auto& [name, g] : front.param_grads) {
    out.grads.param_grads.emplace("front/" + name, std::move(g));
  }
  for (auto& [name, g] : back.grads.param_grads) {
    out.grads.param_grads.emplace("back/" + name, std::move(g));
  }
  return out;
}

InputGradient CompositeModel::input_gradient(
    const Tensor& batch, std::span<const int> labels) const {
  LossAndGrad lg = loss_and_grad(batch, labels, Reduction::kSum, false);
  return {std::move(lg.grads.input_grad), std::move(lg.per_example)};
}

bool CompositeModel::backbone_frozen() const {
  for (const auto& p : back_.graph().parameters()) {
    if (!p.frozen) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

RandomizedEnsemble::RandomizedEnsemble(
    std::vector<std::shared_ptr<const Classifier>> members,
    std::vector<double> probabilities, std::uint64_t seed)
    : RandomizedEnsemble(std::move(members), std::move(probabilities),
                         Rng(seed, 0x656e73)) {}

RandomizedEnsemble::RandomizedEnsemble(
    std::vector<std::shared_ptr<const Classifier>> members,
    std::vector<double> probabilities, Rng stream)
    : members_(std::move(members)),
      probs_(std::move(probabilities)),
      stream_(stream) {
  if (members_.empty()) throw PreconditionError("empty ensemble");
  if (probs_.size() != members_.size()) {
    throw PreconditionError("ensemble has " + std::to_string(members_.size()) +
                            " members but " + std::to_string(probs_.size()) +
                            " probabilities");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw PreconditionError("negative ensemble probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw PreconditionError("ensemble probabilities sum to " +
                            std::to_string(total));
  }
  for (const auto& m : members_) {
    if (!m) throw PreconditionError("null ensemble member");
    if (m->input_shape() != members_[0]->input_shape() ||
        m->num_classes() != members_[0]->num_classes()) {
      throw ShapeError("ensemble members disagree on input/label space");
    }
  }
  counts_.assign(members_.size(), 0);
}

RandomizedEnsemble RandomizedEnsemble::uniform(
    std::vector<std::shared_ptr<const Classifier>> members,
    std::uint64_t seed) {
  std::vector<double> p(members.size(),
                        members.empty() ? 0.0 : 1.0 / double(members.size()));
  return RandomizedEnsemble(std::move(members), std::move(p), seed);
}

RandomizedEnsemble::RandomizedEnsemble(RandomizedEnsemble&& other) noexcept
    : members_(std::move(other.members_)),
      probs_(std::move(other.probs_)),
      stream_(other.stream_),
      counts_(std::move(other.counts_)) {}

const Shape& RandomizedEnsemble::input_shape() const {
  return members_[0]->input_shape();
}

std::size_t RandomizedEnsemble::num_classes() const {
  return members_[0]->num_classes();
}

bool RandomizedEnsemble::probabilities() const {
  return members_[0]->probabilities();
}

std::size_t RandomizedEnsemble::draw() const {
  std::lock_guard<std::mutex> lock(mu_);
  const double u = stream_.uniform();
  double acc = 0.0;
  std::size_t pick = members_.size() - 1;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    acc += probs_[i];
    if (u < acc && probs_[i] > 0.0) {
      pick = i;
      break;
    }
  }
  while (probs_[pick] == 0.0 && pick > 0) --pick;
  ++counts_[pick];
  return pick;
}

std::vector<std::size_t> RandomizedEnsemble::draw_rows(std::size_t n) const {
  std::vector<std::size_t> who(n);
  for (auto& w : who) w = draw();
  return who;
}

RandomizedEnsemble RandomizedEnsemble::fork(std::uint64_t sub) const {
  std::lock_guard<std::mutex> lock(mu_);
  return RandomizedEnsemble(members_, probs_, stream_.fork(sub));
}

std::vector<std::size_t> RandomizedEnsemble::selection_counts() const {
  std::lock_guard<std::mutex> lock(mu_);
  return counts_;
}

Tensor RandomizedEnsemble::scores(const Tensor& batch) const {
  const std::size_t n = batch.batch();
  const auto who = draw_rows(n);
  Tensor out({n, num_classes()});
  for (std::size_t m = 0; m < members_.size(); ++m) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < n; ++r) {
      if (who[r] == m) rows.push_back(r);
    }
    if (rows.empty()) continue;
    Tensor s = members_[m]->scores(gather(batch, rows));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      std::copy(s.example(k).begin(), s.example(k).end(),
                out.example(rows[k]).begin());
    }
  }
  return out;
}

InputGradient RandomizedEnsemble::input_gradient(
    const Tensor& batch, std::span<const int> labels) const {
  const std::size_t n = batch.batch();
  const auto who = draw_rows(n);
  InputGradient out{Tensor(batch.shape()), std::vector<float>(n)};
  for (std::size_t m = 0; m < members_.size(); ++m) {
    std::vector<std::size_t> rows;
    std::vector<int> sub_labels;
    for (std::size_t r = 0; r < n; ++r) {
      if (who[r] == m) {
        rows.push_back(r);
        sub_labels.push_back(labels[r]);
      }
    }
    if (rows.empty()) continue;
    InputGradient g = members_[m]->input_gradient(gather(batch, rows),
                                                  sub_labels);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      std::copy(g.grad.example(k).begin(), g.grad.example(k).end(),
                out.grad.example(rows[k]).begin());
      out.losses[rows[k]] = g.losses[k];
    }
  }
  return out;
}

Tensor ensemble_predict(const RandomizedEnsemble& e, const Tensor& x) {
  Tensor s = e.scores(x);
  return e.probabilities() ? s : softmax(s);
}

InputGradient ensemble_gradient(const RandomizedEnsemble& e, const Tensor& x,
                                std::span<const int> labels) {
  return e.input_gradient(x, labels);
}

// ---------------------------------------------------------------------------

LossSumEnsemble::LossSumEnsemble(
    std::vector<std::shared_ptr<const Classifier>> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw PreconditionError("empty source ensemble");
}

const Shape& LossSumEnsemble::input_shape() const {
  return members_[0]->input_shape();
}

std::size_t LossSumEnsemble::num_classes() const {
  return members_[0]->num_classes();
}

Tensor LossSumEnsemble::scores(const Tensor& batch) const {
  Tensor mean({batch.batch(), num_classes()});
  for (const auto& m : members_) {
    Tensor s = m->scores(batch);
    if (!m->probabilities()) s = softmax(s);
    for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i];
  }
  for (float& v : mean.data()) v /= static_cast<float>(members_.size());
  return mean;
}

std::vector<float> LossSumEnsemble::losses(const Tensor& batch,
                                           std::span<const int> labels) const {
  std::vector<float> total(batch.batch(), 0.0f);
  for (const auto& m : members_) {
    const auto l = m->losses(batch, labels);
    for (std::size_t i = 0; i < l.size(); ++i) total[i] += l[i];
  }
  return total;
}

InputGradient LossSumEnsemble::input_gradient(
    const Tensor& batch, std::span<const int> labels) const {
  InputGradient out{Tensor(batch.shape()),
                    std::vector<float>(batch.batch(), 0.0f)};
  for (const auto& m : members_) {
    InputGradient g = m->input_gradient(batch, labels);
    for (std::size_t i = 0; i < g.grad.size(); ++i) out.grad[i] += g.grad[i];
    for (std::size_t i = 0; i < g.losses.size(); ++i) {
      out.losses[i] += g.losses[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(FrontEndInit init) {
  switch (init) {
    case FrontEndInit::kZero: return "zero";
    case FrontEndInit::kSmallRandom: return "small-random";
    case FrontEndInit::kZeroLast: return "zero-last";
  }
  return "?";
}

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::kSmallConvNet ? "small-cnn" : "mlp";
}

nlohmann::json to_json(const FrontEndSpec& s) {
  return {{"kind", "frontend"},   {"channels", s.channels},
          {"height", s.height},   {"width", s.width},
          {"features", s.features}, {"depth", s.depth},
          {"init", to_string(s.init)}, {"init_std", s.init_std},
          {"skip", s.skip},       {"seed", s.seed}};
}

nlohmann::json to_json(const BackboneSpec& s) {
  return {{"kind", to_string(s.kind)}, {"input", s.input},
          {"classes", s.classes},      {"width", s.width},
          {"blocks", s.blocks},        {"batch_norm", s.batch_norm},
          {"hidden", s.hidden},        {"seed", s.seed}};
}

FrontEndSpec frontend_spec_from_json(const nlohmann::json& j) {
  FrontEndSpec s;
  s.channels = j.value("channels", s.channels);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.features = j.value("features", s.features);
  s.depth = j.value("depth", s.depth);
  const std::string init = j.value("init", to_string(s.init));
  if (init == "zero") {
    s.init = FrontEndInit::kZero;
  } else if (init == "small-random") {
    s.init = FrontEndInit::kSmallRandom;
  } else if (init == "zero-last") {
    s.init = FrontEndInit::kZeroLast;
  } else {
    throw ConfigError("unknown front-end init '" + init + "'");
  }
  s.init_std = j.value("init_std", s.init_std);
  s.skip = j.value("skip", s.skip);
  s.seed = j.value("seed", s.seed);
  return s;
}

BackboneSpec backbone_spec_from_json(const nlohmann::json& j) {
  BackboneSpec s;
  const std::string kind = j.value("kind", to_string(s.kind));
  if (kind == "small-cnn") {
    s.kind = BackboneKind::kSmallConvNet;
  } else if (kind == "mlp") {
    s.kind = BackboneKind::kMlp;
  } else {
    throw ConfigError("unknown backbone kind '" + kind + "'");
  }
  s.input = j.value("input", s.input);
  s.classes = j.value("classes", s.classes);
  s.width = j.value("width", s.width);
  s.blocks = j.value("blocks", s.blocks);
  s.batch_norm = j.value("batch_norm", s.batch_norm);
  s.hidden = j.value("hidden", s.hidden);
  s.seed = j.value("seed", s.seed);
  return s;
}

}  // namespace advmask
