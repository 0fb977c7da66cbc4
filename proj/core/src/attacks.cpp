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

#include "advmask/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "advmask/errors.hpp"
#include "advmask/loss.hpp"

namespace advmask {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kBlockStream = 0xb10c;
constexpr std::uint64_t kSquareStream = 0x5a5a;
constexpr std::size_t kMaxRowsPerQuery = 512;

float sign_of(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

float lower_bound(float x, float eps) { return std::max(0.0f, x - eps); }
float upper_bound(float x, float eps) { return std::min(1.0f, x + eps); }

void check_inputs(const ModelAccess& model, const Tensor& x,
                  std::span<const int> labels, float epsilon) {
  if (x.rank() < 2 || x.example_shape() != model.input_shape()) {
    throw ShapeError("attack input " + to_string(x.shape()) +
                     " does not match model input " +
                     to_string(model.input_shape()));
  }
  if (labels.size() != x.batch()) {
    throw ShapeError("attack has " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(x.batch()) + " examples");
  }
  check_labels(labels, model.num_classes());
  if (!(epsilon >= 0.0f) || epsilon > 1.0f) {
    throw PreconditionError("epsilon must lie in [0, 1], got " +
                            std::to_string(epsilon));
  }
}

float resolve_alpha(float alpha, float epsilon) {
  if (alpha < 0.0f) throw PreconditionError("step size must be positive");
  return alpha > 0.0f ? alpha : epsilon / 8.0f;
}

Tensor random_start(const Tensor& x, float eps, std::uint64_t seed,
                    std::size_t restart) {
  Tensor out = x;
  const Rng base = Rng(seed, kInitStream).fork(restart);
  for (std::size_t i = 0; i < x.batch(); ++i) {
    Rng rng = base.fork(i);
    auto src = x.example(i);
    auto dst = out.example(i);
    for (std::size_t j = 0; j < src.size(); ++j) {
      const float lo = lower_bound(src[j], eps);
      const float hi = upper_bound(src[j], eps);
      dst[j] = lo < hi ? std::clamp(rng.uniform(lo, hi), lo, hi) : lo;
    }
  }
  return out;
}

struct Judged {
  std::vector<float> losses;
  std::vector<int> predictions;
};

// Experimenter-side evaluation; never counted as an attacker query.
Judged judge(const ModelAccess& model, const Tensor& batch,
             std::span<const int> loss_labels) {
  const Classifier& c = model.judge();
  const Tensor scores = c.scores(batch);
  return {score_losses(scores, loss_labels, c.probabilities()),
          argmax_rows(scores)};
}

struct SignedPgdParams {
  std::size_t steps = 0;
  std::size_t restarts = 1;
  float alpha = 0.0f;
  float epsilon = 0.0f;
  bool random_init = true;
  bool targeted = false;
  bool adaptive = false;
  std::uint64_t seed = 0;
  std::size_t queries_per_step = 1;  // per example
};

// Returns the ascent direction at `cur`; may fill `losses` with the loss at
// `cur` when it comes for free.
using DirectionFn = std::function<Tensor(
    const Tensor& cur, std::size_t restart, std::size_t step,
    std::vector<float>& losses)>;

std::vector<AttackOutcome> signed_pgd(const ModelAccess& model,
                                      const Tensor& x,
                                      std::span<const int> labels,
                                      std::span<const int> loss_labels,
                                      const SignedPgdParams& p,
                                      const DirectionFn& direction,
                                      const GradientObserver& observer) {
  const std::size_t n = x.batch();
  const std::size_t d = x.example_size();
  const float ascent = p.targeted ? -1.0f : 1.0f;
  const LinfBall ball{x, p.epsilon};
  const std::size_t window = std::max<std::size_t>(2, p.steps / 5);

  std::vector<AttackOutcome> best(n);
  for (std::size_t r = 0; r < p.restarts; ++r) {
    Tensor cur = (p.random_init && p.steps > 0 && p.epsilon > 0.0f)
                     ? random_start(x, p.epsilon, p.seed, r)
                     : x;
    std::vector<float> alpha(n, p.alpha);
    std::vector<std::vector<float>> trace(n);
    // Adaptive bookkeeping, in "higher is better" units.
    std::vector<float> best_obj(n, -INFINITY);
    std::vector<float> checkpoint_obj(n, -INFINITY);
    Tensor best_point = cur;

    for (std::size_t step = 0; step < p.steps; ++step) {
      std::vector<float> losses;
      const Tensor g = direction(cur, r, step, losses);
      if (observer) observer(r, step, g);
      if (losses.empty()) losses = judge(model, cur, loss_labels).losses;
      for (std::size_t i = 0; i < n; ++i) trace[i].push_back(losses[i]);

      if (p.adaptive) {
        for (std::size_t i = 0; i < n; ++i) {
          const float obj = ascent * losses[i];
          if (obj > best_obj[i]) {
            best_obj[i] = obj;
            std::ranges::copy(cur.example(i), best_point.example(i).begin());
          }
        }
        if ((step + 1) % window == 0) {
          for (std::size_t i = 0; i < n; ++i) {
            if (!(best_obj[i] > checkpoint_obj[i])) {
              alpha[i] *= 0.5f;
              std::ranges::copy(best_point.example(i), cur.example(i).begin());
            }
            checkpoint_obj[i] = best_obj[i];
          }
        }
      }

      for (std::size_t i = 0; i < n; ++i) {
        auto c = cur.example(i);
        auto gi = g.example(i);
        const float a = ascent * alpha[i];
        for (std::size_t j = 0; j < d; ++j) c[j] += a * sign_of(gi[j]);
      }
      cur = project_linf(cur, ball);
    }

    Judged final = judge(model, cur, loss_labels);
    if (p.adaptive && p.steps > 0) {
      for (std::size_t i = 0; i < n; ++i) {
        if (best_obj[i] > ascent * final.losses[i]) {
          std::ranges::copy(best_point.example(i), cur.example(i).begin());
        }
      }
      final = judge(model, cur, loss_labels);
    }

    for (std::size_t i = 0; i < n; ++i) {
      trace[i].push_back(final.losses[i]);
      const bool better =
          r == 0 || (p.targeted ? final.losses[i] < best[i].final_loss
                                : final.losses[i] > best[i].final_loss);
      if (!better) continue;
      AttackOutcome& o = best[i];
      o.adversarial = cur.slice(i, i + 1).reshaped(x.example_shape());
      o.final_loss = final.losses[i];
      o.prediction = final.predictions[i];
      o.success = p.targeted ? o.prediction == loss_labels[i]
                             : o.prediction != labels[i];
      o.steps = p.steps;
      o.loss_trace = std::move(trace[i]);
    }
  }
  for (AttackOutcome& o : best) {
    o.queries = p.queries_per_step * p.steps * p.restarts;
  }
  return best;
}

std::vector<int> repeat_labels(std::span<const int> labels,
                               std::size_t times) {
  std::vector<int> out;
  out.reserve(labels.size() * times);
  for (std::size_t t = 0; t < times; ++t) {
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

// Image geometry of one example for square proposals.
struct Geometry {
  std::size_t c = 1, h = 1, w = 1;
};

Geometry geometry_of(const Shape& s) {
  if (s.size() == 3) return {s[0], s[1], s[2]};
  return {1, 1, numel(s)};
}

float square_fraction(std::size_t iteration, std::size_t budget,
                      float p_init) {
  static constexpr double kMarks[] = {10,   50,   200,  500, 1000,
                                      2000, 4000, 6000, 8000};
  const double scaled =
      double(iteration) * 10000.0 / double(std::max<std::size_t>(budget, 1));
  float p = p_init;
  for (double m : kMarks) {
    if (scaled > m) p *= 0.5f;
  }
  return p;
}

}  // namespace

bool LinfBall::contains(const Tensor& y) const {
  if (y.size() != center.size()) return false;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (!(y[j] >= 0.0f && y[j] <= 1.0f)) return false;
    if (!(std::fabs(y[j] - center[j]) <= radius + 1e-7f)) return false;
  }
  return true;
}

Tensor project_linf(const Tensor& y, const LinfBall& ball) {
  if (y.size() != ball.center.size()) {
    throw ShapeError("cannot project " + to_string(y.shape()) +
                     " onto a ball around " + to_string(ball.center.shape()));
  }
  Tensor out = y;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const float x = ball.center[j];
    out[j] = std::clamp(y[j], lower_bound(x, ball.radius),
                        upper_bound(x, ball.radius));
  }
  return out;
}

Tensor adversarial_batch(std::span<const AttackOutcome> outcomes) {
  std::vector<Tensor> rows;
  rows.reserve(outcomes.size());
  for (const AttackOutcome& o : outcomes) rows.push_back(o.adversarial);
  return stack(rows);
}

double success_rate(std::span<const AttackOutcome> outcomes) {
  if (outcomes.empty()) return 0.0;
  std::size_t hits = 0;
  for (const AttackOutcome& o : outcomes) hits += o.success ? 1 : 0;
  return double(hits) / double(outcomes.size());
}

// ---------------------------------------------------------------------------
// PGD family

std::vector<AttackOutcome> pgd(ModelAccess& model, const Tensor& x,
                               std::span<const int> labels, float epsilon,
                               const PgdConfig& cfg) {
  model.require(ThreatLevel::kGradient, "pgd");
  check_inputs(model, x, labels, epsilon);
  if (cfg.steps < 1) throw PreconditionError("pgd needs at least one step");
  if (cfg.restarts < 1) throw PreconditionError("pgd needs a restart");
  std::span<const int> loss_labels = labels;
  if (cfg.targeted) {
    if (cfg.targets.size() != x.batch()) {
      throw PreconditionError("targeted pgd needs one target label per example");
    }
    check_labels(cfg.targets, model.num_classes());
    loss_labels = cfg.targets;
  }
  SignedPgdParams p;
  p.steps = cfg.steps;
  p.restarts = cfg.restarts;
  p.alpha = resolve_alpha(cfg.alpha, epsilon);
  p.epsilon = epsilon;
  p.random_init = cfg.random_init;
  p.targeted = cfg.targeted;
  p.adaptive = cfg.adaptive;
  p.seed = cfg.seed;
  auto direction = [&](const Tensor& cur, std::size_t, std::size_t,
                       std::vector<float>& losses) {
    InputGradient g = model.gradient(cur, loss_labels);
    losses = std::move(g.losses);
    return std::move(g.grad);
  };
  return signed_pgd(model, x, labels, loss_labels, p, direction,
                    cfg.observer);
}

BlockSpec singleton_blocks(std::size_t features) {
  BlockSpec blocks(features);
  for (std::size_t j = 0; j < features; ++j) blocks[j] = {j};
  return blocks;
}

BlockSpec random_blocks(std::size_t features, std::size_t group, Rng& rng) {
  if (group == 0) throw PreconditionError("block group size must be positive");
  std::vector<std::size_t> order(features);
  for (std::size_t j = 0; j < features; ++j) order[j] = j;
  rng.shuffle(std::span<std::size_t>(order));
  BlockSpec blocks;
  for (std::size_t b = 0; b < features; b += group) {
    const std::size_t e = std::min(features, b + group);
    blocks.emplace_back(order.begin() + long(b), order.begin() + long(e));
  }
  return blocks;
}

void check_partition(const BlockSpec& blocks, std::size_t features) {
  std::vector<char> seen(features, 0);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].empty()) {
      throw PreconditionError("block " + std::to_string(b) + " is empty");
    }
    for (std::size_t j : blocks[b]) {
      if (j >= features) {
        throw PreconditionError("block index " + std::to_string(j) +
                                " outside " + std::to_string(features) +
                                " features");
      }
      if (seen[j]) {
        throw PreconditionError("feature " + std::to_string(j) +
                                " appears in more than one block");
      }
      seen[j] = 1;
    }
  }
  for (std::size_t j = 0; j < features; ++j) {
    if (!seen[j]) {
      throw PreconditionError("feature " + std::to_string(j) +
                              " is not covered by any block");
    }
  }
}

Tensor block_finite_difference(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    float probe, const BlockSpec& blocks) {
  if (!(probe > 0.0f)) throw PreconditionError("probe step must be positive");
  check_partition(blocks, x.size());
  Tensor est(x.shape());
  Tensor plus = x;
  Tensor minus = x;
  for (const auto& block : blocks) {
    for (std::size_t j : block) {
      plus[j] = x[j] + probe;
      minus[j] = x[j] - probe;
    }
    const double diff = f(plus) - f(minus);
    const double g = diff / (2.0 * double(probe) * double(block.size()));
    for (std::size_t j : block) {
      est[j] = static_cast<float>(g);
      plus[j] = x[j];
      minus[j] = x[j];
    }
  }
  return est;
}

Tensor zero_order_grad(ModelAccess& model, const Tensor& x,
                       std::span<const int> labels, float probe,
                       const BlockSpec& blocks) {
  model.require(ThreatLevel::kBlackBoxScores, "zero-order gradient");
  check_inputs(model, x, labels, 0.0f);
  if (!(probe > 0.0f)) throw PreconditionError("probe step must be positive");
  const std::size_t n = x.batch();
  const std::size_t d = x.example_size();
  check_partition(blocks, d);

  Tensor est(x.shape());
  const std::size_t per_query =
      std::max<std::size_t>(1, kMaxRowsPerQuery / std::max<std::size_t>(1, 2 * n));
  for (std::size_t b0 = 0; b0 < blocks.size(); b0 += per_query) {
    const std::size_t b1 = std::min(blocks.size(), b0 + per_query);
    // Rows: for each block, n "plus" examples then n "minus" examples.
    Shape shape = x.shape();
    shape[0] = 2 * n * (b1 - b0);
    Tensor probes(shape);
    for (std::size_t b = b0; b < b1; ++b) {
      for (std::size_t s = 0; s < 2; ++s) {
        const float delta = s == 0 ? probe : -probe;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t row = ((b - b0) * 2 + s) * n + i;
          auto dst = probes.example(row);
          std::ranges::copy(x.example(i), dst.begin());
          for (std::size_t j : blocks[b]) dst[j] += delta;
        }
      }
    }
    const std::vector<int> rep = repeat_labels(labels, 2 * (b1 - b0));
    const std::vector<float> losses = model.losses(probes, rep);
    for (std::size_t b = b0; b < b1; ++b) {
      const double denom = 2.0 * double(probe) * double(blocks[b].size());
      for (std::size_t i = 0; i < n; ++i) {
        const double lp = losses[((b - b0) * 2 + 0) * n + i];
        const double lm = losses[((b - b0) * 2 + 1) * n + i];
        const float g = static_cast<float>((lp - lm) / denom);
        auto dst = est.example(i);
        for (std::size_t j : blocks[b]) dst[j] = g;
      }
    }
  }
  return est;
}

std::vector<AttackOutcome> zero_order_pgd(ModelAccess& model, const Tensor& x,
                                          std::span<const int> labels,
                                          float epsilon,
                                          const ZeroOrderConfig& cfg) {
  model.require(ThreatLevel::kBlackBoxScores, "zero-order pgd");
  check_inputs(model, x, labels, epsilon);
  if (cfg.restarts < 1) throw PreconditionError("zero-order pgd needs a restart");
  if (cfg.group_size < 1) throw PreconditionError("group size must be positive");
  const std::size_t d = x.example_size();
  SignedPgdParams p;
  p.steps = cfg.steps;
  p.restarts = cfg.restarts;
  p.alpha = resolve_alpha(cfg.alpha, epsilon);
  p.epsilon = epsilon;
  p.random_init = cfg.random_init;
  p.seed = cfg.seed;
  p.queries_per_step = 2 * ((d + cfg.group_size - 1) / cfg.group_size);
  const float probe = cfg.probe > 0.0f ? cfg.probe : p.alpha;
  if (cfg.steps > 0 && !(probe > 0.0f)) {
    throw PreconditionError("zero-order pgd needs a positive probe step");
  }
  const Rng blocks_base(cfg.seed, kBlockStream);
  auto direction = [&](const Tensor& cur, std::size_t restart,
                       std::size_t step, std::vector<float>&) {
    Rng rng = blocks_base.fork(restart).fork(step);
    const BlockSpec blocks = random_blocks(d, cfg.group_size, rng);
    return zero_order_grad(model, cur, labels, probe, blocks);
  };
  return signed_pgd(model, x, labels, labels, p, direction, cfg.observer);
}

Tensor eot_grad(ModelAccess& model, const Tensor& x,
                std::span<const int> labels, std::size_t draws) {
  model.require(ThreatLevel::kGradient, "eot gradient");
  if (draws < 1) throw PreconditionError("eot needs at least one draw");
  Tensor mean(x.shape());
  std::vector<double> acc(x.size(), 0.0);
  for (std::size_t k = 0; k < draws; ++k) {
    const InputGradient g = model.gradient(x, labels);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g.grad[j];
  }
  for (std::size_t j = 0; j < acc.size(); ++j) {
    mean[j] = static_cast<float>(acc[j] / double(draws));
  }
  return mean;
}

std::vector<AttackOutcome> eot_pgd(ModelAccess& model, const Tensor& x,
                                   std::span<const int> labels, float epsilon,
                                   const EotConfig& cfg) {
  model.require(ThreatLevel::kGradient, "eot pgd");
  check_inputs(model, x, labels, epsilon);
  if (cfg.steps < 1 || cfg.restarts < 1) {
    throw PreconditionError("eot pgd needs at least one step and restart");
  }
  SignedPgdParams p;
  p.steps = cfg.steps;
  p.restarts = cfg.restarts;
  p.alpha = resolve_alpha(cfg.alpha, epsilon);
  p.epsilon = epsilon;
  p.seed = cfg.seed;
  p.queries_per_step = cfg.draws;
  auto direction = [&](const Tensor& cur, std::size_t, std::size_t,
                       std::vector<float>&) {
    return eot_grad(model, cur, labels, cfg.draws);
  };
  return signed_pgd(model, x, labels, labels, p, direction, {});
}

std::vector<AttackOutcome> bpda_pgd(ModelAccess& model, const Tensor& x,
                                    std::span<const int> labels,
                                    float epsilon, const BpdaConfig& cfg) {
  model.require(ThreatLevel::kFullTrainTime, "bpda");
  model.decomposition();
  check_inputs(model, x, labels, epsilon);
  if (cfg.steps < 1 || cfg.restarts < 1) {
    throw PreconditionError("bpda needs at least one step and restart");
  }
  SignedPgdParams p;
  p.steps = cfg.steps;
  p.restarts = cfg.restarts;
  p.alpha = cfg.alpha > 0.0f ? cfg.alpha : epsilon / 4.0f;
  p.epsilon = epsilon;
  p.random_init = cfg.random_init;
  p.seed = cfg.seed;
  auto direction = [&](const Tensor& cur, std::size_t, std::size_t,
                       std::vector<float>&) {
    // Backbone losses differ from composite losses, so the trace comes
    // from the composite instead.
    return model.backbone_gradient(cur, labels).grad;
  };
  return signed_pgd(model, x, labels, labels, p, direction, {});
}

// ---------------------------------------------------------------------------
// SQUARE-style random search

std::vector<AttackOutcome> square_attack(ModelAccess& model, const Tensor& x,
                                         std::span<const int> labels,
                                         float epsilon,
                                         const SquareConfig& cfg) {
  model.require(ThreatLevel::kBlackBoxScores, "square");
  check_inputs(model, x, labels, epsilon);
  if (!(cfg.p_init > 0.0f) || cfg.p_init > 1.0f) {
    throw PreconditionError("square p_init must lie in (0, 1]");
  }
  const std::size_t n = x.batch();
  const Geometry geo = geometry_of(x.example_shape());
  const bool probs = model.judge().probabilities();
  const LinfBall ball{x, epsilon};

  std::vector<AttackOutcome> out(n);
  std::vector<Rng> rngs;
  rngs.reserve(n);
  const Rng base(cfg.seed, kSquareStream);
  for (std::size_t i = 0; i < n; ++i) rngs.push_back(base.fork(i));

  Tensor cur = x;
  std::vector<float> cur_loss(n, 0.0f);
  std::vector<std::size_t> queries(n, 0);
  std::vector<bool> fooled(n, false);

  if (cfg.budget > 0) {
    // Vertical stripes of +-epsilon, one sign per channel and column.
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = cur.example(i);
      for (std::size_t c = 0; c < geo.c; ++c) {
        for (std::size_t w = 0; w < geo.w; ++w) {
          const float s = rngs[i].below(2) == 0 ? -epsilon : epsilon;
          for (std::size_t h = 0; h < geo.h; ++h) {
            dst[(c * geo.h + h) * geo.w + w] += s;
          }
        }
      }
    }
    cur = project_linf(cur, ball);
    const Tensor scores = model.scores(cur);
    cur_loss = score_losses(scores, labels, probs);
    const std::vector<int> pred = argmax_rows(scores);
    for (std::size_t i = 0; i < n; ++i) {
      queries[i] = 1;
      fooled[i] = pred[i] != labels[i];
      out[i].loss_trace.push_back(cur_loss[i]);
    }
  }

  const std::size_t hw = geo.h * geo.w;
  while (true) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i) {
      if (queries[i] == 0 || queries[i] >= cfg.budget) continue;
      if (cfg.stop_on_success && fooled[i]) continue;
      active.push_back(i);
    }
    if (active.empty()) break;
    for (std::size_t a0 = 0; a0 < active.size(); a0 += kMaxRowsPerQuery) {
      const std::size_t a1 = std::min(active.size(), a0 + kMaxRowsPerQuery);
      Shape shape = x.shape();
      shape[0] = a1 - a0;
      Tensor proposals(shape);
      std::vector<int> rows_labels;
      for (std::size_t a = a0; a < a1; ++a) {
        const std::size_t i = active[a];
        rows_labels.push_back(labels[i]);
        auto dst = proposals.example(a - a0);
        std::ranges::copy(cur.example(i), dst.begin());
        const float p = square_fraction(queries[i] - 1, cfg.budget, cfg.p_init);
        const auto side = std::clamp<std::size_t>(
            std::size_t(std::lround(std::sqrt(double(p) * double(hw)))), 1,
            std::min(geo.h, geo.w));
        Rng& rng = rngs[i];
        const std::size_t h0 = rng.below(geo.h - side + 1);
        const std::size_t w0 = rng.below(geo.w - side + 1);
        auto src = x.example(i);
        for (std::size_t c = 0; c < geo.c; ++c) {
          const float s = rng.below(2) == 0 ? -epsilon : epsilon;
          for (std::size_t h = h0; h < h0 + side; ++h) {
            for (std::size_t w = w0; w < w0 + side; ++w) {
              const std::size_t j = (c * geo.h + h) * geo.w + w;
              dst[j] = std::clamp(src[j] + s, lower_bound(src[j], epsilon),
                                  upper_bound(src[j], epsilon));
            }
          }
        }
      }
      const Tensor scores = model.scores(proposals);
      const std::vector<float> loss = score_losses(scores, rows_labels, probs);
      const std::vector<int> pred = argmax_rows(scores);
      for (std::size_t a = a0; a < a1; ++a) {
        const std::size_t i = active[a];
        ++queries[i];
        if (loss[a - a0] > cur_loss[i]) {
          cur_loss[i] = loss[a - a0];
          std::ranges::copy(proposals.example(a - a0), cur.example(i).begin());
          fooled[i] = pred[a - a0] != labels[i];
        }
        out[i].loss_trace.push_back(cur_loss[i]);
      }
    }
  }

  const Judged final = judge(model, cur, labels);
  for (std::size_t i = 0; i < n; ++i) {
    AttackOutcome& o = out[i];
    o.adversarial = cur.slice(i, i + 1).reshaped(x.example_shape());
    o.final_loss = final.losses[i];
    o.prediction = final.predictions[i];
    o.success = o.prediction != labels[i];
    o.steps = queries[i] > 0 ? queries[i] - 1 : 0;
    o.queries = queries[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transfer

std::vector<AttackOutcome> transfer_attack(ModelAccess& source,
                                           ModelAccess& target,
                                           const Tensor& x,
                                           std::span<const int> labels,
                                           const AttackSpec& inner) {
  target.require(ThreatLevel::kBlackBoxLabels, "transfer target");
  if (source.input_shape() != target.input_shape() ||
      source.num_classes() != target.num_classes()) {
    throw ShapeError("transfer source " + to_string(source.input_shape()) +
                     " and target " + to_string(target.input_shape()) +
                     " are incompatible");
  }
  if (inner.kind == AttackKind::kTransfer) {
    throw ConfigError("transfer attacks cannot be nested");
  }
  std::vector<AttackOutcome> out = run_attack(inner, source, x, labels);
  const Tensor adv = adversarial_batch(out);
  const std::vector<int> pred = target.labels(adv);
  const std::vector<float> losses = target.judge().losses(adv, labels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].prediction = pred[i];
    out[i].success = pred[i] != labels[i];
    out[i].final_loss = losses[i];
    out[i].queries = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spec and dispatch

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone: return "none";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kZeroOrderPgd: return "zo-pgd";
    case AttackKind::kSquare: return "square";
    case AttackKind::kBpda: return "bpda";
    case AttackKind::kTransfer: return "transfer";
    case AttackKind::kEotPgd: return "eot-pgd";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
  for (AttackKind k : {AttackKind::kNone, AttackKind::kPgd,
                       AttackKind::kZeroOrderPgd, AttackKind::kSquare,
                       AttackKind::kBpda, AttackKind::kTransfer,
                       AttackKind::kEotPgd}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown attack kind '" + s + "'");
}

ThreatLevel required_level(AttackKind kind) {
  switch (kind) {
    case AttackKind::kNone:
    case AttackKind::kTransfer: return ThreatLevel::kBlackBoxLabels;
    case AttackKind::kZeroOrderPgd:
    case AttackKind::kSquare: return ThreatLevel::kBlackBoxScores;
    case AttackKind::kPgd:
    case AttackKind::kEotPgd: return ThreatLevel::kGradient;
    case AttackKind::kBpda: return ThreatLevel::kFullTrainTime;
  }
  return ThreatLevel::kFullTrainTime;
}

std::string AttackSpec::label() const {
  const auto sx = [](std::size_t a, std::size_t b) {
    return std::to_string(a) + "x" + std::to_string(b);
  };
  switch (kind) {
    case AttackKind::kNone: return "clean";
    case AttackKind::kPgd:
      return std::string(adaptive ? "apgd-" : "pgd-") + sx(steps, restarts);
    case AttackKind::kZeroOrderPgd: return "zo-pgd-" + sx(steps, restarts);
    case AttackKind::kSquare: return "square-" + std::to_string(budget);
    case AttackKind::kBpda: return "bpda-" + sx(steps, restarts);
    case AttackKind::kEotPgd:
      return "eot-pgd-" + sx(steps, restarts) + "-k" + std::to_string(eot_draws);
    case AttackKind::kTransfer:
      return "transfer" + (source.empty() ? std::string() : "-" + source);
  }
  return "?";
}

AttackSpec default_attack_spec(AttackKind kind, float epsilon,
                               std::uint64_t seed) {
  AttackSpec s;
  s.kind = kind;
  s.epsilon = epsilon;
  s.seed = seed;
  switch (kind) {
    case AttackKind::kNone:
      s.steps = 0;
      s.restarts = 0;
      break;
    case AttackKind::kPgd: s.steps = 50; s.restarts = 5; break;
    case AttackKind::kZeroOrderPgd: s.steps = 10; s.restarts = 1; break;
    case AttackKind::kSquare: s.steps = 0; s.restarts = 1; break;
    case AttackKind::kBpda: s.steps = 10; s.restarts = 5; break;
    case AttackKind::kEotPgd: s.steps = 50; s.restarts = 1; break;
    case AttackKind::kTransfer: {
      s.steps = 50;
      s.restarts = 1;
      auto inner = std::make_shared<AttackSpec>(
          default_attack_spec(AttackKind::kPgd, epsilon, seed));
      inner->restarts = 1;
      s.inner = inner;
      break;
    }
  }
  return s;
}

nlohmann::json to_json(const AttackSpec& s) {
  nlohmann::json j = {
      {"kind", to_string(s.kind)},
      {"steps", s.steps},
      {"alpha", s.resolved_alpha()},
      {"epsilon", s.epsilon},
      {"restarts", s.restarts},
      {"budget", s.budget},
      {"seed", s.seed},
      {"p_init", s.p_init},
      {"eot_draws", s.eot_draws},
      {"group_size", s.group_size},
      {"probe", s.probe > 0.0f ? s.probe : s.resolved_alpha()},
      {"adaptive", s.adaptive},
      {"random_init", s.random_init},
      {"stop_on_success", s.stop_on_success},
  };
  if (s.kind == AttackKind::kTransfer) {
    j["source"] = s.source;
    if (s.inner) j["inner"] = to_json(*s.inner);
  }
  return j;
}

AttackSpec attack_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "kind",    "steps",      "alpha",      "epsilon", "restarts",
      "budget",  "seed",       "p_init",     "eot_draws", "group_size",
      "probe",   "adaptive",   "random_init", "stop_on_success", "source",
      "inner"};
  if (!j.is_object() || !j.contains("kind")) {
    throw ConfigError("attack spec must be an object with a 'kind'");
  }
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) {
      throw ConfigError("unknown attack spec field '" + key + "'");
    }
  }
  try {
    const AttackKind kind = attack_kind_from_string(j.at("kind").get<std::string>());
    const float eps = j.value("epsilon", 8.0f / 255.0f);
    const std::uint64_t seed = j.value("seed", std::uint64_t{0});
    AttackSpec s = default_attack_spec(kind, eps, seed);
    s.steps = j.value("steps", s.steps);
    s.alpha = j.value("alpha", s.alpha);
    s.restarts = j.value("restarts", s.restarts);
    s.budget = j.value("budget", s.budget);
    s.p_init = j.value("p_init", s.p_init);
    s.eot_draws = j.value("eot_draws", s.eot_draws);
    s.group_size = j.value("group_size", s.group_size);
    s.probe = j.value("probe", s.probe);
    s.adaptive = j.value("adaptive", s.adaptive);
    s.random_init = j.value("random_init", s.random_init);
    s.stop_on_success = j.value("stop_on_success", s.stop_on_success);
    s.source = j.value("source", s.source);
    if (j.contains("inner")) {
      s.inner = std::make_shared<AttackSpec>(attack_spec_from_json(j["inner"]));
    }
    if (s.alpha < 0.0f || s.epsilon < 0.0f || s.epsilon > 1.0f) {
      throw ConfigError("attack spec needs alpha >= 0 and epsilon in [0, 1]");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed attack spec: ") + e.what());
  }
}

std::vector<AttackOutcome> run_attack(const AttackSpec& spec,
                                      ModelAccess& target, const Tensor& x,
                                      std::span<const int> labels,
                                      ModelAccess* source) {
  target.require(required_level(spec.kind), to_string(spec.kind));
  switch (spec.kind) {
    case AttackKind::kNone: {
      check_inputs(target, x, labels, 0.0f);
      const Judged j = judge(target, x, labels);
      std::vector<AttackOutcome> out(x.batch());
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].adversarial = x.slice(i, i + 1).reshaped(x.example_shape());
        out[i].prediction = j.predictions[i];
        out[i].success = j.predictions[i] != labels[i];
        out[i].final_loss = j.losses[i];
      }
      return out;
    }
    case AttackKind::kPgd: {
      PgdConfig c;
      c.steps = spec.steps;
      c.alpha = spec.alpha;
      c.restarts = spec.restarts;
      c.random_init = spec.random_init;
      c.adaptive = spec.adaptive;
      c.seed = spec.seed;
      return pgd(target, x, labels, spec.epsilon, c);
    }
    case AttackKind::kZeroOrderPgd: {
      ZeroOrderConfig c;
      c.steps = spec.steps;
      c.alpha = spec.alpha;
      c.restarts = spec.restarts;
      c.probe = spec.probe;
      c.group_size = spec.group_size;
      c.random_init = spec.random_init;
      c.seed = spec.seed;
      return zero_order_pgd(target, x, labels, spec.epsilon, c);
    }
    case AttackKind::kSquare: {
      SquareConfig c;
      c.budget = spec.budget;
      c.p_init = spec.p_init;
      c.stop_on_success = spec.stop_on_success;
      c.seed = spec.seed;
      return square_attack(target, x, labels, spec.epsilon, c);
    }
    case AttackKind::kBpda: {
      BpdaConfig c;
      c.steps = spec.steps;
      c.alpha = spec.alpha;
      c.restarts = spec.restarts;
      c.random_init = spec.random_init;
      c.seed = spec.seed;
      return bpda_pgd(target, x, labels, spec.epsilon, c);
    }
    case AttackKind::kEotPgd: {
      EotConfig c;
      c.steps = spec.steps;
      c.alpha = spec.alpha;
      c.restarts = spec.restarts;
      c.draws = spec.eot_draws;
      c.seed = spec.seed;
      return eot_pgd(target, x, labels, spec.epsilon, c);
    }
    case AttackKind::kTransfer: {
      if (!source) throw ConfigError("transfer attack needs a source model");
      const AttackSpec inner =
          spec.inner ? *spec.inner
                     : *default_attack_spec(AttackKind::kTransfer, spec.epsilon,
                                            spec.seed)
                            .inner;
      return transfer_attack(*source, target, x, labels, inner);
    }
  }
  throw ConfigError("unhandled attack kind");
}

}  // namespace advmask
