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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "advmask/classifier.hpp"
#include "advmask/models.hpp"
#include "advmask/rng.hpp"
#include "advmask/threat.hpp"

namespace advmask {

/// L-infinity ball of `radius` around `center`, intersected with [0, 1].
/// `center` may be a single example or a batch.
struct LinfBall {
  Tensor center;
  float radius = 0.0f;

  bool contains(const Tensor& y) const;
};

/// Elementwise clamp to [x - eps, x + eps] and [0, 1].
Tensor project_linf(const Tensor& y, const LinfBall& ball);

struct AttackOutcome {
  Tensor adversarial;           ///< one example, shape [C, H, W]
  bool success = false;
  int prediction = -1;          ///< judged prediction on `adversarial`
  float final_loss = 0.0f;      ///< loss at `adversarial` (attacked label)
  std::size_t steps = 0;
  std::size_t queries = 0;      ///< attacker forwards + gradient evaluations
  std::vector<float> loss_trace;
};

/// Stacks the adversarial examples of a batch of outcomes.
Tensor adversarial_batch(std::span<const AttackOutcome> outcomes);
double success_rate(std::span<const AttackOutcome> outcomes);

/// Called with (restart, step, gradient-or-estimate) at every PGD step.
using GradientObserver =
    std::function<void(std::size_t, std::size_t, const Tensor&)>;

struct PgdConfig {
  std::size_t steps = 50;
  float alpha = 0.0f;        ///< 0 selects epsilon / 8
  std::size_t restarts = 5;
  bool targeted = false;
  std::vector<int> targets;  ///< per example, required when targeted
  bool random_init = true;   ///< uniform start in the ball
  /// Loss-adaptive variant: halve the step and return to the best point
  /// when a checkpoint window brings no improvement.
  bool adaptive = false;
  std::uint64_t seed = 0;
  GradientObserver observer;
};

/// Projected signed-gradient ascent (descent when targeted) with restarts.
/// Returns, per example, the restart with the largest (smallest when
/// targeted) final loss. Requires gradient access.
std::vector<AttackOutcome> pgd(ModelAccess& model, const Tensor& x,
                               std::span<const int> labels, float epsilon,
                               const PgdConfig& cfg);

/// Partition of the per-example feature indices into blocks.
using BlockSpec = std::vector<std::vector<std::size_t>>;

BlockSpec singleton_blocks(std::size_t features);
/// Random partition into groups of `group` features (last may be smaller).
BlockSpec random_blocks(std::size_t features, std::size_t group, Rng& rng);
/// Throws PreconditionError unless `blocks` partitions [0, features).
void check_partition(const BlockSpec& blocks, std::size_t features);

/// Two-sided block finite differences of a scalar function of one example:
/// [f(x + a 1_b) - f(x - a 1_b)] / (2 a |b|), broadcast over block b.
Tensor block_finite_difference(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    float probe, const BlockSpec& blocks);

/// Batched block estimate of each example's loss gradient from loss
/// queries only. Costs 2 * |blocks| queries per example.
Tensor zero_order_grad(ModelAccess& model, const Tensor& x,
                       std::span<const int> labels, float probe,
                       const BlockSpec& blocks);

struct ZeroOrderConfig {
  std::size_t steps = 10;
  float alpha = 0.0f;          ///< PGD step, 0 selects epsilon / 8
  std::size_t restarts = 1;
  float probe = 0.0f;          ///< finite-difference step, 0 selects alpha
  std::size_t group_size = 5;  ///< features per block, reshuffled per step
  bool random_init = true;
  std::uint64_t seed = 0;
  GradientObserver observer;
};

/// PGD driven by zero_order_grad estimates. Requires score access.
std::vector<AttackOutcome> zero_order_pgd(ModelAccess& model, const Tensor& x,
                                          std::span<const int> labels,
                                          float epsilon,
                                          const ZeroOrderConfig& cfg);

/// Mean of `draws` independent ensemble gradient draws.
Tensor eot_grad(ModelAccess& model, const Tensor& x,
                std::span<const int> labels, std::size_t draws);

struct EotConfig {
  std::size_t steps = 50;
  float alpha = 0.0f;
  std::size_t restarts = 1;
  std::size_t draws = 20;
  std::uint64_t seed = 0;
};

/// PGD whose direction is the EOT-averaged gradient.
std::vector<AttackOutcome> eot_pgd(ModelAccess& model, const Tensor& x,
                                   std::span<const int> labels, float epsilon,
                                   const EotConfig& cfg);

struct SquareConfig {
  std::size_t budget = 5000;   ///< max queries per example
  float p_init = 0.8f;         ///< initial fraction of pixels per square
  bool stop_on_success = true;
  std::uint64_t seed = 0;
};

/// Score-based random search over square +-epsilon patches. A proposal is
/// accepted only if it strictly increases the loss.
std::vector<AttackOutcome> square_attack(ModelAccess& model, const Tensor& x,
                                         std::span<const int> labels,
                                         float epsilon,
                                         const SquareConfig& cfg);

struct BpdaConfig {
  std::size_t steps = 10;
  float alpha = 0.0f;  ///< 0 selects epsilon / 4
  std::size_t restarts = 5;
  bool random_init = true;
  std::uint64_t seed = 0;
};

/// PGD on a composite h(f(x)) whose update direction is the backbone's
/// gradient at the raw input, sign(grad_x L(h(x), y)), while loss and
/// success use the full composite. Requires full-train-time access.
std::vector<AttackOutcome> bpda_pgd(ModelAccess& model, const Tensor& x,
                                    std::span<const int> labels,
                                    float epsilon, const BpdaConfig& cfg);

// ---------------------------------------------------------------------------
// Serializable attack description and dispatcher.

enum class AttackKind { kNone, kPgd, kZeroOrderPgd, kSquare, kBpda, kTransfer,
                        kEotPgd };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);
/// Access level each attack needs from its target.
ThreatLevel required_level(AttackKind kind);

struct AttackSpec {
  AttackKind kind = AttackKind::kPgd;
  std::size_t steps = 50;
  float alpha = 0.0f;  ///< 0 selects epsilon / 8 (epsilon / 4 for bpda)
  float epsilon = 8.0f / 255.0f;
  std::size_t restarts = 5;
  std::size_t budget = 5000;
  std::uint64_t seed = 0;
  float p_init = 0.8f;
  std::size_t eot_draws = 20;
  std::size_t group_size = 5;
  float probe = 0.0f;
  bool adaptive = false;
  bool random_init = true;
  bool stop_on_success = true;  ///< SQUARE only
  /// Transfer only: name of the source model and the attack run on it.
  std::string source;
  std::shared_ptr<AttackSpec> inner;

  /// The step size actually used.
  float resolved_alpha() const {
    if (alpha > 0.0f) return alpha;
    return kind == AttackKind::kBpda ? epsilon / 4.0f : epsilon / 8.0f;
  }
  /// Short label, e.g. "pgd-50x5".
  std::string label() const;
};

nlohmann::json to_json(const AttackSpec& spec);
AttackSpec attack_spec_from_json(const nlohmann::json& j);

/// Defaults used in reports for each kind (50x5 PGD, 10x1 zero-order,
/// 5000-query SQUARE, 10x5 BPDA, 50-step PGD transfer, 20-draw EOT).
AttackSpec default_attack_spec(AttackKind kind, float epsilon,
                               std::uint64_t seed);

/// Runs `spec` against `target`. Transfer attacks craft on `source`
/// (gradient access) and query the target once per example.
std::vector<AttackOutcome> run_attack(const AttackSpec& spec,
                                      ModelAccess& target, const Tensor& x,
                                      std::span<const int> labels,
                                      ModelAccess* source = nullptr);

/// Crafts on `source`, judges on `target`.
std::vector<AttackOutcome> transfer_attack(ModelAccess& source,
                                           ModelAccess& target,
                                           const Tensor& x,
                                           std::span<const int> labels,
                                           const AttackSpec& inner);

}  // namespace advmask
