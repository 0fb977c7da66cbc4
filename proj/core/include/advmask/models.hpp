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
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "advmask/classifier.hpp"
#include "advmask/graph.hpp"
#include "advmask/rng.hpp"

namespace advmask {

// ---------------------------------------------------------------------------
// Front-end: residual denoiser, output = input - noise(input).

enum class FrontEndInit {
  kZero,         ///< every weight zero: exact identity, residual branch dead
  kSmallRandom,  ///< every conv weight ~ N(0, init_std^2)
  kZeroLast,     ///< He-initialized hidden convs, zero final conv: exact
                 ///< identity that still receives gradients
};

struct FrontEndSpec {
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t features = 16;
  std::size_t depth = 5;  ///< conv layers in the residual branch, >= 2
  FrontEndInit init = FrontEndInit::kSmallRandom;
  float init_std = 1e-3f;
  /// Without the skip the branch output is the image itself (ablation).
  bool skip = true;
  std::uint64_t seed = 0;
};

/// conv+ReLU, (depth-2) x conv+BN+ReLU, conv; subtracted from the input.
Graph frontend_new(const FrontEndSpec& spec);

// ---------------------------------------------------------------------------
// Backbones.

enum class BackboneKind { kSmallConvNet, kMlp };

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kSmallConvNet;
  Shape input = {1, 16, 16};
  std::size_t classes = 4;
  std::size_t width = 8;     ///< conv channels
  std::size_t blocks = 2;    ///< residual conv blocks
  bool batch_norm = true;
  std::vector<std::size_t> hidden = {64};  ///< MLP hidden widths
  std::uint64_t seed = 0;
};

Graph backbone_new(const BackboneSpec& spec);

// ---------------------------------------------------------------------------
// Composite h(f(x)).

class CompositeModel : public Classifier {
 public:
  CompositeModel(Graph front, Network back);

  const Shape& input_shape() const override { return front_.input_shape(); }
  std::size_t num_classes() const override { return back_.num_classes(); }
  Tensor scores(const Tensor& batch) const override;
  bool probabilities() const override { return back_.probabilities(); }
  InputGradient input_gradient(const Tensor& batch,
                               std::span<const int> labels) const override;

  /// Loss and gradients. Parameter gradients are keyed "front/<name>" and
  /// "back/<name>" and omitted for frozen parameters.
  LossAndGrad loss_and_grad(const Tensor& batch, std::span<const int> labels,
                            Reduction reduction = Reduction::kMean,
                            bool with_params = true) const;

  Graph& front() { return front_; }
  const Graph& front() const { return front_; }
  Network& back() { return back_; }
  const Network& back() const { return back_; }

  void set_backbone_frozen(bool frozen) { back_.graph().set_frozen(frozen); }
  /// True when every backbone parameter is frozen.
  bool backbone_frozen() const;

 private:
  Graph front_;
  Network back_;
};

// ---------------------------------------------------------------------------
// Randomized ensemble: every query is answered by one member drawn from a
// seeded stream with the declared probabilities.

class RandomizedEnsemble : public Classifier {
 public:
  RandomizedEnsemble(std::vector<std::shared_ptr<const Classifier>> members,
                     std::vector<double> probabilities, std::uint64_t seed);
  static RandomizedEnsemble uniform(
      std::vector<std::shared_ptr<const Classifier>> members,
      std::uint64_t seed);

  RandomizedEnsemble(const RandomizedEnsemble&) = delete;
  RandomizedEnsemble& operator=(const RandomizedEnsemble&) = delete;
  RandomizedEnsemble(RandomizedEnsemble&& other) noexcept;

  const Shape& input_shape() const override;
  std::size_t num_classes() const override;
  /// One draw per example, in row order.
  Tensor scores(const Tensor& batch) const override;
  bool probabilities() const override;
  /// One draw per example; the gradient is that member's.
  InputGradient input_gradient(const Tensor& batch,
                               std::span<const int> labels) const override;

  /// Next member index from the stream.
  std::size_t draw() const;
  /// Same members and probabilities, independent stream for a worker.
  RandomizedEnsemble fork(std::uint64_t sub) const;

  std::size_t size() const { return members_.size(); }
  const Classifier& member(std::size_t i) const { return *members_.at(i); }
  const std::vector<std::shared_ptr<const Classifier>>& members() const {
    return members_;
  }
  const std::vector<double>& probabilities_vector() const { return probs_; }
  std::vector<std::size_t> selection_counts() const;

 private:
  RandomizedEnsemble(std::vector<std::shared_ptr<const Classifier>> members,
                     std::vector<double> probabilities, Rng stream);
  std::vector<std::size_t> draw_rows(std::size_t n) const;

  std::vector<std::shared_ptr<const Classifier>> members_;
  std::vector<double> probs_;
  mutable std::mutex mu_;
  mutable Rng stream_;
  mutable std::vector<std::size_t> counts_;
};

/// Class probabilities from one drawn member.
Tensor ensemble_predict(const RandomizedEnsemble& e, const Tensor& x);
/// One drawn member's input gradient.
InputGradient ensemble_gradient(const RandomizedEnsemble& e, const Tensor& x,
                                std::span<const int> labels);

/// Deterministic source ensemble used to craft transfer attacks: loss is the
/// sum of member cross-entropies, prediction the mean member probability.
class LossSumEnsemble : public Classifier {
 public:
  explicit LossSumEnsemble(
      std::vector<std::shared_ptr<const Classifier>> members);

  const Shape& input_shape() const override;
  std::size_t num_classes() const override;
  Tensor scores(const Tensor& batch) const override;
  bool probabilities() const override { return true; }
  InputGradient input_gradient(const Tensor& batch,
                               std::span<const int> labels) const override;
  std::vector<float> losses(const Tensor& batch,
                            std::span<const int> labels) const override;

 private:
  std::vector<std::shared_ptr<const Classifier>> members_;
};

// ---------------------------------------------------------------------------
// Architecture descriptions for checkpoints and configs.

nlohmann::json to_json(const FrontEndSpec& spec);
nlohmann::json to_json(const BackboneSpec& spec);
FrontEndSpec frontend_spec_from_json(const nlohmann::json& j);
BackboneSpec backbone_spec_from_json(const nlohmann::json& j);
std::string to_string(FrontEndInit init);
std::string to_string(BackboneKind kind);

}  // namespace advmask
