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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "advmask/attacks.hpp"
#include "advmask/dataset.hpp"
#include "advmask/threat.hpp"

namespace advmask {

/// Two-sided 99% normal quantile.
inline constexpr double kZ99 = 2.576;

struct AccuracyEstimate {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t n = 0;
  /// Normal-approximation half-width; absent when accuracy is 0 or 1.
  std::optional<double> ci99;
};

/// Throws PreconditionError when n == 0 or correct > n.
AccuracyEstimate confidence_interval(std::size_t correct, std::size_t n);
/// Estimate from per-example success flags (correct = not successful).
AccuracyEstimate robust_accuracy(std::span<const AttackOutcome> outcomes);

nlohmann::json to_json(const AccuracyEstimate& e);
/// "0.912 +- 0.033" or "1.000" without an interval.
std::string format_estimate(const AccuracyEstimate& e);

// ---------------------------------------------------------------------------
// Gradient tracing.

struct GradientTraceReport {
  std::size_t nan_count = 0;
  std::size_t inf_count = 0;
  std::size_t values = 0;          ///< gradient entries inspected
  std::size_t records = 0;         ///< (restart, step, example) triples
  double small_threshold = 0.01;
  double small_fraction = 0.0;     ///< share of entries with |g| < threshold
  /// Mean and median over records of the per-record mean |g|.
  double mean = 0.0;
  double median = 0.0;
  /// Quantiles of |g| over all entries: element floor(q * (values - 1)) of
  /// the ascending order.
  double q01 = 0.0;
  double q50 = 0.0;
  double q99 = 0.0;
};

struct GradientTrace {
  GradientTraceReport report;
  /// Raw gradients, record after record, each `per_record` entries long.
  std::vector<float> raw;
  std::size_t per_record = 0;
};

/// Aggregates a raw dump of finite gradients.
GradientTraceReport summarize_gradients(std::span<const float> raw,
                                        std::size_t per_record,
                                        double small_threshold = 0.01);

/// Runs PGD (`spec.kind` must be pgd) recording every step's input
/// gradient. Throws NumericalError naming the restart and step of the first
/// non-finite gradient entry.
GradientTrace gradient_trace(ModelAccess& model, const Dataset& data,
                             const AttackSpec& spec, bool keep_raw = false);

nlohmann::json to_json(const GradientTraceReport& r);

// ---------------------------------------------------------------------------
// Epsilon sweep.

struct SweepPoint {
  float radius = 0.0f;
  AccuracyEstimate estimate;
};

struct SweepCurve {
  std::string attack;  ///< attack label at the nominal radius
  std::vector<SweepPoint> points;
};

/// `count` log-spaced radii from lo to hi inclusive.
std::vector<float> log_spaced_radii(float lo, float hi, std::size_t count);
/// Eight log-spaced radii from epsilon / 4 to 1.
std::vector<float> default_sweep_radii(float epsilon);

/// Robust accuracy of `model` at every radius. Radius 0 is clean accuracy;
/// other radii rerun `spec` with epsilon replaced (a zero alpha keeps
/// scaling with the radius). Radii must be ascending and non-negative.
SweepCurve epsilon_sweep(ModelAccess& model, const Dataset& data,
                         const AttackSpec& spec, std::span<const float> radii);

/// radius,accuracy,correct,n,ci99 (empty ci99 when absent).
std::string to_csv(const SweepCurve& curve);
nlohmann::json to_json(const SweepCurve& curve);
/// Line plot of one or more curves with 99% interval bars.
std::string to_svg(std::span<const SweepCurve> curves);

// ---------------------------------------------------------------------------
// Masking indicators.

struct MaskingThresholds {
  double black_box_points = 20.0;
  double bpda_points = 20.0;
};

/// Accuracies of one model under the indicator battery.
struct MaskingMeasurements {
  AccuracyEstimate clean;
  AccuracyEstimate pgd;
  std::optional<AccuracyEstimate> zero_order;
  std::optional<AccuracyEstimate> square;
  std::optional<AccuracyEstimate> bpda;  ///< absent without a front-end
  /// Accuracy at the largest sweep radius, for this and a reference model.
  std::optional<double> sweep_tail;
  std::optional<double> reference_sweep_tail;
};

struct MaskingReport {
  MaskingMeasurements measured;
  MaskingThresholds thresholds;
  /// Accuracy differences in percentage points.
  double black_box_gap = 0.0;  ///< PGD minus the best black-box attack
  double bpda_gap = 0.0;       ///< PGD minus BPDA, 0 without a front-end
  std::optional<double> sweep_gap;  ///< tail minus reference tail
  bool masking_suspected = false;
};

/// Pure verdict from measured accuracies.
MaskingReport masking_verdict(const MaskingMeasurements& m,
                              const MaskingThresholds& thresholds = {});

struct MaskingConfig {
  float epsilon = 8.0f / 255.0f;
  std::uint64_t seed = 0;
  bool black_box = true;  ///< run zero-order PGD and SQUARE
  bool sweep = false;     ///< include the sweep tail
  MaskingThresholds thresholds;
  /// Overrides of the default battery.
  std::optional<AttackSpec> pgd;
  std::optional<AttackSpec> zero_order;
  std::optional<AttackSpec> square;
  std::optional<AttackSpec> bpda;
};

/// Runs the indicator battery on `model` (BPDA only when it exposes a
/// front-end decomposition) and returns the verdict. `reference`, when
/// given, is swept with the same PGD for the slope indicator.
MaskingReport masking_report(ModelAccess& model, const Dataset& data,
                             const MaskingConfig& cfg,
                             ModelAccess* reference = nullptr);

nlohmann::json to_json(const MaskingReport& r);

}  // namespace advmask
