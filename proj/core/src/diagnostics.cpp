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

#include "advmask/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "advmask/errors.hpp"
#include "advmask/training.hpp"

namespace advmask {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

double order_statistic(std::vector<float>& values, double q) {
  const auto k = static_cast<std::size_t>(
      std::floor(q * double(values.size() - 1)));
  std::nth_element(values.begin(), values.begin() + std::ptrdiff_t(k),
                   values.end());
  return values[k];
}

double points(double a, double b) { return 100.0 * (a - b); }

AttackSpec battery_spec(const std::optional<AttackSpec>& override_spec,
                        AttackKind kind, const MaskingConfig& cfg) {
  if (override_spec) return *override_spec;
  return default_attack_spec(kind, cfg.epsilon, cfg.seed);
}

AccuracyEstimate run_estimate(const AttackSpec& spec, ModelAccess& model,
                              const Dataset& data) {
  const auto outcomes = run_attack(spec, model, data.images, data.labels);
  return robust_accuracy(outcomes);
}

}  // namespace

AccuracyEstimate confidence_interval(std::size_t correct, std::size_t n) {
  if (n == 0) throw PreconditionError("confidence interval with n = 0");
  if (correct > n) {
    throw PreconditionError("correct count " + std::to_string(correct) +
                            " exceeds n = " + std::to_string(n));
  }
  AccuracyEstimate e;
  e.correct = correct;
  e.n = n;
  e.accuracy = double(correct) / double(n);
  if (correct != 0 && correct != n) {
    e.ci99 = kZ99 * std::sqrt(e.accuracy * (1.0 - e.accuracy) / double(n));
  }
  return e;
}

AccuracyEstimate robust_accuracy(std::span<const AttackOutcome> outcomes) {
  std::size_t correct = 0;
  for (const AttackOutcome& o : outcomes) correct += o.success ? 0 : 1;
  return confidence_interval(correct, outcomes.size());
}

nlohmann::json to_json(const AccuracyEstimate& e) {
  return {{"accuracy", e.accuracy},
          {"correct", e.correct},
          {"n", e.n},
          {"ci99", optional_json(e.ci99)}};
}

std::string format_estimate(const AccuracyEstimate& e) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << e.accuracy;
  if (e.ci99) os << " +- " << *e.ci99;
  return os.str();
}

// ---------------------------------------------------------------------------

GradientTraceReport summarize_gradients(std::span<const float> raw,
                                        std::size_t per_record,
                                        double small_threshold) {
  if (per_record == 0 || raw.size() % per_record != 0) {
    throw ShapeError("gradient dump of " + std::to_string(raw.size()) +
                     " values is not a whole number of records of " +
                     std::to_string(per_record));
  }
  GradientTraceReport r;
  r.small_threshold = small_threshold;
  r.records = raw.size() / per_record;

  std::vector<float> mags;
  mags.reserve(raw.size());
  std::vector<float> record_means;
  record_means.reserve(r.records);
  std::size_t small = 0;
  for (std::size_t k = 0; k < r.records; ++k) {
    double sum = 0.0;
    std::size_t finite = 0;
    for (std::size_t j = 0; j < per_record; ++j) {
      const float g = raw[k * per_record + j];
      if (std::isnan(g)) {
        ++r.nan_count;
        continue;
      }
      if (std::isinf(g)) {
        ++r.inf_count;
        continue;
      }
      const float a = std::fabs(g);
      mags.push_back(a);
      small += a < small_threshold ? 1 : 0;
      sum += a;
      ++finite;
    }
    if (finite > 0) record_means.push_back(float(sum / double(finite)));
  }
  r.values = mags.size();
  if (mags.empty()) return r;

  r.small_fraction = double(small) / double(mags.size());
  double total = 0.0;
  for (float m : record_means) total += m;
  r.mean = total / double(record_means.size());
  r.median = order_statistic(record_means, 0.5);
  r.q01 = order_statistic(mags, 0.01);
  r.q50 = order_statistic(mags, 0.50);
  r.q99 = order_statistic(mags, 0.99);
  return r;
}

GradientTrace gradient_trace(ModelAccess& model, const Dataset& data,
                             const AttackSpec& spec, bool keep_raw) {
  if (spec.kind != AttackKind::kPgd) {
    throw ConfigError("gradient tracing runs pgd, got " + to_string(spec.kind));
  }
  data.validate();
  const std::size_t per = data.images.example_size();
  std::vector<float> raw;

  PgdConfig c;
  c.steps = spec.steps;
  c.alpha = spec.alpha;
  c.restarts = spec.restarts;
  c.random_init = spec.random_init;
  c.adaptive = spec.adaptive;
  c.seed = spec.seed;
  c.observer = [&](std::size_t restart, std::size_t step, const Tensor& g) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericalError(
            std::string(std::isnan(g[j]) ? "NaN" : "Inf") +
            " input gradient at restart " + std::to_string(restart) +
            ", step " + std::to_string(step) + ", example " +
            std::to_string(j / per));
      }
    }
    raw.insert(raw.end(), g.values().begin(), g.values().end());
  };
  try {
    pgd(model, data.images, data.labels, spec.epsilon, c);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("gradient trace: ") + e.what(), e.node());
  }

  GradientTrace t;
  t.per_record = per;
  t.report = summarize_gradients(raw, per);
  if (keep_raw) t.raw = std::move(raw);
  return t;
}

nlohmann::json to_json(const GradientTraceReport& r) {
  return {{"nan_count", r.nan_count},
          {"inf_count", r.inf_count},
          {"values", r.values},
          {"records", r.records},
          {"small_threshold", r.small_threshold},
          {"small_fraction", r.small_fraction},
          {"mean", r.mean},
          {"median", r.median},
          {"quantiles", {{"q01", r.q01}, {"q50", r.q50}, {"q99", r.q99}}}};
}

// ---------------------------------------------------------------------------

std::vector<float> log_spaced_radii(float lo, float hi, std::size_t count) {
  if (!(lo > 0.0f && hi >= lo) || count == 0) {
    throw PreconditionError("log-spaced radii need 0 < lo <= hi and count > 0");
  }
  std::vector<float> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(double(lo));
  const double b = std::log(double(hi));
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = float(std::exp(a + (b - a) * double(i) / double(count - 1)));
  }
  out.back() = hi;
  return out;
}

std::vector<float> default_sweep_radii(float epsilon) {
  return log_spaced_radii(epsilon / 4.0f, 1.0f, 8);
}

SweepCurve epsilon_sweep(ModelAccess& model, const Dataset& data,
                         const AttackSpec& spec, std::span<const float> radii) {
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] >= 0.0f)) {
      throw PreconditionError("negative sweep radius " +
                              std::to_string(radii[i]));
    }
    if (i > 0 && radii[i] < radii[i - 1]) {
      throw PreconditionError("sweep radii must be ascending");
    }
  }
  if (spec.kind == AttackKind::kTransfer) {
    throw ConfigError("epsilon sweep does not support transfer attacks");
  }
  data.validate();
  SweepCurve curve;
  curve.attack = spec.label();
  for (float r : radii) {
    SweepPoint pt;
    pt.radius = r;
    if (r == 0.0f || spec.kind == AttackKind::kNone) {
      pt.estimate = confidence_interval(count_correct(model.judge(), data),
                                        data.size());
    } else {
      AttackSpec at = spec;
      at.epsilon = r;
      pt.estimate = run_estimate(at, model, data);
    }
    curve.points.push_back(pt);
  }
  return curve;
}

std::string to_csv(const SweepCurve& curve) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "radius,accuracy,correct,n,ci99\n";
  for (const SweepPoint& p : curve.points) {
    os << p.radius << ',' << p.estimate.accuracy << ',' << p.estimate.correct
       << ',' << p.estimate.n << ',';
    if (p.estimate.ci99) os << *p.estimate.ci99;
    os << '\n';
  }
  return os.str();
}

nlohmann::json to_json(const SweepCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (const SweepPoint& p : curve.points) {
    nlohmann::json e = to_json(p.estimate);
    e["radius"] = p.radius;
    pts.push_back(e);
  }
  return {{"attack", curve.attack}, {"points", pts}};
}

std::string to_svg(std::span<const SweepCurve> curves) {
  constexpr double kW = 520, kH = 340, kL = 56, kR = 140, kT = 20, kB = 44;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  double rmax = 0.0;
  for (const SweepCurve& c : curves) {
    for (const SweepPoint& p : c.points) rmax = std::max(rmax, double(p.radius));
  }
  if (rmax <= 0.0) rmax = 1.0;
  auto px = [&](double r) { return kL + (kW - kL - kR) * r / rmax; };
  auto py = [&](double a) { return kT + (kH - kT - kB) * (1.0 - a); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
     << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << py(0) << "\" x2=\"" << kW - kR
     << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << py(0) << "\" x2=\"" << kL
     << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double a = k / 4.0;
    const double r = rmax * k / 4.0;
    os << "<text x=\"" << kL - 6 << "\" y=\"" << py(a) + 4
       << "\" text-anchor=\"end\">" << a << "</text>\n";
    os << "<text x=\"" << px(r) << "\" y=\"" << py(0) + 16
       << "\" text-anchor=\"middle\">" << std::setprecision(3) << r
       << std::setprecision(2) << "</text>\n";
  }
  os << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 8
     << "\" text-anchor=\"middle\">radius</text>\n";
  os << "<text x=\"14\" y=\"" << (kT + kH - kB) / 2
     << "\" transform=\"rotate(-90 14 " << (kT + kH - kB) / 2
     << ")\" text-anchor=\"middle\">accuracy</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const SweepPoint& p : curves[c].points) {
      os << px(p.radius) << ',' << py(p.estimate.accuracy) << ' ';
    }
    os << "\"/>\n";
    for (const SweepPoint& p : curves[c].points) {
      const double x = px(p.radius);
      const double a = p.estimate.accuracy;
      os << "<circle cx=\"" << x << "\" cy=\"" << py(a) << "\" r=\"2.5\" fill=\""
         << color << "\"/>\n";
      if (p.estimate.ci99) {
        const double lo = std::max(0.0, a - *p.estimate.ci99);
        const double hi = std::min(1.0, a + *p.estimate.ci99);
        os << "<line x1=\"" << x << "\" y1=\"" << py(lo) << "\" x2=\"" << x
           << "\" y2=\"" << py(hi) << "\" stroke=\"" << color << "\"/>\n";
      }
    }
    os << "<text x=\"" << kW - kR + 10 << "\" y=\"" << kT + 14 * (c + 1)
       << "\" fill=\"" << color << "\">" << curves[c].attack << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------

MaskingReport masking_verdict(const MaskingMeasurements& m,
                              const MaskingThresholds& thresholds) {
  MaskingReport r;
  r.measured = m;
  r.thresholds = thresholds;
  std::optional<double> best_black_box;
  for (const auto& e : {m.zero_order, m.square}) {
    if (e && (!best_black_box || e->accuracy < *best_black_box)) {
      best_black_box = e->accuracy;
    }
  }
  if (best_black_box) r.black_box_gap = points(m.pgd.accuracy, *best_black_box);
  if (m.bpda) r.bpda_gap = points(m.pgd.accuracy, m.bpda->accuracy);
  if (m.sweep_tail && m.reference_sweep_tail) {
    r.sweep_gap = points(*m.sweep_tail, *m.reference_sweep_tail);
  }
  // Gaps come from rounded fractions; a tie with the threshold is not a flag.
  constexpr double kTol = 1e-9;
  r.masking_suspected = r.black_box_gap > thresholds.black_box_points + kTol ||
                        r.bpda_gap > thresholds.bpda_points + kTol;
  return r;
}

MaskingReport masking_report(ModelAccess& model, const Dataset& data,
                             const MaskingConfig& cfg, ModelAccess* reference) {
  data.validate();
  MaskingMeasurements m;
  m.clean = confidence_interval(count_correct(model.judge(), data), data.size());
  const AttackSpec pgd_spec = battery_spec(cfg.pgd, AttackKind::kPgd, cfg);
  m.pgd = run_estimate(pgd_spec, model, data);
  if (cfg.black_box) {
    m.zero_order = run_estimate(
        battery_spec(cfg.zero_order, AttackKind::kZeroOrderPgd, cfg), model,
        data);
    m.square = run_estimate(battery_spec(cfg.square, AttackKind::kSquare, cfg),
                            model, data);
  }
  if (model.decomposable() &&
      model.level() >= required_level(AttackKind::kBpda)) {
    m.bpda = run_estimate(battery_spec(cfg.bpda, AttackKind::kBpda, cfg), model,
                          data);
  }
  if (cfg.sweep) {
    const std::vector<float> radii = default_sweep_radii(cfg.epsilon);
    const std::vector<float> tail = {radii.back()};
    m.sweep_tail =
        epsilon_sweep(model, data, pgd_spec, tail).points.back().estimate.accuracy;
    if (reference) {
      m.reference_sweep_tail = epsilon_sweep(*reference, data, pgd_spec, tail)
                                   .points.back()
                                   .estimate.accuracy;
    }
  }
  return masking_verdict(m, cfg.thresholds);
}

nlohmann::json to_json(const MaskingReport& r) {
  auto opt = [](const std::optional<AccuracyEstimate>& e) {
    return e ? to_json(*e) : nlohmann::json(nullptr);
  };
  const MaskingMeasurements& m = r.measured;
  return {{"clean", to_json(m.clean)},
          {"pgd", to_json(m.pgd)},
          {"zero_order", opt(m.zero_order)},
          {"square", opt(m.square)},
          {"bpda", opt(m.bpda)},
          {"sweep_tail", optional_json(m.sweep_tail)},
          {"reference_sweep_tail", optional_json(m.reference_sweep_tail)},
          {"black_box_gap", r.black_box_gap},
          {"bpda_gap", r.bpda_gap},
          {"sweep_gap", optional_json(r.sweep_gap)},
          {"thresholds",
           {{"black_box_points", r.thresholds.black_box_points},
            {"bpda_points", r.thresholds.bpda_points}}},
          {"masking_suspected", r.masking_suspected}};
}

}  // namespace advmask
