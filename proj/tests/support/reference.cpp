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

#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace advmask::testing {

namespace {

std::size_t count(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

ReferenceGraph::ReferenceGraph(const Graph& g) : g_(g) {
  in_size_ = count(g.input_shape());
  out_size_ = count(g.output_shape());
}

std::vector<double> ReferenceGraph::forward(std::span<const double> batch,
                                            std::size_t n, bool training_bn,
                                            std::vector<bool>* pattern) const {
  const auto nodes = g_.nodes();
  const auto& params = g_.parameters();
  const auto& buffers = g_.buffers();
  std::vector<std::vector<double>> v(nodes.size());
  v[0].assign(batch.begin(), batch.end());
  if (pattern) pattern->clear();

  for (std::size_t id = 1; id < nodes.size(); ++id) {
    const Node& node = nodes[id];
    const std::size_t out = count(node.shape);
    std::vector<double>& y = v[id];
    y.assign(n * out, 0.0);
    const std::vector<double>& x = v[node.inputs[0]];
    const std::size_t in = count(nodes[node.inputs[0]].shape);
    switch (node.kind) {
      case OpKind::kInput:
        break;
      case OpKind::kDense: {
        const Tensor& w = params[node.params[0]].value;
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t o = 0; o < out; ++o) {
            double s = node.params.size() > 1 ? params[node.params[1]].value[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i) s += double(w[o * in + i]) * x[b * in + i];
            y[b * out + o] = s;
          }
        }
        break;
      }
      case OpKind::kConv2d: {
        const Shape& is = nodes[node.inputs[0]].shape;
        const long C = long(is[0]), H = long(is[1]), W = long(is[2]);
        const long O = long(node.shape[0]), Ho = long(node.shape[1]),
                   Wo = long(node.shape[2]);
        const Tensor& w = params[node.params[0]].value;
        const long K = long(w.dim(2));
        const long pad = long(node.a);
        for (std::size_t b = 0; b < n; ++b) {
          for (long o = 0; o < O; ++o) {
            for (long yy = 0; yy < Ho; ++yy) {
              for (long xx = 0; xx < Wo; ++xx) {
                double s = node.params.size() > 1 ? params[node.params[1]].value[o] : 0.0;
                for (long c = 0; c < C; ++c) {
                  for (long ky = 0; ky < K; ++ky) {
                    for (long kx = 0; kx < K; ++kx) {
                      const long iy = yy + ky - pad, ix = xx + kx - pad;
                      if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                      s += double(w[((o * C + c) * K + ky) * K + kx]) *
                           x[b * in + (c * H + iy) * W + ix];
                    }
                  }
                }
                y[b * out + (o * Ho + yy) * Wo + xx] = s;
              }
            }
          }
        }
        break;
      }
      case OpKind::kRelu:
        for (std::size_t j = 0; j < y.size(); ++j) {
          y[j] = std::max(0.0, x[j]);
          if (pattern) pattern->push_back(x[j] > 0.0);
        }
        break;
      case OpKind::kBatchNorm: {
        const std::size_t C = node.shape[0];
        const std::size_t S = out / C;
        const Tensor& gamma = params[node.params[0]].value;
        const Tensor& beta = params[node.params[1]].value;
        for (std::size_t c = 0; c < C; ++c) {
          double mu = buffers[node.buffers[0]].value[c];
          double var = buffers[node.buffers[1]].value[c];
          if (training_bn) {
            mu = 0.0;
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t j = 0; j < S; ++j) mu += x[b * out + c * S + j];
            mu /= double(n * S);
            var = 0.0;
            for (std::size_t b = 0; b < n; ++b)
              for (std::size_t j = 0; j < S; ++j) {
                const double d = x[b * out + c * S + j] - mu;
                var += d * d;
              }
            var /= double(n * S);
          }
          const double inv = 1.0 / std::sqrt(var + double(node.a));
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < S; ++j) {
              const std::size_t k = b * out + c * S + j;
              y[k] = double(gamma[c]) * (x[k] - mu) * inv + double(beta[c]);
            }
        }
        break;
      }
      case OpKind::kAdd: {
        const std::vector<double>& x2 = v[node.inputs[1]];
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = x[j] + x2[j];
        break;
      }
      case OpKind::kScale:
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = double(node.a) * x[j];
        break;
      case OpKind::kClamp:
        for (std::size_t j = 0; j < y.size(); ++j) {
          y[j] = std::clamp(x[j], double(node.a), double(node.b));
          if (pattern) {
            pattern->push_back(x[j] < node.a);
            pattern->push_back(x[j] > node.b);
          }
        }
        break;
      case OpKind::kSoftmax:
        for (std::size_t b = 0; b < n; ++b) {
          const double m = *std::max_element(x.begin() + long(b * out),
                                             x.begin() + long((b + 1) * out));
          double z = 0.0;
          for (std::size_t j = 0; j < out; ++j) z += std::exp(x[b * out + j] - m);
          for (std::size_t j = 0; j < out; ++j) {
            y[b * out + j] = std::exp(x[b * out + j] - m) / z;
          }
        }
        break;
      case OpKind::kAvgPool2: {
        const Shape& is = nodes[node.inputs[0]].shape;
        const std::size_t C = is[0], H = is[1], W = is[2];
        const std::size_t Ho = node.shape[1], Wo = node.shape[2];
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t yy = 0; yy < Ho; ++yy)
              for (std::size_t xx = 0; xx < Wo; ++xx) {
                double s = 0.0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                  for (std::size_t dx = 0; dx < 2; ++dx)
                    s += x[b * in + (c * H + 2 * yy + dy) * W + 2 * xx + dx];
                y[b * out + (c * Ho + yy) * Wo + xx] = s / 4.0;
              }
        break;
      }
    }
  }
  return v[g_.output()];
}

double ReferenceGraph::mean_loss(std::span<const double> batch,
                                 std::span<const int> labels, bool training_bn,
                                 std::vector<bool>* pattern) const {
  const std::size_t n = labels.size();
  const std::vector<double> out = forward(batch, n, training_bn, pattern);
  const bool probs = g_.outputs_probabilities();
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const double* row = out.data() + b * out_size_;
    if (probs) {
      total += -std::log(row[labels[b]]);
    } else {
      const double m = *std::max_element(row, row + out_size_);
      double z = 0.0;
      for (std::size_t j = 0; j < out_size_; ++j) z += std::exp(row[j] - m);
      total += m + std::log(z) - row[labels[b]];
    }
  }
  return total / double(n);
}

OracleCheck check_input_gradient(const Graph& g, const Tensor& batch,
                                 std::span<const int> labels, double h,
                                 bool training_bn, double floor,
                                 double relative_floor) {
  const LossAndGrad lg = g.loss_and_grad(
      batch, labels, Reduction::kMean, false,
      training_bn ? BatchNormMode::kTraining : BatchNormMode::kInference);
  const ReferenceGraph ref(g);
  std::vector<double> x(batch.data().begin(), batch.data().end());
  std::vector<bool> base;
  ref.mean_loss(x, labels, training_bn, &base);

  OracleCheck out;
  const double scale = max_abs(lg.grads.input_grad);
  out.floor = std::max(floor, relative_floor * scale);
  std::vector<bool> pat;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = ref.mean_loss(x, labels, training_bn, &pat);
    bool kinked = pat != base;
    x[i] = orig - h;
    const double down = ref.mean_loss(x, labels, training_bn, &pat);
    kinked = kinked || pat != base;
    x[i] = orig;
    if (kinked) {
      ++out.skipped;
      continue;
    }
    const double fd = (up - down) / (2.0 * h);
    const double a = lg.grads.input_grad[i];
    const double denom = std::max({std::fabs(a), std::fabs(fd), out.floor});
    out.max_relative_error = std::max(out.max_relative_error, std::fabs(a - fd) / denom);
    ++out.checked;
  }
  return out;
}

}  // namespace advmask::testing
