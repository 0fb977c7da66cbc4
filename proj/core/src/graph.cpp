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

#include "advmask/graph.hpp"

#include <algorithm>
#include <cmath>

#include "advmask/errors.hpp"

namespace advmask {

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kDense: return "dense";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kAdd: return "add";
    case OpKind::kScale: return "scale";
    case OpKind::kClamp: return "clamp";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kAvgPool2: return "avg_pool2";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Kernels. All operate on one example at a time; the caller loops the batch.

namespace {

struct ConvDims {
  std::size_t in_c, out_c, h, w, k, pad, ho, wo;
};

void conv_forward(const ConvDims& d, const float* in, const float* weight,
                  const float* bias, float* out) {
  const long pad = static_cast<long>(d.pad);
  const long H = static_cast<long>(d.h), W = static_cast<long>(d.w);
  const long Ho = static_cast<long>(d.ho), Wo = static_cast<long>(d.wo);
  const std::size_t plane = d.h * d.w, oplane = d.ho * d.wo;
  for (std::size_t o = 0; o < d.out_c; ++o) {
    float* dst_plane = out + o * oplane;
    std::fill(dst_plane, dst_plane + oplane, bias ? bias[o] : 0.0f);
    for (std::size_t i = 0; i < d.in_c; ++i) {
      const float* src_plane = in + i * plane;
      const float* wk = weight + (o * d.in_c + i) * d.k * d.k;
      for (long ky = 0; ky < static_cast<long>(d.k); ++ky) {
        const long dy = ky - pad;
        const long y0 = std::max(0L, -dy), y1 = std::min(Ho, H - dy);
        for (long kx = 0; kx < static_cast<long>(d.k); ++kx) {
          const long dx = kx - pad;
          const long x0 = std::max(0L, -dx), x1 = std::min(Wo, W - dx);
          const float wv = wk[ky * d.k + kx];
          if (wv == 0.0f) continue;
          for (long y = y0; y < y1; ++y) {
            float* dst = dst_plane + y * Wo;
            const float* src = src_plane + (y + dy) * W + dx;
            for (long x = x0; x < x1; ++x) dst[x] += wv * src[x];
          }
        }
      }
    }
  }
}

void conv_backward(const ConvDims& d, const float* in, const float* weight,
                   const float* gout, float* gin, float* gweight,
                   float* gbias) {
  const long pad = static_cast<long>(d.pad);
  const long H = static_cast<long>(d.h), W = static_cast<long>(d.w);
  const long Ho = static_cast<long>(d.ho), Wo = static_cast<long>(d.wo);
  const std::size_t plane = d.h * d.w, oplane = d.ho * d.wo;
  std::vector<float> row(d.wo);
  for (std::size_t o = 0; o < d.out_c; ++o) {
    const float* g_plane = gout + o * oplane;
    if (gbias) {
      float s = 0.0f;
      for (std::size_t p = 0; p < oplane; ++p) s += g_plane[p];
      gbias[o] += s;
    }
    for (std::size_t i = 0; i < d.in_c; ++i) {
      const float* src_plane = in + i * plane;
      float* gin_plane = gin ? gin + i * plane : nullptr;
      const float* wk = weight + (o * d.in_c + i) * d.k * d.k;
      float* gwk = gweight ? gweight + (o * d.in_c + i) * d.k * d.k : nullptr;
      for (long ky = 0; ky < static_cast<long>(d.k); ++ky) {
        const long dy = ky - pad;
        const long y0 = std::max(0L, -dy), y1 = std::min(Ho, H - dy);
        for (long kx = 0; kx < static_cast<long>(d.k); ++kx) {
          const long dx = kx - pad;
          const long x0 = std::max(0L, -dx), x1 = std::min(Wo, W - dx);
          const float wv = wk[ky * d.k + kx];
          if (gin_plane && wv != 0.0f) {
            for (long y = y0; y < y1; ++y) {
              float* dst = gin_plane + (y + dy) * W + dx;
              const float* g = g_plane + y * Wo;
              for (long x = x0; x < x1; ++x) dst[x] += wv * g[x];
            }
          }
          if (gwk) {
            std::fill(row.begin(), row.end(), 0.0f);
            for (long y = y0; y < y1; ++y) {
              const float* src = src_plane + (y + dy) * W + dx;
              const float* g = g_plane + y * Wo;
              for (long x = x0; x < x1; ++x) row[x] += g[x] * src[x];
            }
            float s = 0.0f;
            for (long x = x0; x < x1; ++x) s += row[x];
            gwk[ky * d.k + kx] += s;
          }
        }
      }
    }
  }
}

std::size_t channels_of(const Shape& s) { return s.empty() ? 1 : s[0]; }

std::size_t spatial_of(const Shape& s) {
  return s.size() <= 1 ? 1 : numel(s) / s[0];
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction

Graph::Graph(Shape input_shape) {
  if (input_shape.empty() || numel(input_shape) == 0) {
    throw ShapeError("graph input shape must be non-empty, got " +
                     to_string(input_shape));
  }
  Node in;
  in.kind = OpKind::kInput;
  in.shape = std::move(input_shape);
  in.name = "input";
  nodes_.push_back(std::move(in));
}

void Graph::check_node(NodeId id) const {
  if (id >= nodes_.size()) {
    throw PreconditionError("node " + std::to_string(id) + " does not exist");
  }
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) check_node(in);
  nodes_.push_back(std::move(node));
  output_ = nodes_.size() - 1;
  return output_;
}

std::size_t Graph::add_param(const std::string& name, Shape shape,
                             float fill) {
  for (const auto& p : params_) {
    if (p.name == name) throw PreconditionError("duplicate parameter " + name);
  }
  params_.push_back({name, Tensor(std::move(shape), fill), false});
  return params_.size() - 1;
}

std::size_t Graph::add_buffer(const std::string& name, Shape shape,
                              float fill) {
  buffers_.push_back({name, Tensor(std::move(shape), fill), true});
  return buffers_.size() - 1;
}

NodeId Graph::dense(NodeId x, std::size_t out_features,
                    const std::string& name, bool bias) {
  check_node(x);
  const std::size_t in = numel(nodes_[x].shape);
  Node n;
  n.kind = OpKind::kDense;
  n.inputs = {x};
  n.shape = {out_features};
  n.name = name;
  n.params.push_back(add_param(name + ".weight", {out_features, in}));
  if (bias) n.params.push_back(add_param(name + ".bias", {out_features}));
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, std::size_t out_channels, std::size_t kernel,
                     const std::string& name, bool bias,
                     std::optional<std::size_t> padding) {
  check_node(x);
  const Shape& s = nodes_[x].shape;
  if (s.size() != 3) {
    throw ShapeError("conv2d '" + name + "' needs [C, H, W] input, got " +
                     to_string(s));
  }
  if (kernel % 2 == 0) {
    throw ShapeError("conv2d '" + name + "' kernel must be odd, got " +
                     std::to_string(kernel));
  }
  const std::size_t pad = padding.value_or(kernel / 2);
  if (s[1] + 2 * pad < kernel || s[2] + 2 * pad < kernel) {
    throw ShapeError("conv2d '" + name + "' kernel " + std::to_string(kernel) +
                     " larger than padded input " + to_string(s));
  }
  Node n;
  n.kind = OpKind::kConv2d;
  n.inputs = {x};
  n.shape = {out_channels, s[1] + 2 * pad - kernel + 1,
             s[2] + 2 * pad - kernel + 1};
  n.name = name;
  n.a = static_cast<float>(pad);
  n.params.push_back(
      add_param(name + ".weight", {out_channels, s[0], kernel, kernel}));
  if (bias) n.params.push_back(add_param(name + ".bias", {out_channels}));
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  check_node(x);
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {x};
  n.shape = nodes_[x].shape;
  return push(std::move(n));
}

NodeId Graph::batch_norm(NodeId x, const std::string& name, float eps) {
  check_node(x);
  const std::size_t c = channels_of(nodes_[x].shape);
  Node n;
  n.kind = OpKind::kBatchNorm;
  n.inputs = {x};
  n.shape = nodes_[x].shape;
  n.name = name;
  n.a = eps;
  n.params.push_back(add_param(name + ".gamma", {c}, 1.0f));
  n.params.push_back(add_param(name + ".beta", {c}, 0.0f));
  n.buffers.push_back(add_buffer(name + ".running_mean", {c}, 0.0f));
  n.buffers.push_back(add_buffer(name + ".running_var", {c}, 1.0f));
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_node(a);
  check_node(b);
  if (nodes_[a].shape != nodes_[b].shape) {
    throw ShapeError("add: shape " + to_string(nodes_[a].shape) +
                     " vs " + to_string(nodes_[b].shape));
  }
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  n.shape = nodes_[a].shape;
  return push(std::move(n));
}

NodeId Graph::scale(NodeId x, float factor) {
  check_node(x);
  Node n;
  n.kind = OpKind::kScale;
  n.inputs = {x};
  n.shape = nodes_[x].shape;
  n.a = factor;
  return push(std::move(n));
}

NodeId Graph::clamp(NodeId x, float lo, float hi) {
  check_node(x);
  if (!(lo <= hi)) throw PreconditionError("clamp: lo > hi");
  Node n;
  n.kind = OpKind::kClamp;
  n.inputs = {x};
  n.shape = nodes_[x].shape;
  n.a = lo;
  n.b = hi;
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId x) {
  check_node(x);
  if (nodes_[x].shape.size() != 1) {
    throw ShapeError("softmax needs a flat [c] input, got " +
                     to_string(nodes_[x].shape));
  }
  Node n;
  n.kind = OpKind::kSoftmax;
  n.inputs = {x};
  n.shape = nodes_[x].shape;
  return push(std::move(n));
}

NodeId Graph::avg_pool2(NodeId x) {
  check_node(x);
  const Shape& s = nodes_[x].shape;
  if (s.size() != 3 || s[1] % 2 || s[2] % 2) {
    throw ShapeError("avg_pool2 needs [C, H, W] with even H, W, got " +
                     to_string(s));
  }
  Node n;
  n.kind = OpKind::kAvgPool2;
  n.inputs = {x};
  n.shape = {s[0], s[1] / 2, s[2] / 2};
  return push(std::move(n));
}

void Graph::set_output(NodeId id) {
  check_node(id);
  output_ = id;
}

Parameter& Graph::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw PreconditionError("no parameter named " + name);
}

const Parameter& Graph::param(const std::string& name) const {
  return const_cast<Graph*>(this)->param(name);
}

void Graph::set_frozen(bool frozen) {
  for (auto& p : params_) p.frozen = frozen;
}

std::size_t Graph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Forward

void Graph::check_batch(const Tensor& batch) const {
  Shape want = input_shape();
  want.insert(want.begin(), batch.rank() ? batch.dim(0) : 0);
  if (batch.shape() != want || batch.rank() == 0) {
    throw ShapeError("graph input expects [N, " +
                     to_string(input_shape()).substr(1) + ", got " +
                     to_string(batch.shape()));
  }
}

Tensor Graph::forward(const Tensor& batch) const {
  Activations acts = trace(batch, BatchNormMode::kInference);
  return std::move(acts.values_[output_]);
}

Activations Graph::trace(const Tensor& batch, BatchNormMode mode) const {
  check_batch(batch);
  const std::size_t N = batch.dim(0);
  Activations acts;
  acts.mode_ = mode;
  acts.output_ = output_;
  acts.values_.resize(nodes_.size());
  acts.bn_mean_.resize(nodes_.size());
  acts.bn_invstd_.resize(nodes_.size());
  acts.bn_var_.resize(nodes_.size());
  acts.values_[0] = batch;

  for (NodeId id = 1; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    Shape out_shape = node.shape;
    out_shape.insert(out_shape.begin(), N);
    Tensor out(out_shape);
    const Tensor& x = acts.values_[node.inputs[0]];
    const std::size_t in_sz = numel(nodes_[node.inputs[0]].shape);
    const std::size_t out_sz = numel(node.shape);

    switch (node.kind) {
      case OpKind::kInput:
        break;
      case OpKind::kDense: {
        const Tensor& w = params_[node.params[0]].value;
        const float* b = node.params.size() > 1
                             ? params_[node.params[1]].value.data().data()
                             : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
          const float* xi = x.data().data() + n * in_sz;
          float* yo = out.data().data() + n * out_sz;
          for (std::size_t o = 0; o < out_sz; ++o) {
            const float* wr = w.data().data() + o * in_sz;
            float s = 0.0f;
            for (std::size_t i = 0; i < in_sz; ++i) s += wr[i] * xi[i];
            yo[o] = s + (b ? b[o] : 0.0f);
          }
        }
        break;
      }
      case OpKind::kConv2d: {
        const Shape& is = nodes_[node.inputs[0]].shape;
        const Tensor& w = params_[node.params[0]].value;
        const ConvDims d{is[0],        node.shape[0],
                         is[1],        is[2],
                         w.dim(2),     static_cast<std::size_t>(node.a),
                         node.shape[1], node.shape[2]};
        const float* b = node.params.size() > 1
                             ? params_[node.params[1]].value.data().data()
                             : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
          conv_forward(d, x.data().data() + n * in_sz, w.data().data(), b,
                       out.data().data() + n * out_sz);
        }
        break;
      }
      case OpKind::kRelu:
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = x[i] > 0.0f ? x[i] : 0.0f;
        }
        break;
      case OpKind::kBatchNorm: {
        const std::size_t C = channels_of(node.shape);
        const std::size_t S = spatial_of(node.shape);
        const float eps = node.a;
        const float* gamma = params_[node.params[0]].value.data().data();
        const float* beta = params_[node.params[1]].value.data().data();
        std::vector<float> mean(C), invstd(C), var(C);
        if (mode == BatchNormMode::kTraining) {
          const double m = double(N * S);
          for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
              const float* p = x.data().data() + n * out_sz + c * S;
              for (std::size_t j = 0; j < S; ++j) s += p[j];
            }
            const double mu = s / m;
            double v = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
              const float* p = x.data().data() + n * out_sz + c * S;
              for (std::size_t j = 0; j < S; ++j) {
                v += (p[j] - mu) * (p[j] - mu);
              }
            }
            mean[c] = static_cast<float>(mu);
            var[c] = static_cast<float>(v / m);
            invstd[c] = static_cast<float>(1.0 / std::sqrt(v / m + eps));
          }
        } else {
          const float* rm = buffers_[node.buffers[0]].value.data().data();
          const float* rv = buffers_[node.buffers[1]].value.data().data();
          for (std::size_t c = 0; c < C; ++c) {
            mean[c] = rm[c];
            var[c] = rv[c];
            invstd[c] = 1.0f / std::sqrt(rv[c] + eps);
          }
        }
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            const float* p = x.data().data() + n * out_sz + c * S;
            float* q = out.data().data() + n * out_sz + c * S;
            const float sc = gamma[c] * invstd[c];
            const float sh = beta[c] - mean[c] * sc;
            for (std::size_t j = 0; j < S; ++j) q[j] = p[j] * sc + sh;
          }
        }
        acts.bn_mean_[id] = std::move(mean);
        acts.bn_invstd_[id] = std::move(invstd);
        acts.bn_var_[id] = std::move(var);
        break;
      }
      case OpKind::kAdd: {
        const Tensor& y = acts.values_[node.inputs[1]];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
        break;
      }
      case OpKind::kScale:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * node.a;
        break;
      case OpKind::kClamp:
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = std::clamp(x[i], node.a, node.b);
        }
        break;
      case OpKind::kSoftmax:
        out = advmask::softmax(x);
        break;
      case OpKind::kAvgPool2: {
        const std::size_t C = node.shape[0], h = node.shape[1],
                          w = node.shape[2];
        const std::size_t W = 2 * w;
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            const float* p = x.data().data() + n * in_sz + c * 4 * h * w;
            float* q = out.data().data() + n * out_sz + c * h * w;
            for (std::size_t y = 0; y < h; ++y) {
              for (std::size_t xx = 0; xx < w; ++xx) {
                const float* r0 = p + (2 * y) * W + 2 * xx;
                q[y * w + xx] = 0.25f * (r0[0] + r0[1] + r0[W] + r0[W + 1]);
              }
            }
          }
        }
        break;
      }
    }
    acts.values_[id] = std::move(out);
  }
  return acts;
}

// ---------------------------------------------------------------------------
// Backward

GradientBundle Graph::backward(const Activations& acts,
                               const Tensor& output_grad,
                               bool with_params) const {
  if (acts.values_.size() != nodes_.size()) {
    throw PreconditionError("activations do not belong to this graph");
  }
  if (output_grad.shape() != acts.values_[output_].shape()) {
    throw ShapeError("output gradient " + to_string(output_grad.shape()) +
                     " does not match output " +
                     to_string(acts.values_[output_].shape()));
  }
  return backward_from(acts, output_, output_grad, with_params);
}

GradientBundle Graph::backward_from(const Activations& acts, NodeId start,
                                    const Tensor& start_grad,
                                    bool with_params) const {
  const std::size_t N = acts.values_[0].dim(0);
  std::vector<Tensor> grads(nodes_.size());
  grads[start] = start_grad;

  GradientBundle bundle;
  std::vector<Tensor> pgrads(params_.size());
  auto want_param = [&](std::size_t p) {
    return with_params && !params_[p].frozen;
  };
  auto param_grad = [&](std::size_t p) -> float* {
    if (!want_param(p)) return nullptr;
    if (pgrads[p].empty()) pgrads[p] = Tensor(params_[p].value.shape());
    return pgrads[p].data().data();
  };
  auto input_grad = [&](NodeId in) -> Tensor& {
    if (grads[in].empty()) grads[in] = Tensor(acts.values_[in].shape());
    return grads[in];
  };

  for (NodeId id = start; id > 0; --id) {
    if (grads[id].empty()) continue;
    const Node& node = nodes_[id];
    const Tensor& g = grads[id];
    const Tensor& x = acts.values_[node.inputs[0]];
    const std::size_t in_sz = numel(nodes_[node.inputs[0]].shape);
    const std::size_t out_sz = numel(node.shape);

    switch (node.kind) {
      case OpKind::kInput:
        break;
      case OpKind::kDense: {
        const Tensor& w = params_[node.params[0]].value;
        Tensor& gx = input_grad(node.inputs[0]);
        float* gw = param_grad(node.params[0]);
        float* gb = node.params.size() > 1 ? param_grad(node.params[1])
                                           : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
          const float* go = g.data().data() + n * out_sz;
          const float* xi = x.data().data() + n * in_sz;
          float* gi = gx.data().data() + n * in_sz;
          for (std::size_t o = 0; o < out_sz; ++o) {
            const float gv = go[o];
            if (gv == 0.0f) continue;
            const float* wr = w.data().data() + o * in_sz;
            for (std::size_t i = 0; i < in_sz; ++i) gi[i] += gv * wr[i];
            if (gw) {
              float* gwr = gw + o * in_sz;
              for (std::size_t i = 0; i < in_sz; ++i) gwr[i] += gv * xi[i];
            }
            if (gb) gb[o] += gv;
          }
        }
        break;
      }
      case OpKind::kConv2d: {
        const Shape& is = nodes_[node.inputs[0]].shape;
        const Tensor& w = params_[node.params[0]].value;
        const ConvDims d{is[0],        node.shape[0],
                         is[1],        is[2],
                         w.dim(2),     static_cast<std::size_t>(node.a),
                         node.shape[1], node.shape[2]};
        Tensor& gx = input_grad(node.inputs[0]);
        float* gw = param_grad(node.params[0]);
        float* gb = node.params.size() > 1 ? param_grad(node.params[1])
                                           : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
          conv_backward(d, x.data().data() + n * in_sz, w.data().data(),
                        g.data().data() + n * out_sz,
                        gx.data().data() + n * in_sz, gw, gb);
        }
        break;
      }
      case OpKind::kRelu: {
        Tensor& gx = input_grad(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > 0.0f) gx[i] += g[i];
        }
        break;
      }
      case OpKind::kBatchNorm: {
        const std::size_t C = channels_of(node.shape);
        const std::size_t S = spatial_of(node.shape);
        const float* gamma = params_[node.params[0]].value.data().data();
        const auto& mean = acts.bn_mean_[id];
        const auto& invstd = acts.bn_invstd_[id];
        Tensor& gx = input_grad(node.inputs[0]);
        float* ggamma = param_grad(node.params[0]);
        float* gbeta = param_grad(node.params[1]);
        const bool batch_stats = acts.mode_ == BatchNormMode::kTraining;
        const double m = double(N * S);
        for (std::size_t c = 0; c < C; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < N; ++n) {
            const float* p = x.data().data() + n * out_sz + c * S;
            const float* q = g.data().data() + n * out_sz + c * S;
            for (std::size_t j = 0; j < S; ++j) {
              const double xh = (p[j] - mean[c]) * invstd[c];
              sum_g += q[j];
              sum_gx += q[j] * xh;
            }
          }
          if (ggamma) ggamma[c] += static_cast<float>(sum_gx);
          if (gbeta) gbeta[c] += static_cast<float>(sum_g);
          for (std::size_t n = 0; n < N; ++n) {
            const float* p = x.data().data() + n * out_sz + c * S;
            const float* q = g.data().data() + n * out_sz + c * S;
            float* r = gx.data().data() + n * out_sz + c * S;
            if (batch_stats) {
              const double k = gamma[c] * invstd[c] / m;
              for (std::size_t j = 0; j < S; ++j) {
                const double xh = (p[j] - mean[c]) * invstd[c];
                r[j] += static_cast<float>(k * (m * q[j] - sum_g - xh * sum_gx));
              }
            } else {
              const float k = gamma[c] * invstd[c];
              for (std::size_t j = 0; j < S; ++j) r[j] += k * q[j];
            }
          }
        }
        break;
      }
      case OpKind::kAdd: {
        for (NodeId in : node.inputs) {
          Tensor& gx = input_grad(in);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        break;
      }
      case OpKind::kScale: {
        Tensor& gx = input_grad(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += node.a * g[i];
        break;
      }
      case OpKind::kClamp: {
        Tensor& gx = input_grad(node.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] >= node.a && x[i] <= node.b) gx[i] += g[i];
        }
        break;
      }
      case OpKind::kSoftmax: {
        const Tensor& p = acts.values_[id];
        Tensor& gx = input_grad(node.inputs[0]);
        for (std::size_t n = 0; n < N; ++n) {
          const float* pr = p.data().data() + n * out_sz;
          const float* gr = g.data().data() + n * out_sz;
          double dot = 0.0;
          for (std::size_t j = 0; j < out_sz; ++j) dot += double(pr[j]) * gr[j];
          float* r = gx.data().data() + n * out_sz;
          for (std::size_t j = 0; j < out_sz; ++j) {
            r[j] += static_cast<float>(pr[j] * (gr[j] - dot));
          }
        }
        break;
      }
      case OpKind::kAvgPool2: {
        const std::size_t C = node.shape[0], h = node.shape[1],
                          w = node.shape[2];
        const std::size_t W = 2 * w;
        Tensor& gx = input_grad(node.inputs[0]);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < C; ++c) {
            const float* q = g.data().data() + n * out_sz + c * h * w;
            float* p = gx.data().data() + n * in_sz + c * 4 * h * w;
            for (std::size_t y = 0; y < h; ++y) {
              for (std::size_t xx = 0; xx < w; ++xx) {
                const float v = 0.25f * q[y * w + xx];
                float* r0 = p + (2 * y) * W + 2 * xx;
                r0[0] += v;
                r0[1] += v;
                r0[W] += v;
                r0[W + 1] += v;
              }
            }
          }
        }
        break;
      }
    }
  }

  bundle.input_grad = grads[0].empty() ? Tensor(acts.values_[0].shape())
                                       : std::move(grads[0]);
  for (std::size_t p = 0; p < params_.size(); ++p) {
    if (!want_param(p)) continue;
    bundle.param_grads.emplace(
        params_[p].name,
        pgrads[p].empty() ? Tensor(params_[p].value.shape())
                          : std::move(pgrads[p]));
  }
  return bundle;
}

LossAndGrad Graph::loss_and_grad(const Tensor& batch,
                                 std::span<const int> labels,
                                 Reduction reduction, bool with_params,
                                 BatchNormMode mode, Activations* keep) const {
  check_batch(batch);
  if (output_shape().size() != 1) {
    throw ShapeError("loss needs a flat [c] output, graph outputs " +
                     to_string(output_shape()));
  }
  check_labels(labels, output_shape()[0]);
  Activations acts = trace(batch, mode);
  const bool probs = outputs_probabilities();
  CrossEntropy ce = probs ? cross_entropy_probs(acts.output(), labels, reduction)
                          : cross_entropy_logits(acts.output(), labels,
                                                 reduction);
  if (!std::isfinite(ce.mean)) {
    const long bad = first_nonfinite_node(acts);
    const long node = bad >= 0 ? bad : static_cast<long>(output_);
    throw NumericalError("non-finite loss; first non-finite value at node " +
                             std::to_string(node) + " (" +
                             to_string(nodes_[node].kind) + ")",
                         node);
  }
  LossAndGrad out;
  out.loss = ce.mean;
  out.per_example = std::move(ce.per_example);
  if (probs) {
    // Fused softmax + cross-entropy: seed the softmax input with p - onehot.
    const Tensor& p = acts.output();
    const std::size_t c = p.dim(1);
    const float scale =
        reduction == Reduction::kMean ? 1.0f / float(p.dim(0)) : 1.0f;
    Tensor seed(p.shape());
    for (std::size_t r = 0; r < p.dim(0); ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const float t = int(j) == labels[r] ? 1.0f : 0.0f;
        seed[r * c + j] = (p[r * c + j] - t) * scale;
      }
    }
    out.grads = backward_from(acts, nodes_[output_].inputs[0], seed, with_params);
  } else {
    out.grads = backward(acts, ce.grad, with_params);
  }
  if (keep) *keep = std::move(acts);
  return out;
}

void Graph::commit_batch_statistics(const Activations& acts, float momentum) {
  if (acts.mode_ != BatchNormMode::kTraining) return;
  const std::size_t N = acts.values_[0].dim(0);
  for (NodeId id = 1; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (node.kind != OpKind::kBatchNorm) continue;
    const double m = double(N * spatial_of(node.shape));
    const double unbias = m > 1 ? m / (m - 1) : 1.0;
    float* rm = buffers_[node.buffers[0]].value.data().data();
    float* rv = buffers_[node.buffers[1]].value.data().data();
    for (std::size_t c = 0; c < acts.bn_mean_[id].size(); ++c) {
      rm[c] = (1.0f - momentum) * rm[c] + momentum * acts.bn_mean_[id][c];
      rv[c] = (1.0f - momentum) * rv[c] +
              momentum * static_cast<float>(acts.bn_var_[id][c] * unbias);
    }
  }
}

long Graph::first_nonfinite_node(const Activations& acts) const {
  for (NodeId id = 0; id < acts.values_.size(); ++id) {
    if (!acts.values_[id].all_finite()) return static_cast<long>(id);
  }
  return -1;
}

}  // namespace advmask
