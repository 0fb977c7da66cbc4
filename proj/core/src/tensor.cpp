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

#include "advmask/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "advmask/errors.hpp"

namespace advmask {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + to_string(shape_) + " needs " +
                     std::to_string(numel(shape_)) + " elements, got " +
                     std::to_string(data_.size()));
  }
}

Tensor::Tensor(Shape shape, std::initializer_list<float> data)
    : Tensor(std::move(shape), std::vector<float>(data)) {}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " +
                     to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Shape Tensor::example_shape() const {
  if (shape_.empty()) return {};
  return Shape(shape_.begin() + 1, shape_.end());
}

std::size_t Tensor::example_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > batch()) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for batch " +
                     std::to_string(batch()));
  }
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t stride = example_size();
  return Tensor(std::move(s),
                std::vector<float>(data_.begin() + begin * stride,
                                   data_.begin() + end * stride));
}

std::span<float> Tensor::example(std::size_t i) {
  const std::size_t stride = example_size();
  return std::span<float>(data_).subspan(i * stride, stride);
}

std::span<const float> Tensor::example(std::size_t i) const {
  const std::size_t stride = example_size();
  return std::span<const float>(data_).subspan(i * stride, stride);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor gather(const Tensor& batch, std::span<const std::size_t> rows) {
  Shape s = batch.shape();
  s[0] = rows.size();
  Tensor out(std::move(s));
  const std::size_t stride = batch.example_size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = batch.example(rows[r]);
    std::copy(src.begin(), src.end(), out.data().begin() + r * stride);
  }
  return out;
}

Tensor stack(std::span<const Tensor> examples) {
  if (examples.empty()) throw ShapeError("stack of zero tensors");
  Shape s = examples[0].shape();
  s.insert(s.begin(), examples.size());
  Tensor out(std::move(s));
  const std::size_t stride = examples[0].size();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].shape() != examples[0].shape()) {
      throw ShapeError("stack: shape " + to_string(examples[i].shape()) +
                       " differs from " + to_string(examples[0].shape()));
    }
    std::copy(examples[i].data().begin(), examples[i].data().end(),
              out.data().begin() + i * stride);
  }
  return out;
}

float max_abs(const Tensor& t) {
  float m = 0.0f;
  for (float v : t.data()) m = std::max(m, std::fabs(v));
  return m;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 ||
          std::memcmp(a.data().data(), b.data().data(),
                      a.size() * sizeof(float)) == 0);
}

}  // namespace advmask
