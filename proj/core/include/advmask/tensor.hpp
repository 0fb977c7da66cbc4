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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace advmask {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major float32 array. Batched tensors carry the batch as dim 0.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);
  Tensor(Shape shape, std::initializer_list<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Same buffer, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Per-example shape (all dims but the first).
  Shape example_shape() const;
  std::size_t example_size() const;
  std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }

  /// Copy of examples [begin, end) along dim 0.
  Tensor slice(std::size_t begin, std::size_t end) const;
  std::span<float> example(std::size_t i);
  std::span<const float> example(std::size_t i) const;

  void fill(float v);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Gathers the given examples (dim 0 rows) into a new batch.
Tensor gather(const Tensor& batch, std::span<const std::size_t> rows);

/// Stacks equally shaped example tensors along a new batch dim.
Tensor stack(std::span<const Tensor> examples);

float max_abs(const Tensor& t);
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Bitwise equality including the sign of zero and NaN payloads.
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace advmask
