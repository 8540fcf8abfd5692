// Copyright 2026 The rnet Authors
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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rnet/errors.hpp"

namespace rnet {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major tensor of doubles.
///
/// Construction from data validates that the element count matches the shape
/// and, unless RNET_UNCHECKED is defined, that every entry is finite.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor shape " + shape_string(shape_) + " holds " +
                           std::to_string(shape_size(shape_)) + " elements, got " +
                           std::to_string(data_.size()));
    }
#ifndef RNET_UNCHECKED
    for (double x : data_) {
      if (!std::isfinite(x)) throw ContractError("tensor entry is not finite");
    }
#endif
  }

  static Tensor vector(std::vector<double> data) {
    const std::size_t n = data.size();
    return Tensor({n}, std::move(data));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  static Tensor filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Tensor& other) const = default;

 private:
  void check_shape() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("tensor shape " + shape_string(shape_) + " has a zero dimension");
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

inline std::size_t argmax(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("argmax of an empty range");
  // lowest index wins ties
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return best;
}

/// Trainable tensor with its accumulated gradient.
///
/// `touched` is set when backward writes into `grad`; the optimizer skips
/// untouched parameters so blocks off the selected route stay bitwise fixed.
struct Parameter {
  Tensor value;
  Tensor grad;
  std::uint64_t id = 0;
  bool touched = false;

  Parameter() = default;
  Parameter(Tensor v, std::uint64_t id_) : value(std::move(v)), grad(value.shape()), id(id_) {}

  void zero_grad() {
    grad.fill(0.0);
    touched = false;
  }
};

/// Counts floating point operations executed by tensor kernels.
/// One multiply-add counts as two operations.
struct OpCounter {
  std::uint64_t flops = 0;

  static OpCounter& global() {
    thread_local OpCounter counter;
    return counter;
  }
  static void add(std::uint64_t n) { global().flops += n; }
  static void reset() { global().flops = 0; }
  static std::uint64_t value() { return global().flops; }
};

}  // namespace rnet
