// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace a2fpn {

using Shape = std::vector<std::size_t>;

/// Raised whenever operand extents are incompatible with an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_to_string(const Shape& shape);

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major tensor. Value semantics; every extent is positive except
/// the channel extent of an explicitly empty tensor (see `concat_channels`).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw DimensionError("tensor buffer of length " +
                           std::to_string(data_.size()) +
                           " does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  /// Zeros of the same shape; a default-constructed tensor stays empty.
  static Tensor zeros_like(const Tensor& other) {
    if (other.data_.empty()) return Tensor();
    return Tensor(other.shape_);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  T& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Same buffer viewed under a new shape of equal element count.
  Tensor reshaped(Shape shape) const& {
    Tensor out(*this);
    out.reshape_in_place(std::move(shape));
    return out;
  }
  Tensor reshaped(Shape shape) && {
    reshape_in_place(std::move(shape));
    return std::move(*this);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void reshape_in_place(Shape shape) {
    if (shape_numel(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_to_string(shape_) +
                           " to " + shape_to_string(shape));
    }
    shape_ = std::move(shape);
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw DimensionError("accumulate: shape " + shape_to_string(other.shape_) +
                         " into " + shape_to_string(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

/// Weight matrix of a 1x1 / 1-D convolution, optionally with a bias vector.
template <typename T>
struct LinearParams {
  Tensor<T> weight;  // out_dim x in_dim
  Tensor<T> bias;    // out_dim, or empty when the layer has no bias

  std::size_t out_dim() const { return weight.dim(0); }
  std::size_t in_dim() const { return weight.dim(1); }
  bool has_bias() const { return !bias.empty(); }
};

}  // namespace a2fpn
