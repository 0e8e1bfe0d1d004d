// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "a2fpn/tensor.hpp"

namespace a2fpn {

/// Seeded generator shared by parameter initialization, synthetic data and
/// the gradient checker. Streams are reproducible for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
Tensor<T> random_normal(const Shape& shape, Rng& rng, double stddev = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

template <typename T>
Tensor<T> random_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Kaiming-normal weights: stddev = gain / sqrt(fan_in). Use gain sqrt(2) for
/// layers followed by ReLU and 1 for linear layers.
template <typename T>
Tensor<T> kaiming_normal(const Shape& shape, std::size_t fan_in, Rng& rng,
                         double gain);

/// Matrix with orthonormal rows when rows <= cols, orthonormal columns
/// otherwise (QR of a Gaussian matrix, sign-corrected).
template <typename T>
Tensor<T> orthogonal(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace a2fpn
