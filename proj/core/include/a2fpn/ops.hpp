// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "a2fpn/tensor.hpp"

namespace a2fpn {

inline constexpr double kL2NormEps = 1e-12;
inline constexpr double kLayerNormEps = 1e-5;

/// While alive, hashes every branch taken by piecewise-linear ops (ReLU
/// signs, max-pool winners) on the current thread. Two evaluations with equal
/// fingerprints lie on the same linear piece. Recorders do not nest.
class BranchRecorder {
 public:
  BranchRecorder();
  ~BranchRecorder();
  BranchRecorder(const BranchRecorder&) = delete;
  BranchRecorder& operator=(const BranchRecorder&) = delete;

  std::uint64_t fingerprint() const { return hash_; }

  /// The recorder active on this thread, or nullptr.
  static BranchRecorder* active();
  void record(std::uint64_t branch) { hash_ = (hash_ ^ branch) * 1099511628211ULL; }

 private:
  std::uint64_t hash_ = 1469598103934665603ULL;
  BranchRecorder* previous_;
};

// Matrix primitives. All reductions run left to right in index order so the
// results are bit-reproducible.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a^T b without materializing the transpose.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);

/// a b^T without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct MatmulGrads {
  Tensor<T> da;
  Tensor<T> db;
};

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b,
                               const Tensor<T>& dout);

template <typename T>
Tensor<T> transpose(const Tensor<T>& m);

// Softmax along `axis` with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& t, std::size_t axis);

/// Vector-Jacobian product of softmax given its output `y`.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy,
                           std::size_t axis);

/// Divides every slice along `axis` by max(||slice||_2, eps).
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& t, std::size_t axis,
                       T eps = static_cast<T>(kL2NormEps));

template <typename T>
Tensor<T> l2_normalize_backward(const Tensor<T>& x, const Tensor<T>& dy,
                                std::size_t axis,
                                T eps = static_cast<T>(kL2NormEps));

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& t);

/// 2 / (1 + exp(-x)); equals 1 at x = 0.
template <typename T>
Tensor<T> two_sigmoid(const Tensor<T>& t);

/// Backward of sigmoid/two_sigmoid expressed through the forward output.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy);
template <typename T>
Tensor<T> two_sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
Tensor<T> relu(const Tensor<T>& t);

/// Passes `dy` where the forward *input* was positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& t, const Tensor<T>& gain,
                     const Tensor<T>& shift,
                     T eps = static_cast<T>(kLayerNormEps));

template <typename T>
struct LayerNormGrads {
  Tensor<T> dx;
  Tensor<T> dgain;
  Tensor<T> dshift;
};

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& t, const Tensor<T>& gain,
                                      const Tensor<T>& dy,
                                      T eps = static_cast<T>(kLayerNormEps));

// Elementwise helpers.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T>
T sum(const Tensor<T>& t);

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b);

/// max_i |a_i - b_i|; shapes must agree.
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

/// True when every element is finite.
template <typename T>
bool all_finite(const Tensor<T>& t);

}  // namespace a2fpn
