// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "a2fpn/pyramid.hpp"

namespace a2fpn {

/// Worker count from A2FPN_THREADS (unset, empty or invalid -> 1).
std::size_t worker_count_from_env();

template <typename T>
struct SyntheticSample {
  Tensor<T> image;  // 3 x H x W in [0, 1]
  Tensor<T> mask;   // 1 x H x W, 1 inside a shape
};

/// Bright rectangles and disks of two size bands on a dark noisy background.
template <typename T>
std::vector<SyntheticSample<T>> make_synthetic_dataset(std::size_t count, std::size_t height,
                                                       std::size_t width, std::uint64_t seed);

/// Mean binary cross-entropy with logits; optionally writes d(loss)/d(logits).
template <typename T>
T bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits);

template <typename T>
struct LossBreakdown {
  T total = 0;  // task + regularization
  T reg = 0;
};

/// Mean per-image loss over `batch` plus the orthogonality penalty. When
/// `grad` is non-null it receives the full gradient (its layout must match
/// zero_grads(m)). Images are spread over `workers` threads; per-image
/// results are reduced in image order, so the output does not depend on the
/// worker count.
template <typename T>
LossBreakdown<T> toy_loss(const ModelParams<T>& m, const PyramidConfig& cfg,
                          const std::vector<SyntheticSample<T>>& batch, std::size_t workers,
                          ModelParams<T>* grad);

struct ToyTrainOptions {
  std::size_t steps = 500;
  double lr = 0.05;
  double momentum = 0.9;
  double clip_norm = 1.0;  // global gradient-norm cap; 0 disables
  std::size_t images = 8;
  std::size_t workers = 1;
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0;
  double reg_loss = 0;
};

template <typename T>
struct ToyTrainResult {
  std::vector<LossRecord> history;  // steps + 1 entries, the last after the final update
  bool diverged = false;
  ModelParams<T> params;

  double initial_loss() const { return history.front().loss; }
  double final_loss() const { return history.back().loss; }
  bool converged() const { return !diverged && final_loss() < 0.1 * initial_loss(); }
};

/// Full-batch momentum SGD (v = mu v + g; w -= lr v) on the synthetic task,
/// with a 1x1 head on the finest pyramid level upsampled x4 to the image.
/// Gradients whose global L2 norm exceeds clip_norm are rescaled to it.
template <typename T>
ToyTrainResult<T> train_toy(const PyramidConfig& cfg, const ToyTrainOptions& opt);

}  // namespace a2fpn
