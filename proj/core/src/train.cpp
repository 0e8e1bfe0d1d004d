// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "a2fpn/ops.hpp"

namespace a2fpn {

std::size_t worker_count_from_env() {
  const char* env = std::getenv("A2FPN_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0) return 1;
  return static_cast<std::size_t>(std::min<unsigned long>(v, 256));
}

template <typename T>
std::vector<SyntheticSample<T>> make_synthetic_dataset(std::size_t count, std::size_t height,
                                                       std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SyntheticSample<T>> out;
  for (std::size_t n = 0; n < count; ++n) {
    SyntheticSample<T> s{random_uniform<T>({3, height, width}, rng, 0.0, 0.4),
                         Tensor<T>({1, height, width})};
    const auto shapes = rng.integer(1, 3);
    const double extent = static_cast<double>(std::min(height, width));
    for (std::int64_t k = 0; k < shapes; ++k) {
      const bool disk = rng.uniform() < 0.5;
      const bool large = rng.uniform() < 0.5;
      const double half = extent * (large ? rng.uniform(0.15, 0.25) : rng.uniform(0.06, 0.12));
      const double cy = rng.uniform(half, static_cast<double>(height) - half);
      const double cx = rng.uniform(half, static_cast<double>(width) - half);
      const double color[3] = {rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0),
                               rng.uniform(0.6, 1.0)};
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double dy = static_cast<double>(y) + 0.5 - cy;
          const double dx = static_cast<double>(x) + 0.5 - cx;
          const bool inside = disk ? dy * dy + dx * dx <= half * half
                                   : std::abs(dy) <= half && std::abs(dx) <= half;
          if (!inside) continue;
          for (std::size_t ch = 0; ch < 3; ++ch) s.image(ch, y, x) = static_cast<T>(color[ch]);
          s.mask(0, y, x) = T{1};
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
T bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits) {
  if (logits.shape() != target.shape()) {
    throw DimensionError("bce: logits " + shape_to_string(logits.shape()) + " vs target " +
                         shape_to_string(target.shape()));
  }
  const T inv_n = T{1} / static_cast<T>(logits.size());
  if (dlogits != nullptr) *dlogits = Tensor<T>(logits.shape());
  T total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T z = logits[i], y = target[i];
    total += std::max(z, T{0}) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (dlogits != nullptr) (*dlogits)[i] = (T{1} / (T{1} + std::exp(-z)) - y) * inv_n;
  }
  return total * inv_n;
}

namespace {

constexpr std::size_t kHeadUpsample = 4;

template <typename T>
T image_loss(const ModelParams<T>& m, const PyramidConfig& cfg, const SyntheticSample<T>& s,
             ModelParams<T>* grad) {
  const BackboneTrace<T> bb = toy_backbone_forward_traced(s.image, m.backbone);
  const NeckTrace<T> neck = neck_forward_traced(bb.levels, m.neck, cfg);
  const Tensor<T>& finest = neck.outputs[0].data;
  const Tensor<T> coarse = conv2d(m.head, finest);
  const Tensor<T> logits = bilinear_upsample(coarse, kHeadUpsample);
  Tensor<T> dlogits;
  const T loss = bce_with_logits(logits, s.mask, grad != nullptr ? &dlogits : nullptr);
  if (grad == nullptr) return loss;

  const Tensor<T> dcoarse = bilinear_upsample_backward(coarse.shape(), dlogits, kHeadUpsample);
  std::vector<Tensor<T>> douts(neck.outputs.size());
  douts[0] = conv2d_backward(m.head, finest, dcoarse, grad->head);
  const auto dlevels = neck_backward(neck, m.neck, cfg, douts, grad->neck);
  toy_backbone_backward(bb, m.backbone, dlevels, grad->backbone);
  return loss;
}

template <typename T>
std::vector<Tensor<T>*> param_list(ModelParams<T>& m) {
  std::vector<Tensor<T>*> out;
  visit_model(m, [&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
  return out;
}

}  // namespace

template <typename T>
LossBreakdown<T> toy_loss(const ModelParams<T>& m, const PyramidConfig& cfg,
                          const std::vector<SyntheticSample<T>>& batch, std::size_t workers,
                          ModelParams<T>* grad) {
  if (batch.empty()) throw std::invalid_argument("toy_loss: empty batch");
  const std::size_t n = batch.size();
  std::vector<T> losses(n);
  std::vector<ModelParams<T>> grads;
  if (grad != nullptr) grads.assign(n, zero_grads(m));

  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride)
      losses[i] = image_loss(m, cfg, batch[i], grad != nullptr ? &grads[i] : nullptr);
  };
  workers = std::clamp<std::size_t>(workers, 1, n);
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  }

  LossBreakdown<T> out;
  const T inv_n = T{1} / static_cast<T>(n);
  T task{0};
  for (std::size_t i = 0; i < n; ++i) task += losses[i];
  out.reg = orthogonal_reg_loss(m.neck.mgc);
  out.total = task * inv_n + out.reg;

  if (grad != nullptr) {
    auto dst = param_list(*grad);
    for (Tensor<T>* t : dst) t->fill(T{0});
    for (std::size_t i = 0; i < n; ++i) {
      auto src = param_list(grads[i]);
      for (std::size_t k = 0; k < dst.size(); ++k) *dst[k] += *src[k];
    }
    for (Tensor<T>* t : dst)
      for (auto& v : t->data()) v *= inv_n;
    orthogonal_reg_backward(m.neck.mgc, T{1}, grad->neck.mgc);
  }
  return out;
}

template <typename T>
ToyTrainResult<T> train_toy(const PyramidConfig& cfg, const ToyTrainOptions& opt) {
  cfg.validate();
  const auto data =
      make_synthetic_dataset<T>(opt.images, cfg.image_h, cfg.image_w, cfg.seed + 1);
  ToyTrainResult<T> result;
  result.params = init_model<T>(cfg);
  ModelParams<T> velocity = zero_grads(result.params);
  ModelParams<T> grad = zero_grads(result.params);
  auto weights = param_list(result.params);
  auto vel = param_list(velocity);
  auto grads = param_list(grad);
  const T lr = static_cast<T>(opt.lr);
  const T mu = static_cast<T>(opt.momentum);

  for (std::size_t step = 0; step <= opt.steps; ++step) {
    const bool update = step < opt.steps;
    const auto loss = toy_loss(result.params, cfg, data, opt.workers, update ? &grad : nullptr);
    result.history.push_back({step, static_cast<double>(loss.total), static_cast<double>(loss.reg)});
    if (!std::isfinite(static_cast<double>(loss.total))) {
      result.diverged = true;
      break;
    }
    if (!update) break;
    if (opt.clip_norm > 0) {
      double sq = 0;
      for (const Tensor<T>* g : grads)
        for (T v : g->data()) sq += static_cast<double>(v) * static_cast<double>(v);
      const double norm = std::sqrt(sq);
      if (norm > opt.clip_norm) {
        const T factor = static_cast<T>(opt.clip_norm / norm);
        for (Tensor<T>* g : grads)
          for (auto& v : g->data()) v *= factor;
      }
    }
    for (std::size_t k = 0; k < weights.size(); ++k) {
      auto w = weights[k]->data();
      auto v = vel[k]->data();
      auto g = grads[k]->data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mu * v[i] + g[i];
        w[i] -= lr * v[i];
      }
    }
  }
  return result;
}

#define A2FPN_INSTANTIATE_TRAIN(T)                                                          \
  template std::vector<SyntheticSample<T>> make_synthetic_dataset(std::size_t, std::size_t, \
                                                                  std::size_t, std::uint64_t); \
  template T bce_with_logits(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);               \
  template LossBreakdown<T> toy_loss(const ModelParams<T>&, const PyramidConfig&,           \
                                     const std::vector<SyntheticSample<T>>&, std::size_t,   \
                                     ModelParams<T>*);                                      \
  template ToyTrainResult<T> train_toy(const PyramidConfig&, const ToyTrainOptions&);

A2FPN_INSTANTIATE_TRAIN(float)
A2FPN_INSTANTIATE_TRAIN(double)

#undef A2FPN_INSTANTIATE_TRAIN

}  // namespace a2fpn
