// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "a2fpn/mgc.hpp"
#include "a2fpn/ops.hpp"

namespace a2fpn {
namespace {

Tensor<double> naive_compatibility(const Tensor<double>& q, const Tensor<double>& k,
                                   std::size_t scale_dim) {
  const std::size_t nq = q.dim(0), d = q.dim(1), nk = k.dim(1);
  std::vector<double> norms(nk, 0.0);
  for (std::size_t j = 0; j < nk; ++j) {
    for (std::size_t i = 0; i < d; ++i) norms[j] += k(i, j) * k(i, j);
    norms[j] = std::sqrt(norms[j]);
  }
  Tensor<double> a({nk, nq});
  for (std::size_t col = 0; col < nq; ++col) {
    std::vector<double> logits(nk);
    double top = -INFINITY;
    for (std::size_t j = 0; j < nk; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += q(col, i) * k(i, j) / norms[j];
      logits[j] = std::sqrt(static_cast<double>(scale_dim)) * s;
      top = std::max(top, logits[j]);
    }
    double z = 0;
    for (double l : logits) z += std::exp(l - top);
    for (std::size_t j = 0; j < nk; ++j) a(j, col) = std::exp(logits[j] - top) / z;
  }
  return a;
}

TEST(Compatibility, MatchesDirectFormula) {
  Rng rng(1);
  for (auto [nq, d, nk] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {5, 4, 3}, {7, 8, 9}}) {
    const auto q = random_normal<double>({nq, d}, rng);
    const auto k = random_normal<double>({d, nk}, rng);
    EXPECT_LT(max_abs_diff(compatibility(q, k, d), naive_compatibility(q, k, d)), 1e-14);
  }
}

TEST(Compatibility, ColumnsAreDistributionsInFloat) {
  Rng rng(2);
  const auto q = random_normal<float>({12, 16}, rng, 2.0);
  const auto k = random_normal<float>({16, 10}, rng);
  const auto a = compatibility(q, k, 16);
  ASSERT_EQ(a.shape(), (Shape{10, 12}));
  for (std::size_t col = 0; col < 12; ++col) {
    float total = 0;
    for (std::size_t j = 0; j < 10; ++j) total += a(j, col);
    EXPECT_NEAR(total, 1.0f, 1e-6f);
  }
}

TEST(Compatibility, InvariantToPositiveKeyRescaling) {
  Rng rng(3);
  const auto q = random_normal<double>({6, 4}, rng);
  auto k = random_normal<double>({4, 5}, rng);
  const auto before = compatibility(q, k, 4);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t i = 0; i < 4; ++i) k(i, j) *= 0.1 + 3.0 * static_cast<double>(j);
  EXPECT_LT(max_abs_diff(before, compatibility(q, k, 4)), 1e-12);
}

MgcShape small_shape() {
  MgcShape s;
  s.width = 8;
  s.in_channels = {4, 6, 8};
  s.entity_counts = {3, 2};
  return s;
}

TEST(Mgc, EntitiesStartOrthonormal) {
  Rng rng(4);
  const auto p = init_mgc<double>(small_shape(), rng);
  EXPECT_NEAR(orthogonal_reg_loss(p), 0.0, 1e-24);
  EXPECT_TRUE(p.levels[0].collects());
  EXPECT_TRUE(p.levels[1].collects());
  EXPECT_FALSE(p.levels[2].collects());
}

TEST(Mgc, OrthogonalLossMatchesFrobeniusNorm) {
  Rng rng(5);
  auto p = init_mgc<double>(small_shape(), rng);
  p.ortho_weight = 0.5;
  double expected = 0;
  for (auto& level : p.levels) {
    if (!level.collects()) continue;
    auto& e = level.entities;
    e[0] += 0.25;
    const std::size_t n = e.dim(0), c = e.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double g = 0;
        for (std::size_t t = 0; t < c; ++t) g += e(i, t) * e(j, t);
        g -= i == j ? 1.0 : 0.0;
        expected += g * g;
      }
  }
  EXPECT_NEAR(orthogonal_reg_loss(p), 0.5 * expected, 1e-14);
}

TEST(Mgc, StageShapes) {
  Rng rng(6);
  const auto p = init_mgc<double>(small_shape(), rng);
  const auto f2 = random_normal<double>({4, 8, 8}, rng);
  const auto f3 = random_normal<double>({6, 4, 4}, rng);
  const auto f4 = random_normal<double>({8, 2, 2}, rng);

  const auto g2 = collect_context(f2, p.levels[0]);
  EXPECT_EQ(g2.shape(), (Shape{8, 3}));
  const auto local = gcn_layer(g2, p.levels[0].gcn);
  EXPECT_EQ(local.shape(), g2.shape());
  const auto g3 = collect_context(f3, p.levels[1]);
  const auto fused = reason_multilevel<double>({local, g3}, p.shared);
  EXPECT_EQ(fused.shape(), (Shape{8, 5}));
  EXPECT_EQ(distribute_context(f4, fused, p.levels[2], p.out).shape(), (Shape{8, 2, 2}));

  const auto outs = mgc_forward<double>({f2, f3, f4}, p);
  ASSERT_EQ(outs.size(), 3u);
  EXPECT_EQ(outs[0].shape(), (Shape{8, 8, 8}));
  EXPECT_EQ(outs[1].shape(), (Shape{8, 4, 4}));
  EXPECT_EQ(outs[2].shape(), (Shape{8, 2, 2}));
}

TEST(Mgc, GcnIsResidual) {
  Rng rng(7);
  auto p = init_gcn<double>(8, rng);
  p.mix = Tensor<double>(p.mix.shape());
  const auto g = random_normal<double>({8, 5}, rng);
  EXPECT_EQ(gcn_layer(g, p), g);
}

TEST(Mgc, RejectsMismatchedInputs) {
  Rng rng(8);
  const auto p = init_mgc<double>(small_shape(), rng);
  EXPECT_THROW(collect_context(Tensor<double>({5, 4, 4}), p.levels[0]), DimensionError);
  EXPECT_THROW(collect_context(Tensor<double>({8, 2, 2}), p.levels[2]), DimensionError);
  EXPECT_THROW(init_mgc<double>(MgcShape{.width = 6, .in_channels = {4}, .entity_counts = {}}, rng), DimensionError);
}

}  // namespace
}  // namespace a2fpn
