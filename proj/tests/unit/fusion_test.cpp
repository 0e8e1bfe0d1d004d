// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "a2fpn/fusion.hpp"
#include "a2fpn/ops.hpp"

namespace a2fpn {
namespace {

Tensor<double> random_kernels(std::size_t k, std::size_t h, std::size_t w, Rng& rng) {
  return softmax(random_normal<double>({k * k, h, w}, rng), 0);
}

// Direct window sum with zero padding; `centre` maps an output index to the
// source index the window is centred on.
template <typename Centre>
Tensor<double> naive_reassemble(const Tensor<double>& src, const Tensor<double>& kernels,
                                Centre centre) {
  const long k = std::lround(std::sqrt(static_cast<double>(kernels.dim(0))));
  const long r = k / 2;
  Tensor<double> out({src.dim(0), kernels.dim(1), kernels.dim(2)});
  for (std::size_t c = 0; c < src.dim(0); ++c)
    for (std::size_t y = 0; y < kernels.dim(1); ++y)
      for (std::size_t x = 0; x < kernels.dim(2); ++x) {
        double acc = 0;
        for (long i = 0; i < k * k; ++i) {
          const long sy = centre(static_cast<long>(y)) + i / k - r;
          const long sx = centre(static_cast<long>(x)) + i % k - r;
          if (sy < 0 || sx < 0 || sy >= long(src.dim(1)) || sx >= long(src.dim(2))) continue;
          acc += kernels(std::size_t(i), y, x) * src(c, std::size_t(sy), std::size_t(sx));
        }
        out(c, y, x) = acc;
      }
  return out;
}

FusionSpec small_spec(Direction dir, bool concat_guidance = true, bool gated = true) {
  FusionSpec s;
  s.channels = 8;
  s.c_mid = 4;
  s.kernel_size = 3;
  s.direction = dir;
  s.concat_guidance = concat_guidance;
  s.gated = gated;
  return s;
}

TEST(Reassemble, UpMatchesWindowSum) {
  Rng rng(1);
  const auto coarse = random_normal<double>({3, 4, 5}, rng);
  for (std::size_t k : {1, 3, 5}) {
    const auto kernels = random_kernels(k, 8, 10, rng);
    EXPECT_LT(max_abs_diff(reassemble_up(coarse, kernels, 2),
                           naive_reassemble(coarse, kernels, [](long o) { return o / 2; })),
              1e-14);
  }
}

TEST(Reassemble, DownMatchesWindowSum) {
  Rng rng(2);
  const auto fine = random_normal<double>({3, 8, 6}, rng);
  for (std::size_t k : {1, 3, 5}) {
    const auto kernels = random_kernels(k, 4, 3, rng);
    EXPECT_LT(max_abs_diff(reassemble_down(fine, kernels, 2),
                           naive_reassemble(fine, kernels, [](long o) { return 2 * o; })),
              1e-14);
  }
}

TEST(Reassemble, BackwardIsTheAdjoint) {
  Rng rng(3);
  const auto coarse = random_normal<double>({2, 3, 4}, rng);
  const auto kernels = random_kernels(3, 6, 8, rng);
  const auto y = reassemble_up(coarse, kernels, 2);
  const auto g = random_normal<double>(y.shape(), rng);
  const auto grads = reassemble_up_backward(coarse, kernels, 2, g);
  EXPECT_NEAR(dot(y, g), dot(coarse, grads.dsource), 1e-12);
  EXPECT_NEAR(dot(y, g), dot(kernels, grads.dkernels), 1e-12);
}

TEST(Reassemble, RejectsBadKernels) {
  const Tensor<double> src({2, 4, 4});
  EXPECT_THROW(reassemble_up(src, Tensor<double>({4, 8, 8}), 2), DimensionError);
  EXPECT_THROW(reassemble_up(src, Tensor<double>({9, 4, 4}), 2), DimensionError);
  EXPECT_THROW(reassemble_down(Tensor<double>({2, 5, 4}), Tensor<double>({9, 2, 2}), 2),
               DimensionError);
}

TEST(KernelPrediction, KernelsAreNormalized) {
  Rng rng(4);
  for (Direction dir : {Direction::up, Direction::down}) {
    const auto p = init_fusion<double>(small_spec(dir), rng);
    const auto guide = random_normal<double>({16, 6, 6}, rng);
    const auto kernels = predict_kernels_forward(guide, p).kernels;
    const std::size_t side = dir == Direction::up ? 12 : 3;
    ASSERT_EQ(kernels.shape(), (Shape{9, side, side}));
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        double total = 0;
        for (std::size_t i = 0; i < 9; ++i) {
          EXPECT_GE(kernels(i, y, x), 0.0);
          total += kernels(i, y, x);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
  }
}

TEST(KernelPrediction, ConstantMapStaysConstantAwayFromBorder) {
  Rng rng(5);
  const auto p = init_fusion<double>(small_spec(Direction::up), rng);
  const Tensor<double> coarse({8, 6, 6}, 1.75);
  const auto kernels = predict_up_kernels(coarse, Tensor<double>({8, 6, 6}, -0.5), p);
  const auto out = reassemble_up(coarse, kernels, 2);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t y = 2; y < 10; ++y)
      for (std::size_t x = 2; x < 10; ++x) EXPECT_NEAR(out(c, y, x), 1.75, 1e-12);
}

TEST(ChannelGates, TwoSigmoidAtZeroIsPlainAddition) {
  Rng rng(6);
  auto p = init_fusion<double>(small_spec(Direction::up), rng);
  p.gate.excite = Tensor<double>(p.gate.excite.shape());
  const auto upper = random_normal<double>({8, 4, 4}, rng);
  const auto lateral = random_normal<double>({8, 8, 8}, rng);
  const auto gated = fuse_topdown(upper, lateral, p, {GateActivation::two_sigmoid, false});
  const auto pinned = fuse_topdown(upper, lateral, p, {GateActivation::two_sigmoid, true});
  EXPECT_EQ(gated, pinned);
  const auto gates = channel_gates(upper, max_pool2d(lateral).out, p.gate,
                                   GateActivation::two_sigmoid);
  for (double g : gates.high.data()) EXPECT_EQ(g, 1.0);
  for (double g : gates.low.data()) EXPECT_EQ(g, 1.0);
  const auto sig = channel_gates(upper, max_pool2d(lateral).out, p.gate,
                                 GateActivation::sigmoid);
  for (double g : sig.high.data()) EXPECT_EQ(g, 0.5);
}

TEST(ChannelGates, BoundedByActivationRange) {
  Rng rng(7);
  const auto p = init_fusion<double>(small_spec(Direction::down), rng);
  const auto a = random_normal<double>({8, 4, 4}, rng, 3.0);
  const auto b = random_normal<double>({8, 4, 4}, rng, 3.0);
  const auto tr = channel_gates_forward(a, b, p.gate, GateActivation::two_sigmoid);
  ASSERT_EQ(tr.gates.shape(), (Shape{16}));
  for (double g : tr.gates.data()) {
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 2.0);
  }
  double mask_total = 0;
  for (double m : tr.mask.data()) mask_total += m;
  EXPECT_NEAR(mask_total, 1.0, 1e-12);
}

TEST(Baselines, CarafeEqualsUnguidedPinnedFusion) {
  Rng rng(8);
  const auto p = init_fusion<double>(small_spec(Direction::up, false, false), rng);
  const auto upper = random_normal<double>({8, 4, 4}, rng);
  const auto lateral = random_normal<double>({8, 8, 8}, rng);
  EXPECT_EQ(carafe_baseline(upper, lateral, p),
            fuse_topdown(upper, lateral, p, {GateActivation::two_sigmoid, true}));
  EXPECT_THROW(fuse_topdown(upper, lateral, p, {GateActivation::two_sigmoid, false}),
               std::invalid_argument);
}

TEST(Baselines, CapEqualsUnguidedPinnedFusion) {
  Rng rng(9);
  const auto p = init_fusion<double>(small_spec(Direction::down, false, false), rng);
  const auto lower = random_normal<double>({8, 8, 8}, rng);
  const auto td = random_normal<double>({8, 4, 4}, rng);
  EXPECT_EQ(cap_baseline(lower, td, p),
            fuse_bottomup(lower, td, p, {GateActivation::two_sigmoid, true}));
}

TEST(Baselines, RejectConcatGuidedParams) {
  Rng rng(10);
  const auto p = init_fusion<double>(small_spec(Direction::up), rng);
  EXPECT_THROW(carafe_baseline(Tensor<double>({8, 2, 2}), Tensor<double>({8, 4, 4}), p),
               std::invalid_argument);
}

TEST(FusionSite, ShapesAndResolutionChecks) {
  Rng rng(11);
  const auto up = init_fusion<float>(small_spec(Direction::up), rng);
  const auto down = init_fusion<float>(small_spec(Direction::down), rng);
  const Tensor<float> coarse({8, 4, 4}), fine({8, 8, 8});
  EXPECT_EQ(fuse_topdown(coarse, fine, up).shape(), fine.shape());
  EXPECT_EQ(fuse_bottomup(fine, coarse, down).shape(), coarse.shape());
  EXPECT_THROW(fuse_topdown(coarse, Tensor<float>({8, 6, 6}), up), DimensionError);
  EXPECT_THROW(fuse_topdown(coarse, fine, down), std::invalid_argument);
  EXPECT_THROW(init_fusion<float>(FusionSpec{.kernel_size = 4}, rng), DimensionError);
}

}  // namespace
}  // namespace a2fpn
