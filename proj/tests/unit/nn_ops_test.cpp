// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "a2fpn/init.hpp"
#include "a2fpn/nn_ops.hpp"
#include "a2fpn/ops.hpp"

namespace a2fpn {
namespace {

Tensor<double> naive_conv(const ConvParams<double>& p, const Tensor<double>& x) {
  const long k = static_cast<long>(p.kernel());
  const long s = static_cast<long>(p.stride);
  const long pad = static_cast<long>(p.padding);
  const long h = static_cast<long>(x.dim(1)), w = static_cast<long>(x.dim(2));
  const long ho = (h + 2 * pad - k) / s + 1, wo = (w + 2 * pad - k) / s + 1;
  Tensor<double> out({p.out_channels(), std::size_t(ho), std::size_t(wo)});
  for (std::size_t o = 0; o < p.out_channels(); ++o)
    for (long y = 0; y < ho; ++y)
      for (long xx = 0; xx < wo; ++xx) {
        long double acc = p.has_bias() ? p.bias[o] : 0.0;
        for (std::size_t i = 0; i < p.in_channels(); ++i)
          for (long ky = 0; ky < k; ++ky)
            for (long kx = 0; kx < k; ++kx) {
              const long iy = y * s + ky - pad, ix = xx * s + kx - pad;
              if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
              acc += p.weight[((o * p.in_channels() + i) * k + ky) * k + kx] *
                     x(i, std::size_t(iy), std::size_t(ix));
            }
        out(o, std::size_t(y), std::size_t(xx)) = static_cast<double>(acc);
      }
  return out;
}

struct ConvCase {
  std::size_t in, out, k, stride, h, w;
};

TEST(Conv2d, MatchesNaiveLoops) {
  Rng rng(7);
  for (const auto& c : {ConvCase{1, 1, 1, 1, 1, 1}, ConvCase{3, 4, 3, 1, 5, 7},
                        ConvCase{2, 3, 3, 2, 8, 6}, ConvCase{4, 2, 5, 1, 6, 6},
                        ConvCase{5, 5, 1, 1, 3, 9}, ConvCase{2, 6, 3, 2, 7, 5}}) {
    auto p = make_conv<double>(c.in, c.out, c.k, c.stride, true, rng);
    p.bias = random_normal<double>(p.bias.shape(), rng);
    const auto x = random_normal<double>({c.in, c.h, c.w}, rng);
    EXPECT_LT(max_abs_diff(conv2d(p, x), naive_conv(p, x)), 1e-13)
        << c.in << "->" << c.out << " k" << c.k << " s" << c.stride;
  }
}

TEST(Conv2d, BackwardIsTheAdjoint) {
  Rng rng(8);
  for (std::size_t stride : {1, 2}) {
    auto p = make_conv<double>(3, 4, 3, stride, false, rng);
    const auto x = random_normal<double>({3, 8, 6}, rng);
    const auto y = conv2d(p, x);
    const auto g = random_normal<double>(y.shape(), rng);
    auto grad = zeros_like(p);
    const auto dx = conv2d_backward(p, x, g, grad);
    EXPECT_NEAR(dot(y, g), dot(x, dx), 1e-11);
    // Linear in the weights as well: <conv_w(x), g> = <w, dw>.
    EXPECT_NEAR(dot(y, g), dot(p.weight, grad.weight), 1e-11);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Rng rng(9);
  const auto p = make_conv<float>(3, 2, 3, 1, true, rng);
  EXPECT_THROW(conv2d(p, Tensor<float>({2, 4, 4})), DimensionError);
}

TEST(MaxPool, MatchesNaiveAndRoutesGradient) {
  Rng rng(10);
  const auto x = random_normal<double>({2, 4, 6}, rng);
  const auto r = max_pool2d(x);
  ASSERT_EQ(r.out.shape(), (Shape{2, 2, 3}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t xx = 0; xx < 3; ++xx) {
        const double m = std::max({x(c, 2 * y, 2 * xx), x(c, 2 * y, 2 * xx + 1),
                                   x(c, 2 * y + 1, 2 * xx), x(c, 2 * y + 1, 2 * xx + 1)});
        EXPECT_EQ(r.out(c, y, xx), m);
      }
  const auto dx = max_pool2d_backward(x.shape(), r.argmax, Tensor<double>(r.out.shape(), 1.0));
  EXPECT_EQ(sum(dx), 12.0);
  for (std::size_t i = 0; i < r.argmax.size(); ++i) EXPECT_EQ(dx[r.argmax[i]], 1.0);
}

double naive_bilinear_at(const Tensor<double>& x, std::size_t c, std::size_t oy, std::size_t ox,
                         std::size_t s) {
  auto coord = [&](std::size_t o, std::size_t n) {
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(s) - 0.5;
    return std::clamp(src, 0.0, static_cast<double>(n - 1));
  };
  const double sy = coord(oy, x.dim(1)), sx = coord(ox, x.dim(2));
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, x.dim(1) - 1), x1 = std::min(x0 + 1, x.dim(2) - 1);
  const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * x(c, y0, x0) + fx * x(c, y0, x1)) +
         fy * ((1 - fx) * x(c, y1, x0) + fx * x(c, y1, x1));
}

TEST(Bilinear, MatchesHalfPixelResize) {
  Rng rng(11);
  const auto x = random_normal<double>({2, 3, 5}, rng);
  for (std::size_t s : {2, 3}) {
    const auto y = bilinear_upsample(x, s);
    ASSERT_EQ(y.shape(), (Shape{2, 3 * s, 5 * s}));
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t oy = 0; oy < 3 * s; ++oy)
        for (std::size_t ox = 0; ox < 5 * s; ++ox)
          EXPECT_NEAR(y(c, oy, ox), naive_bilinear_at(x, c, oy, ox, s), 1e-14);
  }
}

TEST(Bilinear, PreservesConstantsAndBackwardIsAdjoint) {
  const auto y = bilinear_upsample(Tensor<double>({1, 3, 4}, 2.5), 2);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 2.5);
  Rng rng(12);
  const auto x = random_normal<double>({2, 4, 3}, rng);
  const auto g = random_normal<double>({2, 8, 6}, rng);
  EXPECT_NEAR(dot(bilinear_upsample(x, 2), g), dot(x, bilinear_upsample_backward(x.shape(), g, 2)),
              1e-12);
}

TEST(NearestUpsample, RepeatsAndSumsBack) {
  const Tensor<double> x({1, 1, 2}, std::vector<double>{1.0, 2.0});
  const auto y = nearest_upsample(x, 2);
  EXPECT_EQ(y, Tensor<double>({1, 2, 4}, std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2}));
  EXPECT_EQ(nearest_upsample_backward(x.shape(), y, 2),
            Tensor<double>({1, 1, 2}, std::vector<double>{4.0, 8.0}));
}

TEST(PixelShuffle, FollowsLayoutAndInverts) {
  Rng rng(13);
  const std::size_t s = 2;
  const auto x = random_normal<double>({8, 3, 2}, rng);
  const auto y = pixel_shuffle(x, s);
  ASSERT_EQ(y.shape(), (Shape{2, 6, 4}));
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t yy = 0; yy < 3; ++yy)
      for (std::size_t xx = 0; xx < 2; ++xx)
        for (std::size_t dy = 0; dy < s; ++dy)
          for (std::size_t dx = 0; dx < s; ++dx)
            EXPECT_EQ(y(g, s * yy + dy, s * xx + dx), x(g * s * s + dy * s + dx, yy, xx));
  EXPECT_EQ(pixel_unshuffle(y, s), x);
  EXPECT_THROW(pixel_shuffle(Tensor<double>({3, 2, 2}), 2), DimensionError);
}

TEST(Channels, ConcatSplitAndScale) {
  Rng rng(14);
  const auto a = random_normal<double>({2, 3, 3}, rng);
  const auto b = random_normal<double>({3, 3, 3}, rng);
  const auto [l, r] = split_channels(concat_channels(a, b), 2);
  EXPECT_EQ(l, a);
  EXPECT_EQ(r, b);
  const Tensor<double> gate({2}, std::vector<double>{2.0, -1.0});
  const auto y = scale_channels(a, gate);
  EXPECT_EQ(y(0, 1, 2), 2.0 * a(0, 1, 2));
  EXPECT_EQ(y(1, 2, 0), -a(1, 2, 0));
}

}  // namespace
}  // namespace a2fpn
