// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "a2fpn/analysis.hpp"
#include "a2fpn/init.hpp"

namespace a2fpn {
namespace {

const Arch kArchs[] = {Arch::fpn, Arch::pafpn, Arch::a2fpn, Arch::a2fpn_lite};

TEST(ConvCounts, WorkedExamples) {
  EXPECT_EQ(conv_param_count(256, 256, 1, true), 65'792u);
  EXPECT_EQ(conv_param_count(256, 256, 3, false), 589'824u);
  EXPECT_EQ(conv_flop_count(256, 256, 3, 160, 104), 589'824ull * 160 * 104);
  EXPECT_EQ(conv_flop_count(256, 256, 3, 160, 104), 9'814'671'360ull);
}

TEST(Params, MatchInstantiatedNecks) {
  for (Arch a : kArchs) {
    for (const auto& base : {toy_config(a), reference_config(a)}) {
      auto cfg = base;
      for (bool pinned : {false, true}) {
        cfg.pin_gates = pinned;
        Rng rng(0);
        const auto neck = init_neck<float>(cfg, rng);
        EXPECT_EQ(count_params(a, cfg.backbone, cfg).params, neck_param_count(neck))
            << to_string(a) << " c=" << cfg.c << " pinned=" << pinned;
      }
    }
  }
}

TEST(Params, EmptyNeckIsZero) {
  auto cfg = reference_config(Arch::a2fpn);
  cfg.c = 0;
  const auto r = count_params(Arch::a2fpn, BackboneSpec::resnet50(), cfg);
  EXPECT_EQ(r.params, 0u);
  EXPECT_EQ(r.flops, 0u);
}

TEST(Flops, TotalsAreLineSums) {
  for (Arch a : kArchs) {
    const auto r = count_flops(a, BackboneSpec::resnet50(), 1280, 832, reference_config(a));
    std::uint64_t params = 0, flops = 0;
    for (const auto& line : r.lines) {
      params += line.params;
      flops += line.flops;
    }
    EXPECT_EQ(r.params, params);
    EXPECT_EQ(r.flops, flops);
    EXPECT_EQ(r.params, count_params(a, BackboneSpec::resnet50(), reference_config(a)).params);
  }
}

TEST(Flops, FpnLateralLineByHand) {
  const auto r = count_flops(Arch::fpn, BackboneSpec::resnet50(), 1280, 832,
                             reference_config(Arch::fpn));
  const auto* lateral = r.find("fpn.lateral.l2");
  ASSERT_NE(lateral, nullptr);
  EXPECT_EQ(lateral->params, 256u * 256 + 256);
  EXPECT_EQ(lateral->flops, 256ull * 256 * 320 * 208);
  const auto* smooth = r.find("fpn.smooth.l5");
  ASSERT_NE(smooth, nullptr);
  EXPECT_EQ(smooth->flops, 256ull * 256 * 9 * 40 * 26);
}

TEST(Flops, AffineInImageArea) {
  for (Arch a : kArchs) {
    const auto cfg = reference_config(a);
    const auto small = count_flops(a, BackboneSpec::resnet50(), 640, 448, cfg);
    const auto medium = count_flops(a, BackboneSpec::resnet50(), 1280, 896, cfg);
    const auto large = count_flops(a, BackboneSpec::resnet50(), 2560, 1792, cfg);
    EXPECT_EQ(small.params, large.params);
    EXPECT_EQ(large.flops - medium.flops, 4 * (medium.flops - small.flops)) << to_string(a);
    if (!cfg.is_a2()) {
      EXPECT_EQ(4 * small.flops, medium.flops) << to_string(a);
    }
  }
}

TEST(Flops, RejectIndivisibleExtents) {
  const auto cfg = reference_config(Arch::fpn);
  EXPECT_THROW(count_flops(Arch::fpn, BackboneSpec::resnet50(), 1280, 800, cfg), DimensionError);
  EXPECT_THROW(count_flops(Arch::fpn, BackboneSpec::resnet50(), 0, 832, cfg), DimensionError);
}

TEST(Delta, PathAggregationOverFpn) {
  const auto fpn = count_flops(Arch::fpn, BackboneSpec::resnet50(), 1280, 832,
                               reference_config(Arch::fpn));
  const auto pafpn = count_flops(Arch::pafpn, BackboneSpec::resnet50(), 1280, 832,
                                 reference_config(Arch::pafpn));
  const auto d = diff_report(pafpn, fpn);
  // Three stride-2 3x3 convs and three 3x3 convs, c = 256, with bias.
  EXPECT_EQ(d.params, 6 * (589'824 + 256));
  EXPECT_EQ(d.from, "fpn");
  EXPECT_EQ(d.to, "pafpn");
}

TEST(Delta, AntisymmetricAndZeroOnSelf) {
  const auto a = count_flops(Arch::a2fpn, BackboneSpec::resnet50(), 1280, 832,
                             reference_config(Arch::a2fpn));
  const auto b = count_flops(Arch::pafpn, BackboneSpec::resnet50(), 1280, 832,
                             reference_config(Arch::pafpn));
  const auto ab = diff_report(a, b);
  const auto ba = diff_report(b, a);
  EXPECT_EQ(ab.params, -ba.params);
  EXPECT_EQ(ab.flops, -ba.flops);
  ASSERT_EQ(ab.lines.size(), ba.lines.size());
  for (std::size_t i = 0; i < ab.lines.size(); ++i) {
    EXPECT_EQ(ab.lines[i].name, ba.lines[i].name);
    EXPECT_EQ(ab.lines[i].flops, -ba.lines[i].flops);
  }
  const auto self = diff_report(a, a);
  EXPECT_EQ(self.params, 0);
  EXPECT_EQ(self.flops, 0);
  for (const auto& line : self.lines) EXPECT_EQ(line.flops, 0);
}

TEST(Delta, RejectsImageMismatch) {
  const auto cfg = reference_config(Arch::fpn);
  const auto a = count_flops(Arch::fpn, BackboneSpec::resnet50(), 1280, 832, cfg);
  const auto b = count_flops(Arch::fpn, BackboneSpec::resnet50(), 640, 448, cfg);
  EXPECT_THROW(diff_report(a, b), std::invalid_argument);
}

TEST(Report, TableListsEveryMethod) {
  const auto cfg = reference_config(Arch::fpn);
  const auto r = count_flops(Arch::fpn, BackboneSpec::resnet50(), 1280, 832, cfg);
  const std::string table = format_table({r});
  EXPECT_NE(table.find("Method"), std::string::npos);
  EXPECT_NE(table.find("#FLOPs"), std::string::npos);
  EXPECT_NE(table.find("fpn"), std::string::npos);
  EXPECT_NE(table.find("1280"), std::string::npos);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("params").get<std::uint64_t>(), r.params);
}

}  // namespace
}  // namespace a2fpn
