// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "a2fpn/init.hpp"
#include "a2fpn/ops.hpp"
#include "a2fpn/pyramid.hpp"

namespace a2fpn {
namespace {

namespace fs = std::filesystem;

const Arch kArchs[] = {Arch::fpn, Arch::pafpn, Arch::a2fpn, Arch::a2fpn_lite};

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("a2fpn_pyramid_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Config, ArchNamesRoundTrip) {
  for (Arch a : kArchs) EXPECT_EQ(parse_arch(to_string(a)), a);
  EXPECT_THROW(parse_arch("retinanet"), std::invalid_argument);
}

TEST(Config, ReferencePresets) {
  const auto full = reference_config(Arch::a2fpn);
  EXPECT_EQ(full.c, 256u);
  EXPECT_EQ(full.entity_counts(), (std::vector<std::size_t>{256, 192, 128, 64}));
  EXPECT_TRUE(full.extra_conv);
  const auto lite = reference_config(Arch::a2fpn_lite);
  EXPECT_EQ(lite.c, 128u);
  EXPECT_EQ(lite.entity_counts(), (std::vector<std::size_t>{128, 96, 64, 32}));
  EXPECT_FALSE(lite.extra_conv);
  EXPECT_TRUE(lite.pool_top);
}

TEST(Config, JsonRoundTrip) {
  for (Arch a : kArchs) {
    auto cfg = toy_config(a);
    cfg.gate_act = GateActivation::sigmoid;
    cfg.lambda_o = 0.125;
    const auto back = config_from_json(config_to_json(cfg), PyramidConfig{});
    EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  }
}

TEST(Config, RejectsBadInput) {
  const PyramidConfig base;
  EXPECT_THROW(config_from_json({{"widht", 3}}, base), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"c", "wide"}}, base), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"c", 6}}, base), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"image_size", {100, 64}}}, base), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"k_up", 4}}, base), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"extra_conv", false}}, base), std::invalid_argument);
  EXPECT_THROW(config_from_json({{"dtype", "f16"}}, base), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::array(), base), std::invalid_argument);
}

TEST(Config, LoadsPresetFiles) {
  const auto dir = scratch_dir("load");
  std::ofstream(dir / "lite.json") << R"({"preset": "reference", "arch": "a2fpn_lite", "seed": 3})";
  const auto cfg = load_config(dir / "lite.json");
  EXPECT_EQ(cfg.arch, Arch::a2fpn_lite);
  EXPECT_EQ(cfg.c, 128u);
  EXPECT_EQ(cfg.seed, 3u);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_THROW(load_config(dir / "broken.json"), std::invalid_argument);
  EXPECT_THROW(load_config(dir / "missing.json"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Backbone, ParsesSpecs) {
  EXPECT_EQ(parse_backbone_spec("resnet50").channels[3], 2048u);
  EXPECT_EQ(parse_backbone_spec("8,16,24,32").channels,
            (std::array<std::size_t, 4>{8, 16, 24, 32}));
  EXPECT_THROW(parse_backbone_spec("8,16,24"), std::invalid_argument);
  EXPECT_THROW(parse_backbone_spec("8,16,24,32,40"), std::invalid_argument);
  EXPECT_THROW(parse_backbone_spec("8,x,24,32"), std::invalid_argument);
}

TEST(Forward, FiveLevelsWithExpectedStrides) {
  for (Arch a : kArchs) {
    auto cfg = toy_config(a);
    cfg.dtype = "f64";
    const auto model = init_model<double>(cfg);
    Rng rng(1);
    const auto image = random_uniform<double>({3, 64, 128}, rng, 0.0, 1.0);
    const auto levels = forward_pyramid(image, model, cfg);
    ASSERT_EQ(levels.size(), 5u) << to_string(a);
    for (std::size_t i = 0; i < 5; ++i) {
      const std::size_t stride = std::size_t{4} << i;
      EXPECT_EQ(levels[i].level, i + 2);
      EXPECT_EQ(levels[i].stride, stride);
      EXPECT_EQ(levels[i].data.shape(), (Shape{cfg.c, 64 / stride, 128 / stride}))
          << to_string(a) << " level " << i + 2;
      EXPECT_TRUE(all_finite(levels[i].data));
    }
  }
}

TEST(Forward, RejectsIndivisibleImages) {
  const auto cfg = toy_config(Arch::a2fpn);
  const auto model = init_model<float>(cfg);
  EXPECT_THROW(forward_pyramid(Tensor<float>({3, 64, 96}), model, cfg), DimensionError);
  EXPECT_THROW(forward_pyramid(Tensor<float>({1, 64, 64}), model, cfg), DimensionError);
}

TEST(Forward, SameSeedSameOutputs) {
  const auto cfg = toy_config(Arch::a2fpn_lite);
  Rng rng(2);
  const auto image = random_uniform<float>({3, 64, 64}, rng, 0.0, 1.0);
  const auto a = forward_pyramid(image, init_model<float>(cfg), cfg);
  const auto b = forward_pyramid(image, init_model<float>(cfg), cfg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].data, b[i].data);
}

TEST(Checkpoint, RoundTripRestoresEveryTensor) {
  const auto cfg = toy_config(Arch::a2fpn);
  const auto saved = init_model<double>(cfg);
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(saved, dir);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));

  auto other_cfg = cfg;
  other_cfg.seed = cfg.seed + 1;
  auto loaded = init_model<double>(other_cfg);
  load_checkpoint(loaded, dir);
  std::vector<const Tensor<double>*> expected, actual;
  visit_model(saved, [&](const std::string&, const Tensor<double>& t) { expected.push_back(&t); });
  visit_model(loaded, [&](const std::string&, const Tensor<double>& t) { actual.push_back(&t); });
  ASSERT_EQ(expected.size(), actual.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(*expected[i], *actual[i]);

  auto mismatched = init_model<double>(toy_config(Arch::a2fpn_lite));
  EXPECT_ANY_THROW(load_checkpoint(mismatched, dir));
  fs::remove_all(dir);
}

TEST(Params, NamesAreUnique) {
  for (Arch a : kArchs) {
    const auto model = init_model<float>(toy_config(a));
    std::set<std::string> names;
    visit_model(model, [&](const std::string& name, const Tensor<float>&) {
      EXPECT_TRUE(names.insert(name).second) << name;
    });
  }
}

TEST(Params, ZeroGradsKeepsLayout) {
  const auto model = init_model<double>(toy_config(Arch::a2fpn));
  const auto grads = zero_grads(model);
  std::vector<Shape> shapes;
  visit_model(model, [&](const std::string&, const Tensor<double>& t) { shapes.push_back(t.shape()); });
  std::size_t i = 0;
  visit_model(grads, [&](const std::string&, const Tensor<double>& t) {
    EXPECT_EQ(t.shape(), shapes[i++]);
    for (double v : t.data()) EXPECT_EQ(v, 0.0);
  });
  EXPECT_EQ(i, shapes.size());
}

TEST(FusionGraph, UnguidedPinnedLiteMatchesPathAggregation) {
  auto lite = reference_config(Arch::a2fpn_lite);
  lite.concat_guidance = false;
  lite.pin_gates = true;
  EXPECT_EQ(fusion_graph(lite), fusion_graph(reference_config(Arch::pafpn)));
  EXPECT_NE(fusion_graph(reference_config(Arch::a2fpn_lite)),
            fusion_graph(reference_config(Arch::pafpn)));
}

TEST(FusionGraph, FpnHasNoBottomUpPath) {
  for (const auto& e : fusion_graph(reference_config(Arch::fpn))) {
    EXPECT_EQ(e.from.rfind("bu", 0), std::string::npos);
    EXPECT_EQ(e.to.rfind("bu", 0), std::string::npos);
  }
  bool has_extra = false;
  for (const auto& e : fusion_graph(reference_config(Arch::a2fpn)))
    has_extra = has_extra || e.kind == "extra";
  EXPECT_TRUE(has_extra);
}

}  // namespace
}  // namespace a2fpn
