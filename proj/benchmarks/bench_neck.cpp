// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "a2fpn/analysis.hpp"
#include "a2fpn/init.hpp"
#include "a2fpn/pyramid.hpp"
#include "a2fpn/train.hpp"

namespace a2fpn {
namespace {

void BM_ToyPyramidForward(benchmark::State& state) {
  const auto arch = static_cast<Arch>(state.range(0));
  const PyramidConfig cfg = toy_config(arch);
  const auto model = init_model<float>(cfg);
  Rng rng(11);
  const auto image = random_uniform<float>({3, cfg.image_h, cfg.image_w}, rng, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(forward_pyramid(image, model, cfg));
  state.SetLabel(std::string(to_string(arch)));
}
BENCHMARK(BM_ToyPyramidForward)
    ->Arg(static_cast<int>(Arch::fpn))
    ->Arg(static_cast<int>(Arch::pafpn))
    ->Arg(static_cast<int>(Arch::a2fpn))
    ->Arg(static_cast<int>(Arch::a2fpn_lite))
    ->Unit(benchmark::kMillisecond);

void BM_ToyLossAndGradient(benchmark::State& state) {
  const auto arch = static_cast<Arch>(state.range(0));
  const PyramidConfig cfg = toy_config(arch);
  const auto model = init_model<float>(cfg);
  const auto batch = make_synthetic_dataset<float>(1, cfg.image_h, cfg.image_w, 3);
  auto grad = zero_grads(model);
  for (auto _ : state) benchmark::DoNotOptimize(toy_loss(model, cfg, batch, 1, &grad));
  state.SetLabel(std::string(to_string(arch)));
}
BENCHMARK(BM_ToyLossAndGradient)
    ->Arg(static_cast<int>(Arch::a2fpn))
    ->Arg(static_cast<int>(Arch::a2fpn_lite))
    ->Unit(benchmark::kMillisecond);

void BM_CountFlops(benchmark::State& state) {
  const PyramidConfig cfg = reference_config(Arch::a2fpn);
  for (auto _ : state) {
    benchmark::DoNotOptimize(count_flops(Arch::a2fpn, BackboneSpec::resnet50(), 1280, 832, cfg));
  }
}
BENCHMARK(BM_CountFlops);

}  // namespace
}  // namespace a2fpn
