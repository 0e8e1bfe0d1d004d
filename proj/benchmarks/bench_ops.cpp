// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "a2fpn/fusion.hpp"
#include "a2fpn/init.hpp"
#include "a2fpn/mgc.hpp"
#include "a2fpn/nn_ops.hpp"
#include "a2fpn/ops.hpp"

namespace a2fpn {
namespace {

void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const auto conv = make_conv<float>(c, c, 3, 1, true, rng);
  const auto x = random_normal<float>({c, hw, hw}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(conv, x));
  state.counters["FLOP/s"] = benchmark::Counter(
      static_cast<double>(c * c * 9 * hw * hw), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 64})->Args({64, 32})->Args({128, 16});

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  const auto conv = make_conv<float>(c, c, 3, 1, true, rng);
  const auto x = random_normal<float>({c, hw, hw}, rng);
  const auto dy = random_normal<float>({c, hw, hw}, rng);
  auto grad = zeros_like(conv);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(conv, x, dy, grad));
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 64})->Args({64, 32});

void BM_ReassembleUp(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const std::size_t hw = 32, k = 5;
  Rng rng(3);
  const auto coarse = random_normal<float>({c, hw, hw}, rng);
  const auto kernels = softmax(random_normal<float>({k * k, 2 * hw, 2 * hw}, rng), 0);
  for (auto _ : state) benchmark::DoNotOptimize(reassemble_up(coarse, kernels, 2));
}
BENCHMARK(BM_ReassembleUp)->Arg(16)->Arg(64);

void BM_ReassembleDown(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const std::size_t hw = 32, k = 5;
  Rng rng(4);
  const auto fine = random_normal<float>({c, 2 * hw, 2 * hw}, rng);
  const auto kernels = softmax(random_normal<float>({k * k, hw, hw}, rng), 0);
  for (auto _ : state) benchmark::DoNotOptimize(reassemble_down(fine, kernels, 2));
}
BENCHMARK(BM_ReassembleDown)->Arg(16)->Arg(64);

void BM_Compatibility(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  Rng rng(5);
  const auto q = random_normal<float>({n, d}, rng);
  const auto k = random_normal<float>({d, 1024}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(compatibility(q, k, d));
}
BENCHMARK(BM_Compatibility)->Arg(64)->Arg(256);

}  // namespace
}  // namespace a2fpn
