// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "a2fpn/analysis.hpp"
#include "a2fpn/fusion.hpp"
#include "a2fpn/init.hpp"
#include "a2fpn/mgc.hpp"
#include "a2fpn/ops.hpp"
#include "a2fpn/pyramid.hpp"
#include "a2fpn/train.hpp"
#include "a2fpn/verify.hpp"

namespace a2fpn {
namespace {

// Pinned tolerances.
constexpr double kGradcheckBudgetSeconds = 60.0;
constexpr double kOracleTolerance = 1e-12;
constexpr std::size_t kOracleCases = 50;
constexpr double kSumTolerance = 1e-6;
constexpr double kRescaleTolerance = 1e-12;
constexpr std::uint64_t kPafpnParamDelta = 3'540'480;
constexpr double kPafpnFlopDelta = 25.77e9;
constexpr double kFlopDeltaRelTolerance = 1e-3;
constexpr double kConvergenceRatio = 0.1;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// ---------------------------------------------------------------------------
// 1. Gradient suite

Outcome gradient_suite() {
  Outcome out;
  const auto start = Clock::now();
  const auto reports = run_gradcheck_suite();
  const double elapsed = seconds_since(start);
  double worst_primitive = 0, worst_composite = 0;
  for (const auto& r : reports) {
    const bool primitive = is_primitive_op(r.op);
    const double limit = primitive ? kPrimitiveTolerance : kCompositeTolerance;
    double& worst = primitive ? worst_primitive : worst_composite;
    worst = std::max(worst, r.max_rel_err);
    out.require(r.pass && r.error.empty() && r.max_rel_err < limit && r.coordinates > 0,
                r.op + " rel err " + std::to_string(r.max_rel_err) + r.error);
  }
  out.require(elapsed < kGradcheckBudgetSeconds, "took " + std::to_string(elapsed) + " s");
  out.detail << reports.size() << " ops, worst primitive " << worst_primitive
             << " (< 1e-6), worst composite " << worst_composite << " (< 1e-4), "
             << elapsed << " s (< 60 s)";
  return out;
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalence

Outcome oracle_equivalence() {
  Outcome out;
  const auto report = oracle_suite(0, kOracleCases, kOracleTolerance);
  double worst = 0;
  for (const auto& op : report.ops) {
    worst = std::max(worst, op.max_abs_dev);
    out.require(op.pass && op.max_abs_dev <= kOracleTolerance,
                op.op + " deviates by " + std::to_string(op.max_abs_dev));
    if (op.op != "pixel_shuffle_roundtrip") {
      out.require(op.cases >= kOracleCases, op.op + " ran " + std::to_string(op.cases) + " cases");
    }
  }
  out.detail << report.ops.size() << " ops x " << kOracleCases << " shapes, max deviation "
             << worst << " (<= 1e-12)";
  return out;
}

// ---------------------------------------------------------------------------
// 3. Invariants

Outcome invariants() {
  Outcome out;
  Rng rng(2024);

  // Attention columns (f32).
  double attn_dev = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto nq = static_cast<std::size_t>(rng.integer(1, 40));
    const auto d = static_cast<std::size_t>(rng.integer(1, 32));
    const auto nk = static_cast<std::size_t>(rng.integer(1, 40));
    const auto a = compatibility(random_normal<float>({nq, d}, rng, 3.0),
                                 random_normal<float>({d, nk}, rng), d);
    for (std::size_t q = 0; q < nq; ++q) {
      double total = 0;
      for (std::size_t k = 0; k < nk; ++k) total += a(k, q);
      attn_dev = std::max(attn_dev, std::abs(total - 1.0));
    }
  }
  out.require(attn_dev <= kSumTolerance, "attention column sums off by " + std::to_string(attn_dev));

  // Reassembly kernels predicted by both fusion directions (f32).
  double kernel_dev = 0;
  for (Direction dir : {Direction::up, Direction::down}) {
    FusionSpec spec;
    spec.channels = 16;
    spec.c_mid = 8;
    spec.direction = dir;
    auto p = init_fusion<float>(spec, rng);
    p.kpred.predictor.weight = random_normal<float>(p.kpred.predictor.weight.shape(), rng, 0.5);
    const auto kernels = predict_kernels_forward(random_normal<float>({32, 8, 8}, rng), p).kernels;
    for (std::size_t y = 0; y < kernels.dim(1); ++y)
      for (std::size_t x = 0; x < kernels.dim(2); ++x) {
        double total = 0;
        for (std::size_t i = 0; i < kernels.dim(0); ++i) total += kernels(i, y, x);
        kernel_dev = std::max(kernel_dev, std::abs(total - 1.0));
      }
  }
  out.require(kernel_dev <= kSumTolerance, "kernel sums off by " + std::to_string(kernel_dev));

  // Positive rescaling of keys (f64).
  double rescale_dev = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = random_normal<double>({7, 6}, rng);
    auto k = random_normal<double>({6, 9}, rng);
    const auto before = compatibility(q, k, 6);
    for (std::size_t j = 0; j < 9; ++j) {
      const double factor = std::exp(rng.uniform(-4.0, 4.0));
      for (std::size_t i = 0; i < 6; ++i) k(i, j) *= factor;
    }
    rescale_dev = std::max(rescale_dev, max_abs_diff(before, compatibility(q, k, 6)));
  }
  out.require(rescale_dev <= kRescaleTolerance, "key rescaling moved " + std::to_string(rescale_dev));

  // Constant map in, constant interior out.
  double constant_dev = 0;
  {
    const Tensor<double> coarse({4, 6, 6}, -2.5);
    const auto up = reassemble_up(coarse, softmax(random_normal<double>({25, 12, 12}, rng), 0), 2);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t y = 4; y < 8; ++y)
        for (std::size_t x = 4; x < 8; ++x)
          constant_dev = std::max(constant_dev, std::abs(up(c, y, x) + 2.5));
    const Tensor<double> fine({4, 12, 12}, 0.75);
    const auto down = reassemble_down(fine, softmax(random_normal<double>({25, 6, 6}, rng), 0), 2);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t y = 1; y < 5; ++y)
        for (std::size_t x = 1; x < 5; ++x)
          constant_dev = std::max(constant_dev, std::abs(down(c, y, x) - 0.75));
  }
  out.require(constant_dev <= 1e-12, "constant map moved " + std::to_string(constant_dev));

  // 2-sigmoid gates at zero pre-activation merge by plain addition.
  bool plain_addition = true;
  for (Direction dir : {Direction::up, Direction::down}) {
    FusionSpec spec;
    spec.channels = 16;
    spec.c_mid = 8;
    spec.direction = dir;
    auto p = init_fusion<double>(spec, rng);
    p.gate.excite = Tensor<double>(p.gate.excite.shape());
    const FusionOptions gated{GateActivation::two_sigmoid, false};
    const FusionOptions pinned{GateActivation::two_sigmoid, true};
    const auto fine = random_normal<double>({16, 8, 8}, rng);
    const auto coarse = random_normal<double>({16, 4, 4}, rng);
    if (dir == Direction::up) {
      const auto tr = fuse_topdown_forward(coarse, fine, p, gated);
      plain_addition = plain_addition && tr.merged == add(tr.resampled, fine) &&
                       tr.output == fuse_topdown(coarse, fine, p, pinned);
    } else {
      const auto tr = fuse_bottomup_forward(fine, coarse, p, gated);
      plain_addition = plain_addition && tr.merged == add(coarse, tr.resampled) &&
                       tr.output == fuse_bottomup(fine, coarse, p, pinned);
    }
  }
  out.require(plain_addition, "2-sigmoid gates at zero do not reduce to addition");

  // Orthogonality penalty at initialization.
  MgcShape shape;
  shape.width = 64;
  shape.in_channels = {64, 64, 64, 64, 64};
  shape.entity_counts = {64, 48, 32, 16};
  const auto mgc = init_mgc<double>(shape, rng);
  const double ortho = orthogonal_reg_loss(mgc);
  out.require(ortho <= 1e-20, "orthogonal loss " + std::to_string(ortho));

  out.detail << "attention sums " << attn_dev << ", kernel sums " << kernel_dev
             << " (<= 1e-6, f32); key rescale " << rescale_dev << " (<= 1e-12); constant map "
             << constant_dev << "; 2-sigmoid merge bit-exact " << (plain_addition ? "yes" : "no")
             << "; orthogonal loss " << ortho;
  return out;
}

// ---------------------------------------------------------------------------
// 4. Complexity deltas

Outcome complexity_deltas() {
  Outcome out;
  const auto backbone = BackboneSpec::resnet50();
  const auto fpn_params = count_params(Arch::fpn, backbone, reference_config(Arch::fpn)).params;
  const auto pafpn_params =
      count_params(Arch::pafpn, backbone, reference_config(Arch::pafpn)).params;
  const std::int64_t param_delta =
      static_cast<std::int64_t>(pafpn_params) - static_cast<std::int64_t>(fpn_params);
  const auto fpn = count_flops(Arch::fpn, backbone, 1280, 832, reference_config(Arch::fpn));
  const auto pafpn = count_flops(Arch::pafpn, backbone, 1280, 832, reference_config(Arch::pafpn));
  const double flop_delta = static_cast<double>(diff_report(pafpn, fpn).flops);
  const double flop_rel = (flop_delta - kPafpnFlopDelta) / kPafpnFlopDelta;
  out.require(param_delta == static_cast<std::int64_t>(kPafpnParamDelta),
              "param delta " + std::to_string(param_delta));
  out.require(std::abs(flop_rel) <= kFlopDeltaRelTolerance,
              "FLOP delta off by " + std::to_string(flop_rel));
  out.detail << "PAFPN - FPN params " << param_delta << " (== 3540480), FLOPs "
             << flop_delta / 1e9 << "G (25.77G, rel " << flop_rel << ", within 0.1%)";
  return out;
}

void print_a2_delta_report() {
  const auto cmp = compare_with_reference(reference_config(Arch::a2fpn));
  std::printf("INFO  4  A2-FPN - PAFPN: params %.3fM vs %.2fM (%+.1f%%, %s +-20%%), "
              "FLOPs %.2fG vs %.2fG (%+.1f%%, %s +-20%%)\n",
              static_cast<double>(cmp.delta.params) / 1e6, cmp.reference.params / 1e6,
              100 * cmp.params_rel, cmp.params_within ? "within" : "outside",
              static_cast<double>(cmp.delta.flops) / 1e9, cmp.reference.flops / 1e9,
              100 * cmp.flops_rel, cmp.flops_within ? "within" : "outside");
  for (const auto& c : cmp.components) {
    std::printf("INFO  4    %-12s params %+12lld  FLOPs %+10.2fG\n", c.name.c_str(),
                static_cast<long long>(c.params), static_cast<double>(c.flops) / 1e9);
  }
}

// ---------------------------------------------------------------------------
// 5. Shape and stride contract

Outcome shape_contract() {
  Outcome out;
  for (Arch arch : {Arch::a2fpn, Arch::a2fpn_lite}) {
    const auto cfg = reference_config(arch);
    const std::size_t width = arch == Arch::a2fpn ? 256 : 128;
    const auto model = init_model<float>(cfg);
    Rng rng(5);
    const auto image = random_uniform<float>({3, 256, 256}, rng, 0.0, 1.0);
    const auto levels = forward_a2fpn(toy_backbone_forward(image, model.backbone), model.neck, cfg);
    out.require(levels.size() == 5, std::string(to_string(arch)) + " emitted " +
                                        std::to_string(levels.size()) + " levels");
    out.detail << to_string(arch) << " strides {";
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const std::size_t stride = std::size_t{4} << i;
      const Shape expected{width, 256 / stride, 256 / stride};
      out.require(levels[i].stride == stride && levels[i].data.shape() == expected &&
                      all_finite(levels[i].data),
                  std::string(to_string(arch)) + " level " + std::to_string(i + 2) + " is " +
                      shape_to_string(levels[i].data.shape()));
      out.detail << (i ? "," : "") << levels[i].stride;
    }
    out.detail << "} c=" << (levels.empty() ? 0 : levels[0].data.dim(0)) << "; ";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 6. Toy training

template <typename T>
bool same_params(const ModelParams<T>& a, const ModelParams<T>& b) {
  std::vector<const Tensor<T>*> lhs;
  visit_model(a, [&](const std::string&, const Tensor<T>& t) { lhs.push_back(&t); });
  std::size_t i = 0;
  bool same = true;
  visit_model(b, [&](const std::string&, const Tensor<T>& t) {
    same = same && i < lhs.size() && *lhs[i++] == t;
  });
  return same && i == lhs.size();
}

template <typename T>
bool same_run(const ToyTrainResult<T>& a, const ToyTrainResult<T>& b) {
  if (a.history.size() != b.history.size()) return false;
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    if (a.history[i].loss != b.history[i].loss || a.history[i].reg_loss != b.history[i].reg_loss) {
      return false;
    }
  }
  return same_params(a.params, b.params);
}

struct ToyRuns {
  ToyTrainResult<float> a2fpn;
  ToyTrainResult<float> lite;
};

Outcome toy_training(ToyRuns& runs) {
  Outcome out;
  ToyTrainOptions opt;  // 500 steps, 8 images
  for (Arch arch : {Arch::a2fpn, Arch::a2fpn_lite}) {
    const auto cfg = toy_config(arch);
    opt.workers = worker_count_from_env();
    auto start = Clock::now();
    auto first = train_toy<float>(cfg, opt);
    const double first_seconds = seconds_since(start);

    ::setenv("A2FPN_THREADS", "4", 1);
    opt.workers = worker_count_from_env();
    start = Clock::now();
    const auto second = train_toy<float>(cfg, opt);
    const double second_seconds = seconds_since(start);
    ::setenv("A2FPN_THREADS", "1", 1);

    const std::string name(to_string(arch));
    out.require(first.converged(), name + " final/initial " +
                                       std::to_string(first.final_loss() / first.initial_loss()));
    out.require(first.final_loss() < kConvergenceRatio * first.initial_loss(), name + " loss ratio");
    out.require(same_run(first, second), name + " differs between 1 and 4 workers");
    out.detail << name << " " << first.initial_loss() << " -> " << first.final_loss() << " ("
               << first.history.size() - 1 << " steps, " << first_seconds << " s / "
               << second_seconds << " s, 1 vs 4 workers bit-identical "
               << (same_run(first, second) ? "yes" : "no") << "); ";
    (arch == Arch::a2fpn ? runs.a2fpn : runs.lite) = std::move(first);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 7. Ablation plumbing

Outcome ablation_plumbing(const ToyRuns& runs) {
  Outcome out;
  Rng rng(77);
  bool carafe_equal = true, cap_equal = true;
  for (int trial = 0; trial < 5; ++trial) {
    FusionSpec spec;
    spec.channels = 16;
    spec.c_mid = 8;
    spec.concat_guidance = false;
    spec.gated = trial % 2 == 0;
    const FusionOptions pinned{GateActivation::two_sigmoid, true};
    spec.direction = Direction::up;
    const auto up = init_fusion<double>(spec, rng);
    const auto upper = random_normal<double>({16, 4, 6}, rng);
    const auto lateral = random_normal<double>({16, 8, 12}, rng);
    carafe_equal = carafe_equal &&
                   carafe_baseline(upper, lateral, up) == fuse_topdown(upper, lateral, up, pinned);
    spec.direction = Direction::down;
    const auto down = init_fusion<float>(spec, rng);
    const auto lower = random_normal<float>({16, 8, 12}, rng);
    const auto td = random_normal<float>({16, 4, 6}, rng);
    cap_equal = cap_equal && cap_baseline(lower, td, down) == fuse_bottomup(lower, td, down, pinned);
  }
  out.require(carafe_equal, "carafe baseline differs");
  out.require(cap_equal, "cap baseline differs");

  auto sigmoid_cfg = toy_config(Arch::a2fpn);
  sigmoid_cfg.gate_act = GateActivation::sigmoid;
  const auto sigmoid_run = train_toy<float>(sigmoid_cfg, ToyTrainOptions{});
  auto finite_run = [](const ToyTrainResult<float>& r) {
    for (const auto& h : r.history)
      if (!std::isfinite(h.loss)) return false;
    return !r.diverged && r.final_loss() < r.initial_loss();
  };
  out.require(finite_run(sigmoid_run), "sigmoid gates diverged");
  out.require(finite_run(runs.a2fpn), "2-sigmoid gates diverged");
  out.detail << "carafe/cap baselines bit-exact " << (carafe_equal && cap_equal ? "yes" : "no")
             << "; sigmoid " << sigmoid_run.initial_loss() << " -> " << sigmoid_run.final_loss()
             << ", 2-sigmoid " << runs.a2fpn.initial_loss() << " -> " << runs.a2fpn.final_loss();
  return out;
}

int run_all() {
  ::setenv("A2FPN_THREADS", "1", 1);
  bool all = true;
  auto report = [&](int id, const char* title, const std::function<Outcome()>& check) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.require(false, std::string("threw: ") + e.what());
    }
    all = all && o.pass;
    std::printf("%s  %d  %-22s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title,
                o.detail.str().c_str(), seconds_since(start));
    std::fflush(stdout);
  };

  ToyRuns runs;
  report(1, "gradient suite", gradient_suite);
  report(2, "oracle equivalence", oracle_equivalence);
  report(3, "invariants", invariants);
  report(4, "complexity deltas", complexity_deltas);
  print_a2_delta_report();
  report(5, "shape/stride contract", shape_contract);
  report(6, "toy training", [&] { return toy_training(runs); });
  report(7, "ablation plumbing", [&] { return ablation_plumbing(runs); });
  return all ? 0 : 1;
}

}  // namespace
}  // namespace a2fpn

int main() { return a2fpn::run_all(); }
