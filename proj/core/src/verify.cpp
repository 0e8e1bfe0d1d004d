// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <utility>

#include "a2fpn/fusion.hpp"
#include "a2fpn/init.hpp"
#include "a2fpn/mgc.hpp"
#include "a2fpn/nn_ops.hpp"
#include "a2fpn/ops.hpp"
#include "a2fpn/pyramid.hpp"

namespace a2fpn {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelErrFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double eval_checked(const std::function<double(const Tensor<double>&)>& f,
                    const Tensor<double>& x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw NumericError("function value is not finite");
  return v;
}

}  // namespace

Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                const Tensor<double>& x, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  Tensor<double> probe = x;
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double fp = eval_checked(f, probe);
    probe[i] = x[i] - eps;
    const double fm = eval_checked(f, probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2 * eps);
  }
  return g;
}

namespace {

using D = double;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Gradient-check cases
// ---------------------------------------------------------------------------

using Outputs = std::vector<Tensor<D>>;

// The checked loss is sum_k <weights[k], forward()[k]>.
struct GradCase {
  std::vector<Shape> shapes;
  std::vector<std::string> names;
  std::vector<Tensor<D>*> vars;
  std::function<Outputs()> forward;
  Outputs weights;
  std::function<std::vector<Tensor<D>>()> analytic;
  std::size_t coords = 24;  // per tensor
  std::shared_ptr<void> keep;

  void add(std::string name, Tensor<D>& t) {
    if (t.empty()) return;
    names.push_back(std::move(name));
    vars.push_back(&t);
  }
};

struct GradList {
  std::vector<Tensor<D>> items;
  void add(const Tensor<D>& t) {
    if (!t.empty()) items.push_back(t);
  }
};

Tensor<D> projection(const Shape& shape, Rng& rng) {
  return random_normal<D>(shape, rng, 1.0 / std::sqrt(static_cast<D>(shape_numel(shape))));
}

void randomize(Tensor<D>& t, Rng& rng) {
  if (t.rank() >= 2) {
    const D fan = static_cast<D>(t.size() / t.dim(0));
    t = random_normal<D>(t.shape(), rng, 1.0 / std::sqrt(fan));
  } else {
    t = random_normal<D>(t.shape(), rng, 0.5);
  }
}

template <typename P, typename V>
void randomize_all(P& p, V visit, Rng& rng) {
  visit(p, [&](const std::string&, Tensor<D>& t) { randomize(t, rng); });
}

template <typename P, typename V>
P zeroed(const P& p, V visit) {
  P g = p;
  visit(g, [](const std::string&, Tensor<D>& t) { t.fill(0); });
  return g;
}

template <typename P, typename V>
void add_params(GradCase& c, P& p, V visit) {
  visit(p, [&](const std::string& name, Tensor<D>& t) { c.add(name, t); });
}

template <typename P, typename V>
void add_grads(GradList& out, P& g, V visit) {
  visit(g, [&](const std::string&, Tensor<D>& t) { out.add(t); });
}

auto conv_visitor(std::string prefix) {
  return [prefix](auto& conv, auto&& f) { visit_conv(conv, prefix, f); };
}

auto gcn_visitor() {
  return [](auto& g, auto&& f) { visit_gcn(g, "gcn", f); };
}

auto fusion_visitor() {
  return [](auto& site, auto&& f) { visit_fusion(site, "site", f); };
}

auto mgc_visitor() {
  return [](auto& m, auto&& f) { visit_mgc(m, f); };
}

auto level_visitor() {
  return [](auto& lvl, auto&& f) {
    if (!lvl.entities.empty()) f("entities", lvl.entities);
    if (!lvl.embed.empty()) f("embed", lvl.embed);
    visit_gcn(lvl.gcn, "gcn", f);
    if (!lvl.query.empty()) f("query", lvl.query);
    if (!lvl.residual.empty()) f("residual", lvl.residual);
  };
}

auto neck_visitor() {
  return [](auto& n, auto&& f) { visit_neck(n, f); };
}

auto backbone_visitor() {
  return [](auto& b, auto&& f) {
    visit_conv(b.stem1, "stem1", f);
    visit_conv(b.stem2, "stem2", f);
    for (std::size_t i = 0; i < b.stages.size(); ++i)
      visit_conv(b.stages[i], "stage" + std::to_string(i + 3), f);
  };
}

// Single-input, single-output op with a closed-form backward.
GradCase unary_case(Tensor<D> x, std::function<Tensor<D>(const Tensor<D>&)> fwd,
                    std::function<Tensor<D>(const Tensor<D>&, const Tensor<D>&)> bwd,
                    Rng& rng) {
  struct S {
    Tensor<D> x, w;
  };
  auto s = std::make_shared<S>();
  s->x = std::move(x);
  s->w = projection(fwd(s->x).shape(), rng);
  GradCase c;
  c.shapes = {s->x.shape()};
  c.add("x", s->x);
  c.forward = [s, fwd] { return Outputs{fwd(s->x)}; };
  c.weights = {s->w};
  c.analytic = [s, bwd] { return std::vector<Tensor<D>>{bwd(s->x, s->w)}; };
  c.keep = s;
  return c;
}

GradCase matmul_case(Rng& rng) {
  struct S {
    Tensor<D> a, b, w;
  };
  auto s = std::make_shared<S>();
  s->a = random_normal<D>({3, 4}, rng);
  s->b = random_normal<D>({4, 5}, rng);
  s->w = projection({3, 5}, rng);
  GradCase c;
  c.shapes = {s->a.shape(), s->b.shape()};
  c.add("a", s->a);
  c.add("b", s->b);
  c.forward = [s] { return Outputs{matmul(s->a, s->b)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto g = matmul_backward(s->a, s->b, s->w);
    return std::vector<Tensor<D>>{g.da, g.db};
  };
  c.keep = s;
  return c;
}

GradCase layer_norm_case(Rng& rng) {
  struct S {
    Tensor<D> x, gain, shift, w;
  };
  auto s = std::make_shared<S>();
  s->x = random_normal<D>({6}, rng);
  s->gain = random_normal<D>({6}, rng);
  s->shift = random_normal<D>({6}, rng);
  s->w = projection({6}, rng);
  GradCase c;
  c.shapes = {s->x.shape()};
  c.add("x", s->x);
  c.add("gain", s->gain);
  c.add("shift", s->shift);
  c.forward = [s] { return Outputs{layer_norm(s->x, s->gain, s->shift)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto g = layer_norm_backward(s->x, s->gain, s->w);
    return std::vector<Tensor<D>>{g.dx, g.dgain, g.dshift};
  };
  c.keep = s;
  return c;
}

GradCase conv_case(Rng& rng, std::size_t k, std::size_t stride) {
  struct S {
    ConvParams<D> p;
    Tensor<D> x, w;
  };
  auto s = std::make_shared<S>();
  s->p = make_conv<D>(2, 3, k, stride, true, rng);
  randomize_all(s->p, conv_visitor("conv"), rng);
  s->x = random_normal<D>({2, 5, 5}, rng);
  s->w = projection(conv2d(s->p, s->x).shape(), rng);
  GradCase c;
  c.shapes = {s->x.shape(), s->p.weight.shape()};
  c.add("x", s->x);
  add_params(c, s->p, conv_visitor("conv"));
  c.forward = [s] { return Outputs{conv2d(s->p, s->x)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto g = zeros_like(s->p);
    GradList out;
    out.add(conv2d_backward(s->p, s->x, s->w, g));
    add_grads(out, g, conv_visitor("conv"));
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase scale_channels_case(Rng& rng) {
  struct S {
    Tensor<D> x, gate, w;
  };
  auto s = std::make_shared<S>();
  s->x = random_normal<D>({3, 4, 4}, rng);
  s->gate = random_normal<D>({3}, rng);
  s->w = projection(s->x.shape(), rng);
  GradCase c;
  c.shapes = {s->x.shape(), s->gate.shape()};
  c.add("x", s->x);
  c.add("gate", s->gate);
  c.forward = [s] { return Outputs{scale_channels(s->x, s->gate)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto g = scale_channels_backward(s->x, s->gate, s->w);
    return std::vector<Tensor<D>>{g.dx, g.dgate};
  };
  c.keep = s;
  return c;
}

GradCase compatibility_case(Rng& rng) {
  struct S {
    Tensor<D> q, k, w;
  };
  auto s = std::make_shared<S>();
  s->q = random_normal<D>({3, 4}, rng, 0.5);
  s->k = random_normal<D>({4, 6}, rng);
  s->w = projection({6, 3}, rng);
  GradCase c;
  c.shapes = {s->q.shape(), s->k.shape()};
  c.add("queries", s->q);
  c.add("keys", s->k);
  c.forward = [s] { return Outputs{compatibility(s->q, s->k, 4)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto attn = compatibility_forward(s->q, s->k, 4);
    auto g = compatibility_backward(s->q, s->k, 4, attn, s->w);
    return std::vector<Tensor<D>>{g.dqueries, g.dkeys};
  };
  c.keep = s;
  return c;
}

MgcParams<D> random_mgc(const MgcShape& shape, Rng& rng) {
  auto p = init_mgc<D>(shape, rng);
  randomize_all(p, mgc_visitor(), rng);
  return p;
}

GradCase collect_case(Rng& rng) {
  struct S {
    MgcLevelParams<D> lvl;
    Tensor<D> f, w;
  };
  auto s = std::make_shared<S>();
  s->lvl = random_mgc({8, {4}, {2}, 1e-4}, rng).levels[0];
  s->lvl.query = Tensor<D>();
  s->lvl.residual = Tensor<D>();
  s->lvl.gcn = GcnParams<D>();
  s->f = random_normal<D>({4, 3, 3}, rng);
  s->w = projection({8, 2}, rng);
  GradCase c;
  c.shapes = {s->f.shape(), s->lvl.entities.shape()};
  c.add("feature", s->f);
  add_params(c, s->lvl, level_visitor());
  c.forward = [s] { return Outputs{collect_context(s->f, s->lvl)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto g = zeroed(s->lvl, level_visitor());
    auto tr = collect_context_forward(s->f, s->lvl);
    GradList out;
    out.add(collect_context_backward(tr, s->lvl, s->w, g));
    add_grads(out, g, level_visitor());
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase ortho_case(Rng& rng) {
  struct S {
    MgcParams<D> p;
  };
  auto s = std::make_shared<S>();
  s->p = random_mgc({8, {4, 6}, {3, 2}, 0.5}, rng);
  GradCase c;
  c.shapes = {s->p.levels[0].entities.shape(), s->p.levels[1].entities.shape()};
  for (std::size_t i = 0; i < s->p.levels.size(); ++i)
    c.add("entities" + std::to_string(i), s->p.levels[i].entities);
  c.forward = [s] { return Outputs{Tensor<D>({1}, orthogonal_reg_loss(s->p))}; };
  c.weights = {Tensor<D>({1}, 1.0)};
  c.analytic = [s] {
    auto g = zeroed(s->p, mgc_visitor());
    orthogonal_reg_backward(s->p, 1.0, g);
    GradList out;
    for (auto& lvl : g.levels) out.add(lvl.entities);
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase gcn_case(Rng& rng) {
  struct S {
    GcnParams<D> p;
    Tensor<D> g, w;
  };
  auto s = std::make_shared<S>();
  s->p = init_gcn<D>(8, rng);
  randomize_all(s->p, gcn_visitor(), rng);
  s->g = random_normal<D>({8, 5}, rng);
  s->w = projection({8, 5}, rng);
  GradCase c;
  c.shapes = {s->g.shape()};
  c.add("g", s->g);
  add_params(c, s->p, gcn_visitor());
  c.forward = [s] { return Outputs{gcn_layer(s->g, s->p)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto grad = zeroed(s->p, gcn_visitor());
    GradList out;
    out.add(gcn_backward(gcn_forward(s->g, s->p), s->p, s->w, grad));
    add_grads(out, grad, gcn_visitor());
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase reason_case(Rng& rng) {
  struct S {
    GcnParams<D> p;
    std::vector<Tensor<D>> banks;
    Tensor<D> w;
  };
  auto s = std::make_shared<S>();
  s->p = init_gcn<D>(8, rng);
  randomize_all(s->p, gcn_visitor(), rng);
  s->banks = {random_normal<D>({8, 3}, rng), random_normal<D>({8, 2}, rng),
              random_normal<D>({8, 1}, rng)};
  s->w = projection({8, 6}, rng);
  GradCase c;
  for (std::size_t i = 0; i < s->banks.size(); ++i) {
    c.shapes.push_back(s->banks[i].shape());
    c.add("bank" + std::to_string(i), s->banks[i]);
  }
  add_params(c, s->p, gcn_visitor());
  c.forward = [s] { return Outputs{reason_multilevel(s->banks, s->p)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto grad = zeroed(s->p, gcn_visitor());
    GradList out;
    for (auto& t : reason_multilevel_backward(reason_multilevel_forward(s->banks, s->p), s->p,
                                              s->w, grad))
      out.add(t);
    add_grads(out, grad, gcn_visitor());
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase distribute_case(Rng& rng) {
  struct S {
    MgcLevelParams<D> lvl;
    Tensor<D> out_proj, f, fused, w;
  };
  auto s = std::make_shared<S>();
  auto m = random_mgc({8, {6}, {}, 1e-4}, rng);
  s->lvl = m.levels[0];
  s->out_proj = m.out;
  s->f = random_normal<D>({6, 3, 2}, rng);
  s->fused = random_normal<D>({8, 4}, rng);
  s->w = projection({8, 3, 2}, rng);
  GradCase c;
  c.shapes = {s->f.shape(), s->fused.shape()};
  c.add("feature", s->f);
  c.add("fused", s->fused);
  add_params(c, s->lvl, level_visitor());
  c.add("out", s->out_proj);
  c.forward = [s] { return Outputs{distribute_context(s->f, s->fused, s->lvl, s->out_proj)}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto lg = zeroed(s->lvl, level_visitor());
    Tensor<D> og(s->out_proj.shape());
    auto tr = distribute_context_forward(s->f, s->fused, s->lvl, s->out_proj);
    auto g = distribute_context_backward(tr, s->fused, s->lvl, s->out_proj, s->w, lg, og);
    GradList out;
    out.add(g.dfeature);
    out.add(g.dfused);
    add_grads(out, lg, level_visitor());
    out.add(og);
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase mgc_case(Rng& rng) {
  struct S {
    MgcParams<D> p;
    std::vector<Tensor<D>> f, w;
  };
  auto s = std::make_shared<S>();
  s->p = random_mgc({8, {4, 6, 8}, {3, 2}, 1e-4}, rng);
  s->f = {random_normal<D>({4, 4, 4}, rng), random_normal<D>({6, 2, 2}, rng),
          random_normal<D>({8, 1, 1}, rng)};
  for (const auto& out : mgc_forward(s->f, s->p)) s->w.push_back(projection(out.shape(), rng));
  GradCase c;
  c.coords = 12;
  for (std::size_t i = 0; i < s->f.size(); ++i) {
    c.shapes.push_back(s->f[i].shape());
    c.add("feature" + std::to_string(i), s->f[i]);
  }
  add_params(c, s->p, mgc_visitor());
  c.forward = [s] { return mgc_forward(s->f, s->p); };
  c.weights = s->w;
  c.analytic = [s] {
    auto g = zeroed(s->p, mgc_visitor());
    GradList out;
    for (auto& t : mgc_backward(mgc_forward_traced(s->f, s->p), s->p, s->w, g)) out.add(t);
    add_grads(out, g, mgc_visitor());
    return out.items;
  };
  c.keep = s;
  return c;
}

FusionParams<D> random_fusion(std::size_t c, Direction dir, bool gated, Rng& rng) {
  FusionSpec spec{c, 4, 3, 3, 2, dir, true, gated};
  auto p = init_fusion<D>(spec, rng);
  randomize_all(p, fusion_visitor(), rng);
  return p;
}

GradCase kernels_case(Rng& rng, Direction dir) {
  struct S {
    FusionParams<D> p;
    Tensor<D> guide, w;
  };
  auto s = std::make_shared<S>();
  s->p = random_fusion(4, dir, false, rng);
  s->guide = random_normal<D>({8, 4, 4}, rng);
  s->w = projection(predict_kernels_forward(s->guide, s->p).kernels.shape(), rng);
  GradCase c;
  c.shapes = {s->guide.shape()};
  c.add("guide", s->guide);
  visit_conv(s->p.kpred.compressor, "compressor", [&](auto n, auto& t) { c.add(n, t); });
  visit_conv(s->p.kpred.encoder, "encoder", [&](auto n, auto& t) { c.add(n, t); });
  visit_conv(s->p.kpred.predictor, "predictor", [&](auto n, auto& t) { c.add(n, t); });
  c.forward = [s] { return Outputs{predict_kernels_forward(s->guide, s->p).kernels}; };
  c.weights = {s->w};
  c.analytic = [s] {
    auto g = zeros_like(s->p);
    GradList out;
    out.add(predict_kernels_backward(predict_kernels_forward(s->guide, s->p), s->p, s->w, g));
    for (auto* conv : {&g.kpred.compressor, &g.kpred.encoder, &g.kpred.predictor}) {
      out.add(conv->weight);
      out.add(conv->bias);
    }
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase reassemble_case(Rng& rng, Direction dir) {
  struct S {
    Tensor<D> src, kernels, w;
  };
  auto s = std::make_shared<S>();
  const bool up = dir == Direction::up;
  s->src = random_normal<D>(up ? Shape{2, 3, 3} : Shape{2, 6, 6}, rng);
  s->kernels = random_normal<D>({9, 6, 6}, rng);
  if (!up) s->kernels = random_normal<D>({9, 3, 3}, rng);
  s->w = projection({2, s->kernels.dim(1), s->kernels.dim(2)}, rng);
  GradCase c;
  c.shapes = {s->src.shape(), s->kernels.shape()};
  c.add("source", s->src);
  c.add("kernels", s->kernels);
  c.forward = [s, up] {
    return Outputs{up ? reassemble_up(s->src, s->kernels, 2)
                      : reassemble_down(s->src, s->kernels, 2)};
  };
  c.weights = {s->w};
  c.analytic = [s, up] {
    auto g = up ? reassemble_up_backward(s->src, s->kernels, 2, s->w)
                : reassemble_down_backward(s->src, s->kernels, 2, s->w);
    return std::vector<Tensor<D>>{g.dsource, g.dkernels};
  };
  c.keep = s;
  return c;
}

GradCase gates_case(Rng& rng, GateActivation act) {
  struct S {
    FusionParams<D> p;
    Tensor<D> high, low, w;
  };
  auto s = std::make_shared<S>();
  s->p = random_fusion(8, Direction::up, true, rng);
  s->high = random_normal<D>({8, 3, 3}, rng);
  s->low = random_normal<D>({8, 3, 3}, rng);
  s->w = projection({16}, rng);
  GradCase c;
  c.shapes = {s->high.shape(), s->low.shape()};
  c.add("high", s->high);
  c.add("low", s->low);
  c.add("mask", s->p.gate.mask);
  c.add("squeeze", s->p.gate.squeeze);
  c.add("excite", s->p.gate.excite);
  c.add("gain", s->p.gate.ln_gain);
  c.add("shift", s->p.gate.ln_shift);
  c.forward = [s, act] {
    return Outputs{channel_gates_forward(s->high, s->low, s->p.gate, act).gates};
  };
  c.weights = {s->w};
  c.analytic = [s, act] {
    auto g = zeros_like(s->p);
    auto tr = channel_gates_forward(s->high, s->low, s->p.gate, act);
    auto [dh, dl] = channel_gates_backward(tr, s->p.gate, act, s->w, g.gate);
    return std::vector<Tensor<D>>{dh,           dl,           g.gate.mask, g.gate.squeeze,
                                  g.gate.excite, g.gate.ln_gain, g.gate.ln_shift};
  };
  c.keep = s;
  return c;
}

GradCase fusion_case(Rng& rng, Direction dir, bool pinned, GateActivation act) {
  struct S {
    FusionParams<D> p;
    FusionOptions opt;
    Tensor<D> primary, partner, w;
  };
  auto s = std::make_shared<S>();
  const bool up = dir == Direction::up;
  s->p = random_fusion(8, dir, !pinned, rng);
  s->opt = {act, pinned};
  s->primary = random_normal<D>(up ? Shape{8, 3, 3} : Shape{8, 6, 6}, rng);
  s->partner = random_normal<D>(up ? Shape{8, 6, 6} : Shape{8, 3, 3}, rng);
  s->w = projection(up ? Shape{8, 6, 6} : Shape{8, 3, 3}, rng);
  GradCase c;
  c.coords = 16;
  c.shapes = {s->primary.shape(), s->partner.shape()};
  c.add(up ? "upper" : "lower", s->primary);
  c.add(up ? "lateral" : "td", s->partner);
  add_params(c, s->p, fusion_visitor());
  auto forward = [s, up] {
    return up ? fuse_topdown_forward(s->primary, s->partner, s->p, s->opt)
              : fuse_bottomup_forward(s->primary, s->partner, s->p, s->opt);
  };
  c.forward = [s, forward] { return Outputs{forward().output}; };
  c.weights = {s->w};
  c.analytic = [s, up, forward] {
    auto g = zeros_like(s->p);
    auto tr = forward();
    auto d = up ? fuse_topdown_backward(tr, s->p, s->opt, s->w, g)
                : fuse_bottomup_backward(tr, s->p, s->opt, s->w, g);
    GradList out;
    out.add(d.dprimary);
    out.add(d.dpartner);
    add_grads(out, g, fusion_visitor());
    return out.items;
  };
  c.keep = s;
  return c;
}

PyramidConfig tiny_config(Arch arch) {
  PyramidConfig cfg = reference_config(arch);
  cfg.c = 8;
  cfg.a = 1;
  cfg.c_mid = 4;
  cfg.backbone.channels = {4, 4, 8, 8};
  cfg.image_h = cfg.image_w = 64;
  return cfg;
}

GradCase neck_case(Rng& rng, Arch arch) {
  struct S {
    PyramidConfig cfg;
    NeckParams<D> p;
    std::vector<LevelFeature<D>> levels;
    std::vector<Tensor<D>> w;
  };
  auto s = std::make_shared<S>();
  s->cfg = tiny_config(arch);
  s->p = init_neck<D>(s->cfg, rng);
  randomize_all(s->p, neck_visitor(), rng);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t extent = 32 >> i;
    s->levels.push_back({i + 2, std::size_t{4} << i,
                         random_normal<D>({s->cfg.backbone.channels[i], extent, extent}, rng)});
  }
  for (const auto& out : neck_forward_traced(s->levels, s->p, s->cfg).outputs)
    s->w.push_back(projection(out.data.shape(), rng));
  GradCase c;
  c.coords = 6;
  for (auto& l : s->levels) {
    c.shapes.push_back(l.data.shape());
    c.add("level" + std::to_string(l.level), l.data);
  }
  add_params(c, s->p, neck_visitor());
  c.forward = [s] {
    Outputs outs;
    for (auto& l : neck_forward_traced(s->levels, s->p, s->cfg).outputs)
      outs.push_back(std::move(l.data));
    return outs;
  };
  c.weights = s->w;
  c.analytic = [s] {
    auto g = zero_grads(s->p);
    const auto tr = neck_forward_traced(s->levels, s->p, s->cfg);
    GradList out;
    for (auto& t : neck_backward(tr, s->p, s->cfg, s->w, g)) out.add(t);
    add_grads(out, g, neck_visitor());
    return out.items;
  };
  c.keep = s;
  return c;
}

GradCase backbone_case(Rng& rng) {
  struct S {
    BackboneParams<D> p;
    Tensor<D> image;
    std::vector<Tensor<D>> w;
  };
  auto s = std::make_shared<S>();
  s->p = init_backbone<D>(BackboneSpec{{4, 4, 8, 8}}, rng);
  randomize_all(s->p, backbone_visitor(), rng);
  s->image = random_uniform<D>({3, 64, 64}, rng, 0.0, 1.0);
  for (const auto& l : toy_backbone_forward(s->image, s->p))
    s->w.push_back(projection(l.data.shape(), rng));
  GradCase c;
  c.coords = 12;
  c.shapes = {s->image.shape()};
  c.add("image", s->image);
  add_params(c, s->p, backbone_visitor());
  c.forward = [s] {
    Outputs outs;
    for (auto& l : toy_backbone_forward(s->image, s->p)) outs.push_back(std::move(l.data));
    return outs;
  };
  c.weights = s->w;
  c.analytic = [s] {
    auto g = zeroed(s->p, backbone_visitor());
    GradList out;
    out.add(toy_backbone_backward(toy_backbone_forward_traced(s->image, s->p), s->p, s->w, g));
    add_grads(out, g, backbone_visitor());
    return out.items;
  };
  c.keep = s;
  return c;
}

struct Registered {
  std::string name;
  bool primitive;
  std::function<GradCase(Rng&)> make;
};

const std::vector<Registered>& registry() {
  static const std::vector<Registered> ops = [] {
    std::vector<Registered> r;
    auto prim = [&](std::string n, std::function<GradCase(Rng&)> f) {
      r.push_back({std::move(n), true, std::move(f)});
    };
    auto comp = [&](std::string n, std::function<GradCase(Rng&)> f) {
      r.push_back({std::move(n), false, std::move(f)});
    };
    prim("matmul", matmul_case);
    prim("softmax_rows", [](Rng& rng) {
      return unary_case(
          random_normal<D>({3, 5}, rng), [](const auto& x) { return softmax(x, 1); },
          [](const auto& x, const auto& dy) { return softmax_backward(softmax(x, 1), dy, 1); },
          rng);
    });
    prim("softmax_axis0", [](Rng& rng) {
      return unary_case(
          random_normal<D>({4, 2, 3}, rng), [](const auto& x) { return softmax(x, 0); },
          [](const auto& x, const auto& dy) { return softmax_backward(softmax(x, 0), dy, 0); },
          rng);
    });
    prim("l2_normalize", [](Rng& rng) {
      return unary_case(
          random_normal<D>({4, 5}, rng), [](const auto& x) { return l2_normalize(x, 0); },
          [](const auto& x, const auto& dy) { return l2_normalize_backward(x, dy, 0); }, rng);
    });
    prim("sigmoid", [](Rng& rng) {
      return unary_case(
          random_normal<D>({7}, rng), [](const auto& x) { return sigmoid(x); },
          [](const auto& x, const auto& dy) { return sigmoid_backward(sigmoid(x), dy); }, rng);
    });
    prim("two_sigmoid", [](Rng& rng) {
      return unary_case(
          random_normal<D>({7}, rng), [](const auto& x) { return two_sigmoid(x); },
          [](const auto& x, const auto& dy) { return two_sigmoid_backward(two_sigmoid(x), dy); },
          rng);
    });
    prim("relu", [](Rng& rng) {
      return unary_case(
          random_normal<D>({9}, rng), [](const auto& x) { return relu(x); },
          [](const auto& x, const auto& dy) { return relu_backward(x, dy); }, rng);
    });
    prim("layer_norm", layer_norm_case);
    prim("conv2d", [](Rng& rng) { return conv_case(rng, 3, 1); });
    prim("conv2d_strided", [](Rng& rng) { return conv_case(rng, 3, 2); });
    prim("conv2d_1x1", [](Rng& rng) { return conv_case(rng, 1, 1); });
    prim("max_pool2d", [](Rng& rng) {
      return unary_case(
          random_normal<D>({2, 4, 6}, rng), [](const auto& x) { return max_pool2d(x).out; },
          [](const auto& x, const auto& dy) {
            return max_pool2d_backward(x.shape(), max_pool2d(x).argmax, dy);
          },
          rng);
    });
    prim("bilinear_upsample", [](Rng& rng) {
      return unary_case(
          random_normal<D>({2, 3, 4}, rng), [](const auto& x) { return bilinear_upsample(x, 2); },
          [](const auto& x, const auto& dy) { return bilinear_upsample_backward(x.shape(), dy, 2); },
          rng);
    });
    prim("nearest_upsample", [](Rng& rng) {
      return unary_case(
          random_normal<D>({2, 3, 2}, rng), [](const auto& x) { return nearest_upsample(x, 2); },
          [](const auto& x, const auto& dy) { return nearest_upsample_backward(x.shape(), dy, 2); },
          rng);
    });
    prim("pixel_shuffle", [](Rng& rng) {
      return unary_case(
          random_normal<D>({8, 2, 3}, rng), [](const auto& x) { return pixel_shuffle(x, 2); },
          [](const auto&, const auto& dy) { return pixel_unshuffle(dy, 2); }, rng);
    });
    prim("scale_channels", scale_channels_case);
    prim("reassemble_up", [](Rng& rng) { return reassemble_case(rng, Direction::up); });
    prim("reassemble_down", [](Rng& rng) { return reassemble_case(rng, Direction::down); });
    comp("compatibility", compatibility_case);
    comp("collect_context", collect_case);
    comp("orthogonal_reg", ortho_case);
    comp("gcn", gcn_case);
    comp("reason_multilevel", reason_case);
    comp("distribute_context", distribute_case);
    comp("mgc", mgc_case);
    comp("predict_up_kernels", [](Rng& rng) { return kernels_case(rng, Direction::up); });
    comp("predict_down_kernels", [](Rng& rng) { return kernels_case(rng, Direction::down); });
    comp("channel_gates_sigmoid",
         [](Rng& rng) { return gates_case(rng, GateActivation::sigmoid); });
    comp("channel_gates_two_sigmoid",
         [](Rng& rng) { return gates_case(rng, GateActivation::two_sigmoid); });
    comp("fuse_topdown", [](Rng& rng) {
      return fusion_case(rng, Direction::up, false, GateActivation::two_sigmoid);
    });
    comp("fuse_topdown_sigmoid",
         [](Rng& rng) { return fusion_case(rng, Direction::up, false, GateActivation::sigmoid); });
    comp("fuse_topdown_pinned", [](Rng& rng) {
      return fusion_case(rng, Direction::up, true, GateActivation::two_sigmoid);
    });
    comp("fuse_bottomup", [](Rng& rng) {
      return fusion_case(rng, Direction::down, false, GateActivation::two_sigmoid);
    });
    comp("fuse_bottomup_pinned", [](Rng& rng) {
      return fusion_case(rng, Direction::down, true, GateActivation::two_sigmoid);
    });
    comp("toy_backbone", backbone_case);
    comp("neck_fpn", [](Rng& rng) { return neck_case(rng, Arch::fpn); });
    comp("neck_pafpn", [](Rng& rng) { return neck_case(rng, Arch::pafpn); });
    comp("neck_a2fpn", [](Rng& rng) { return neck_case(rng, Arch::a2fpn); });
    comp("neck_a2fpn_lite", [](Rng& rng) { return neck_case(rng, Arch::a2fpn_lite); });
    return r;
  }();
  return ops;
}

const Registered& lookup(std::string_view op) {
  for (const auto& r : registry())
    if (r.name == op) return r;
  throw std::invalid_argument("unknown gradient-check op '" + std::string(op) + "'");
}

// <w, plus> - <w, minus>, differencing the outputs before projecting so the
// reduction does not swamp small perturbations with rounding error.
double projected_difference(const Outputs& weights, const Outputs& plus, const Outputs& minus) {
  if (plus.size() != weights.size() || minus.size() != weights.size()) {
    throw std::logic_error("output count does not match the projection");
  }
  long double acc = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (plus[k].shape() != weights[k].shape() || minus[k].shape() != weights[k].shape()) {
      throw std::logic_error("output shape does not match the projection");
    }
    for (std::size_t i = 0; i < weights[k].size(); ++i)
      acc += static_cast<long double>(weights[k][i]) * (plus[k][i] - minus[k][i]);
  }
  return static_cast<double>(acc);
}

std::pair<Outputs, std::uint64_t> evaluate(const GradCase& c) {
  BranchRecorder rec;
  Outputs out = c.forward();
  return {std::move(out), rec.fingerprint()};
}

std::vector<std::size_t> pick_coordinates(std::size_t size, std::size_t budget, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (size <= budget) return idx;
  for (std::size_t i = 0; i < budget; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.integer(static_cast<std::int64_t>(i), static_cast<std::int64_t>(size - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// FNV-1a over the op name followed by the seed bytes.
std::uint64_t case_seed(std::string_view name, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ULL;
  for (int b = 0; b < 8; ++b) h = (h ^ ((seed >> (8 * b)) & 0xFF)) * 1099511628211ULL;
  return h;
}

}  // namespace

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& r : registry()) n.push_back(r.name);
    return n;
  }();
  return names;
}

bool is_primitive_op(std::string_view op) { return lookup(op).primitive; }

GradCheckReport check_gradients(std::string_view op, const GradCheckOptions& opt) {
  const Registered& entry = lookup(op);
  if (!(opt.eps > 0)) throw std::invalid_argument("check_gradients: eps must be positive");
  GradCheckReport rep;
  rep.op = entry.name;
  rep.eps = opt.eps;
  rep.tol = opt.tol.value_or(entry.primitive ? kPrimitiveTolerance : kCompositeTolerance);
  const auto start = Clock::now();
  try {
    Rng rng(case_seed(entry.name, opt.seed));
    GradCase c = entry.make(rng);
    rep.shapes = c.shapes;
    const auto analytic = c.analytic();
    if (analytic.size() != c.vars.size()) {
      throw std::logic_error("analytic gradient count " + std::to_string(analytic.size()) +
                             " != variable count " + std::to_string(c.vars.size()));
    }
    for (std::size_t k = 0; k < c.vars.size(); ++k) {
      Tensor<D>& var = *c.vars[k];
      if (analytic[k].shape() != var.shape()) {
        throw std::logic_error("gradient of " + c.names[k] + " has shape " +
                               shape_to_string(analytic[k].shape()));
      }
      if (!all_finite(analytic[k])) throw NumericError("non-finite gradient for " + c.names[k]);
      for (std::size_t i : pick_coordinates(var.size(), c.coords, rng)) {
        const D orig = var[i];
        var[i] = orig + opt.eps;
        const auto [plus, plus_branches] = evaluate(c);
        var[i] = orig - opt.eps;
        const auto [minus, minus_branches] = evaluate(c);
        var[i] = orig;
        if (plus_branches != minus_branches) {
          ++rep.kinks;
          continue;
        }
        const double numeric = projected_difference(c.weights, plus, minus) / (2 * opt.eps);
        if (!std::isfinite(numeric)) {
          throw NumericError("non-finite loss while perturbing " + c.names[k]);
        }
        const double err = relative_error(analytic[k][i], numeric);
        ++rep.coordinates;
        if (err >= rep.max_rel_err) {
          rep.max_rel_err = err;
          rep.worst_analytic = analytic[k][i];
          rep.worst_numeric = numeric;
          rep.worst = c.names[k] + "[" + std::to_string(i) + "]";
        }
      }
    }
    rep.pass = rep.max_rel_err < rep.tol && rep.kinks * 10 <= rep.coordinates + rep.kinks;
  } catch (const std::exception& e) {
    rep.error = e.what();
    rep.pass = false;
  }
  rep.seconds = seconds_since(start);
  return rep;
}

std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& opt) {
  std::vector<GradCheckReport> out;
  for (const auto& name : gradcheck_ops()) out.push_back(check_gradients(name, opt));
  return out;
}

nlohmann::json to_json(const GradCheckReport& r) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& s : r.shapes) shapes.push_back(s);
  nlohmann::json j{{"op", r.op},
                   {"shapes", shapes},
                   {"eps", r.eps},
                   {"tol", r.tol},
                   {"max_rel_err", r.max_rel_err},
                   {"worst", r.worst},
                   {"worst_analytic", r.worst_analytic},
                   {"worst_numeric", r.worst_numeric},
                   {"coordinates", r.coordinates},
                   {"kinks", r.kinks},
                   {"pass", r.pass},
                   {"seconds", r.seconds}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

nlohmann::json gradcheck_report_json(const std::vector<GradCheckReport>& reports) {
  nlohmann::json ops = nlohmann::json::array();
  bool pass = true;
  double seconds = 0;
  for (const auto& r : reports) {
    ops.push_back(to_json(r));
    pass = pass && r.pass;
    seconds += r.seconds;
  }
  return {{"pass", pass}, {"seconds", seconds}, {"ops", ops}};
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

namespace {

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(
      rng.integer(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

Tensor<D> naive_conv(const Tensor<D>& x, const Tensor<D>& weight, const Tensor<D>& bias,
                     std::size_t stride, std::size_t pad) {
  const long cin = static_cast<long>(x.dim(0));
  const long h = static_cast<long>(x.dim(1));
  const long w = static_cast<long>(x.dim(2));
  const long cout = static_cast<long>(weight.dim(0));
  const long k = static_cast<long>(weight.dim(2));
  const long s = static_cast<long>(stride);
  const long p = static_cast<long>(pad);
  const long ho = (h + 2 * p - k) / s + 1;
  const long wo = (w + 2 * p - k) / s + 1;
  Tensor<D> out({static_cast<std::size_t>(cout), static_cast<std::size_t>(ho),
                 static_cast<std::size_t>(wo)});
  const std::vector<D>& wt = weight.storage();
  const std::vector<D>& xs = x.storage();
  for (long o = 0; o < cout; ++o) {
    for (long oy = 0; oy < ho; ++oy) {
      for (long ox = 0; ox < wo; ++ox) {
        D acc = bias.empty() ? 0.0 : bias.storage()[static_cast<std::size_t>(o)];
        for (long i = 0; i < cin; ++i) {
          for (long ky = 0; ky < k; ++ky) {
            for (long kx = 0; kx < k; ++kx) {
              const long iy = oy * s + ky - p;
              const long ix = ox * s + kx - p;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += wt[static_cast<std::size_t>(((o * cin + i) * k + ky) * k + kx)] *
                     xs[static_cast<std::size_t>((i * h + iy) * w + ix)];
            }
          }
        }
        out.storage()[static_cast<std::size_t>((o * ho + oy) * wo + ox)] = acc;
      }
    }
  }
  return out;
}

// Attention map n_k x n_q for queries n_q x d and keys d x n_k.
Tensor<D> naive_compat(const Tensor<D>& q, const Tensor<D>& k) {
  const std::size_t nq = q.dim(0), d = q.dim(1), nk = k.dim(1);
  Tensor<D> map({nk, nq});
  std::vector<D> norm(nk), score(nk);
  for (std::size_t j = 0; j < nk; ++j) {
    D sq = 0;
    for (std::size_t a = 0; a < d; ++a) sq += k.storage()[a * nk + j] * k.storage()[a * nk + j];
    norm[j] = std::max(std::sqrt(sq), 1e-12);
  }
  for (std::size_t i = 0; i < nq; ++i) {
    D top = -INFINITY;
    for (std::size_t j = 0; j < nk; ++j) {
      D dotp = 0;
      for (std::size_t a = 0; a < d; ++a)
        dotp += q.storage()[i * d + a] * (k.storage()[a * nk + j] / norm[j]);
      score[j] = std::sqrt(static_cast<D>(d)) * dotp;
      top = std::max(top, score[j]);
    }
    D z = 0;
    for (std::size_t j = 0; j < nk; ++j) z += std::exp(score[j] - top);
    for (std::size_t j = 0; j < nk; ++j) map.storage()[j * nq + i] = std::exp(score[j] - top) / z;
  }
  return map;
}

// Context c x n pooled from a c_i x h x w feature.
Tensor<D> naive_attention_pool(const Tensor<D>& f, const Tensor<D>& entities,
                               const Tensor<D>& embed) {
  const std::size_t ci = f.dim(0), hw = f.dim(1) * f.dim(2);
  const std::size_t n = entities.dim(0), c = embed.dim(0);
  std::vector<D> pooled(ci * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<D> score(hw);
    D top = -INFINITY;
    for (std::size_t p = 0; p < hw; ++p) {
      D sq = 0, dotp = 0;
      for (std::size_t a = 0; a < ci; ++a) sq += f.storage()[a * hw + p] * f.storage()[a * hw + p];
      const D nrm = std::max(std::sqrt(sq), 1e-12);
      for (std::size_t a = 0; a < ci; ++a)
        dotp += entities.storage()[j * ci + a] * f.storage()[a * hw + p] / nrm;
      score[p] = std::sqrt(static_cast<D>(ci)) * dotp;
      top = std::max(top, score[p]);
    }
    D z = 0;
    for (std::size_t p = 0; p < hw; ++p) z += std::exp(score[p] - top);
    for (std::size_t p = 0; p < hw; ++p) {
      const D a = std::exp(score[p] - top) / z;
      for (std::size_t ch = 0; ch < ci; ++ch) pooled[ch * n + j] += f.storage()[ch * hw + p] * a;
    }
  }
  Tensor<D> ctx({c, n});
  for (std::size_t o = 0; o < c; ++o)
    for (std::size_t j = 0; j < n; ++j) {
      D acc = 0;
      for (std::size_t ch = 0; ch < ci; ++ch) acc += embed.storage()[o * ci + ch] * pooled[ch * n + j];
      ctx.storage()[o * n + j] = acc;
    }
  return ctx;
}

Tensor<D> naive_reassemble(const Tensor<D>& src, const Tensor<D>& kernels, std::size_t s,
                           bool up) {
  const long c = static_cast<long>(src.dim(0));
  const long h = static_cast<long>(src.dim(1));
  const long w = static_cast<long>(src.dim(2));
  const long k = std::lround(std::sqrt(static_cast<double>(kernels.dim(0))));
  const long oh = static_cast<long>(kernels.dim(1));
  const long ow = static_cast<long>(kernels.dim(2));
  const long sc = static_cast<long>(s);
  Tensor<D> out({src.dim(0), kernels.dim(1), kernels.dim(2)});
  for (long ch = 0; ch < c; ++ch) {
    for (long y = 0; y < oh; ++y) {
      for (long x = 0; x < ow; ++x) {
        const long cy = up ? y / sc : y * sc;
        const long cx = up ? x / sc : x * sc;
        D acc = 0;
        for (long i = 0; i < k; ++i) {
          for (long j = 0; j < k; ++j) {
            const long sy = cy - k / 2 + i;
            const long sx = cx - k / 2 + j;
            const D v = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                            ? src.storage()[static_cast<std::size_t>((ch * h + sy) * w + sx)]
                            : 0.0;
            acc += kernels.storage()[static_cast<std::size_t>(((i * k + j) * oh + y) * ow + x)] *
                   v;
          }
        }
        out.storage()[static_cast<std::size_t>((ch * oh + y) * ow + x)] = acc;
      }
    }
  }
  return out;
}

Tensor<D> naive_pixel_shuffle(const Tensor<D>& in, std::size_t s) {
  const std::size_t q = in.dim(0) / (s * s), h = in.dim(1), w = in.dim(2);
  Tensor<D> out({q, h * s, w * s});
  for (std::size_t g = 0; g < q; ++g)
    for (std::size_t y = 0; y < h * s; ++y)
      for (std::size_t x = 0; x < w * s; ++x) {
        const std::size_t ch = g * s * s + (y % s) * s + (x % s);
        out.storage()[(g * h * s + y) * w * s + x] = in.storage()[(ch * h + y / s) * w + x / s];
      }
  return out;
}

Tensor<D> naive_bilinear(const Tensor<D>& in, std::size_t s) {
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t H = h * s, W = w * s;
  Tensor<D> out({c, H, W});
  auto coord = [s](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, D& frac) {
    D src = (static_cast<D>(o) + 0.5) / static_cast<D>(s) - 0.5;
    if (src < 0) src = 0;
    i0 = static_cast<std::size_t>(src);
    if (i0 > n - 1) i0 = n - 1;
    i1 = i0 + 1 < n ? i0 + 1 : n - 1;
    frac = src - static_cast<D>(i0);
  };
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t Y = 0; Y < H; ++Y)
      for (std::size_t X = 0; X < W; ++X) {
        std::size_t y0, y1, x0, x1;
        D ly, lx;
        coord(Y, h, y0, y1, ly);
        coord(X, w, x0, x1, lx);
        const auto at = [&](std::size_t y, std::size_t x) {
          return in.storage()[(ch * h + y) * w + x];
        };
        out.storage()[(ch * H + Y) * W + X] =
            (1 - ly) * (1 - lx) * at(y0, x0) + (1 - ly) * lx * at(y0, x1) +
            ly * (1 - lx) * at(y1, x0) + ly * lx * at(y1, x1);
      }
  return out;
}

template <typename Run>
OracleResult run_oracle(std::string op, std::size_t cases, double tol, Run run) {
  OracleResult r;
  r.op = std::move(op);
  const auto start = Clock::now();
  for (std::size_t i = 0; i < cases; ++i) {
    auto [dev, shape] = run(i);
    if (dev >= r.max_abs_dev) {
      r.max_abs_dev = dev;
      r.worst_shape = shape;
    }
    ++r.cases;
  }
  r.pass = r.max_abs_dev <= tol;
  r.seconds = seconds_since(start);
  return r;
}

}  // namespace

bool OracleReport::pass() const {
  return !ops.empty() &&
         std::all_of(ops.begin(), ops.end(), [](const OracleResult& r) { return r.pass; });
}

OracleReport oracle_suite(std::uint64_t seed, std::size_t cases, double tol) {
  OracleReport rep;
  rep.tol = tol;
  Rng rng(seed);

  rep.ops.push_back(run_oracle("conv2d", cases, tol, [&](std::size_t) {
    const std::size_t k = 2 * pick(rng, 0, 2) + 1;
    ConvParams<D> p;
    p.stride = pick(rng, 1, 2);
    p.padding = pick(rng, 0, k / 2);
    const std::size_t cin = pick(rng, 1, 4), cout = pick(rng, 1, 4);
    p.weight = random_normal<D>({cout, cin, k, k}, rng);
    if (rng.uniform() < 0.5) p.bias = random_normal<D>({cout}, rng);
    const auto x = random_normal<D>({cin, pick(rng, k, k + 6), pick(rng, k, k + 6)}, rng);
    const auto ref = naive_conv(x, p.weight, p.bias, p.stride, p.padding);
    return std::pair{max_abs_diff(conv2d(p, x), ref), x.shape()};
  }));

  rep.ops.push_back(run_oracle("attention_pooling", cases, tol, [&](std::size_t) {
    const std::size_t ci = pick(rng, 1, 6), n = pick(rng, 1, 4), c = 4 * pick(rng, 1, 2);
    MgcLevelParams<D> lvl;
    lvl.entities = random_normal<D>({n, ci}, rng);
    lvl.embed = random_normal<D>({c, ci}, rng);
    const auto f = random_normal<D>({ci, pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
    const auto ref = naive_attention_pool(f, lvl.entities, lvl.embed);
    return std::pair{max_abs_diff(collect_context(f, lvl), ref), f.shape()};
  }));

  rep.ops.push_back(run_oracle("compatibility", cases, tol, [&](std::size_t) {
    const std::size_t nq = pick(rng, 1, 6), d = pick(rng, 1, 6), nk = pick(rng, 1, 8);
    const auto q = random_normal<D>({nq, d}, rng);
    const auto k = random_normal<D>({d, nk}, rng);
    return std::pair{max_abs_diff(compatibility(q, k, d), naive_compat(q, k)), Shape{nq, d, nk}};
  }));

  rep.ops.push_back(run_oracle("reassemble_up", cases, tol, [&](std::size_t) {
    const std::size_t k = 2 * pick(rng, 0, 2) + 1, s = pick(rng, 1, 3);
    const auto src = random_normal<D>({pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
    const auto ker = random_normal<D>({k * k, src.dim(1) * s, src.dim(2) * s}, rng);
    const auto ref = naive_reassemble(src, ker, s, true);
    return std::pair{max_abs_diff(reassemble_up(src, ker, s), ref), ker.shape()};
  }));

  rep.ops.push_back(run_oracle("reassemble_down", cases, tol, [&](std::size_t) {
    const std::size_t k = 2 * pick(rng, 0, 2) + 1, s = pick(rng, 1, 3);
    const std::size_t oh = pick(rng, 1, 4), ow = pick(rng, 1, 4);
    const auto src = random_normal<D>({pick(rng, 1, 3), oh * s, ow * s}, rng);
    const auto ker = random_normal<D>({k * k, oh, ow}, rng);
    const auto ref = naive_reassemble(src, ker, s, false);
    return std::pair{max_abs_diff(reassemble_down(src, ker, s), ref), ker.shape()};
  }));

  rep.ops.push_back(run_oracle("pixel_shuffle", cases, tol, [&](std::size_t) {
    const std::size_t s = pick(rng, 1, 3);
    const auto x = random_normal<D>({pick(rng, 1, 3) * s * s, pick(rng, 1, 4), pick(rng, 1, 4)},
                                    rng);
    return std::pair{max_abs_diff(pixel_shuffle(x, s), naive_pixel_shuffle(x, s)), x.shape()};
  }));

  rep.ops.push_back(run_oracle("pixel_shuffle_roundtrip", 20, tol, [&](std::size_t) {
    const std::size_t s = pick(rng, 1, 3);
    const auto x = random_normal<D>({pick(rng, 1, 3) * s * s, pick(rng, 1, 4), pick(rng, 1, 4)},
                                    rng);
    return std::pair{max_abs_diff(pixel_unshuffle(pixel_shuffle(x, s), s), x), x.shape()};
  }));

  rep.ops.push_back(run_oracle("bilinear_upsample", cases, tol, [&](std::size_t) {
    const std::size_t s = pick(rng, 1, 4);
    const auto x = random_normal<D>({pick(rng, 1, 3), pick(rng, 1, 6), pick(rng, 1, 6)}, rng);
    return std::pair{max_abs_diff(bilinear_upsample(x, s), naive_bilinear(x, s)), x.shape()};
  }));

  return rep;
}

nlohmann::json to_json(const OracleReport& r) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& o : r.ops) {
    ops.push_back({{"op", o.op},
                   {"cases", o.cases},
                   {"max_abs_dev", o.max_abs_dev},
                   {"worst_shape", o.worst_shape},
                   {"pass", o.pass},
                   {"seconds", o.seconds}});
  }
  return {{"pass", r.pass()}, {"tol", r.tol}, {"ops", ops}};
}

}  // namespace a2fpn
