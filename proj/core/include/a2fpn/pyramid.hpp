// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "a2fpn/fusion.hpp"
#include "a2fpn/mgc.hpp"
#include "a2fpn/nn_ops.hpp"
#include "a2fpn/tensor.hpp"

namespace a2fpn {

enum class Arch { fpn, pafpn, a2fpn, a2fpn_lite };

std::string_view to_string(Arch arch);
Arch parse_arch(std::string_view name);

/// Channel counts of the four backbone stages (strides 4, 8, 16, 32).
struct BackboneSpec {
  std::array<std::size_t, 4> channels{32, 64, 128, 256};

  static BackboneSpec toy() { return {}; }
  static BackboneSpec resnet50() { return {{256, 512, 1024, 2048}}; }
};

BackboneSpec parse_backbone_spec(std::string_view text);  // "toy", "resnet50" or "a,b,c,d"

struct PyramidConfig {
  Arch arch = Arch::a2fpn;
  std::size_t c = 256;
  std::size_t a = 64;  // entity counts n_i = a (6 - i)
  std::size_t k_up = 5;
  std::size_t k_dn = 5;
  std::size_t k_en = 3;
  std::size_t c_mid = 64;
  GateActivation gate_act = GateActivation::two_sigmoid;
  bool concat_guidance = true;
  bool pin_gates = false;
  bool extra_conv = true;      // F6 from a stride-2 conv on F5
  bool pool_top = false;       // P^bu_6 by max-pooling P^bu_5
  bool smooth_finest = true;   // 3x3 conv on the finest bottom-up level
  std::uint64_t seed = 0;
  std::string dtype = "f32";
  std::size_t image_h = 256;
  std::size_t image_w = 256;
  BackboneSpec backbone;
  double lambda_o = 1e-4;

  bool is_a2() const { return arch == Arch::a2fpn || arch == Arch::a2fpn_lite; }
  std::vector<std::size_t> entity_counts() const;
  /// Highest pyramid level handled by the MGC / top-down pathway.
  std::size_t top_level() const { return extra_conv ? 6 : 5; }
  /// Highest level produced by a bottom-up fusion site.
  std::size_t top_fused_level() const { return pool_top ? 5 : 6; }
  FusionOptions fusion_options() const { return {gate_act, pin_gates}; }

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Reference hyper-parameters: c = 256, n_i = 64 (6 - i) (Lite: 128, 32).
PyramidConfig reference_config(Arch arch);
/// Desk-scale settings used by the toy training task.
PyramidConfig toy_config(Arch arch);

nlohmann::json config_to_json(const PyramidConfig& cfg);
/// Missing keys keep the defaults of `base`; unknown keys are rejected.
PyramidConfig config_from_json(const nlohmann::json& j, const PyramidConfig& base);
PyramidConfig load_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename T>
struct BackboneParams {
  ConvParams<T> stem1;
  ConvParams<T> stem2;
  std::array<ConvParams<T>, 3> stages;  // produce levels 3, 4, 5
};

template <typename T>
struct NeckParams {
  // fpn / pafpn
  std::vector<ConvParams<T>> lateral;  // levels 2..5
  std::vector<ConvParams<T>> smooth;   // levels 2..5
  std::vector<ConvParams<T>> down;     // pafpn, target levels 3..5
  std::vector<ConvParams<T>> post;     // pafpn, levels 3..5
  // a2fpn / a2fpn_lite
  ConvParams<T> extra;                   // F5 -> F6, empty when absent
  MgcParams<T> mgc;
  std::vector<FusionParams<T>> topdown;  // index 0 produces level 2
  ConvParams<T> finest;                  // smoothing of P^bu_2, empty when absent
  std::vector<FusionParams<T>> bottomup; // index 0 produces level 3
};

template <typename T>
struct ModelParams {
  BackboneParams<T> backbone;
  NeckParams<T> neck;
  ConvParams<T> head;  // c -> 1, 1x1
};

template <typename T>
BackboneParams<T> init_backbone(const BackboneSpec& spec, Rng& rng);

template <typename T>
NeckParams<T> init_neck(const PyramidConfig& cfg, Rng& rng);

/// Backbone, neck and head, all drawn from one generator seeded by cfg.seed.
template <typename T>
ModelParams<T> init_model(const PyramidConfig& cfg);

// Visitors call f(name, tensor) for every non-empty parameter tensor in a
// fixed order. Self may be const or non-const.

template <typename Self, typename F>
void visit_conv(Self& conv, const std::string& prefix, F&& f) {
  if (!conv.weight.empty()) f(prefix + ".weight", conv.weight);
  if (!conv.bias.empty()) f(prefix + ".bias", conv.bias);
}

template <typename Self, typename F>
void visit_gcn(Self& g, const std::string& prefix, F&& f) {
  if (!g.query.empty()) f(prefix + ".query.weight", g.query);
  if (!g.key.empty()) f(prefix + ".key.weight", g.key);
  if (!g.mix.empty()) f(prefix + ".mix.weight", g.mix);
}

template <typename Self, typename F>
void visit_mgc(Self& m, F&& f) {
  for (std::size_t i = 0; i < m.levels.size(); ++i) {
    auto& lvl = m.levels[i];
    const std::string p = "mgc.l" + std::to_string(i + 2);
    if (!lvl.entities.empty()) f(p + ".entities.weight", lvl.entities);
    if (!lvl.embed.empty()) f(p + ".embed.weight", lvl.embed);
    visit_gcn(lvl.gcn, p + ".gcn", f);
    f(p + ".query.weight", lvl.query);
    f(p + ".residual.weight", lvl.residual);
  }
  if (!m.out.empty()) {
    visit_gcn(m.shared, "mgc.shared", f);
    f("mgc.out.weight", m.out);
  }
}

template <typename Self, typename F>
void visit_fusion(Self& site, const std::string& prefix, F&& f) {
  visit_conv(site.kpred.compressor, prefix + ".kpred.compressor", f);
  visit_conv(site.kpred.encoder, prefix + ".kpred.encoder", f);
  visit_conv(site.kpred.predictor, prefix + ".kpred.predictor", f);
  if (!site.gate.mask.empty()) {
    f(prefix + ".gate.mask.weight", site.gate.mask);
    f(prefix + ".gate.squeeze.weight", site.gate.squeeze);
    f(prefix + ".gate.excite.weight", site.gate.excite);
    f(prefix + ".gate.norm.gain", site.gate.ln_gain);
    f(prefix + ".gate.norm.shift", site.gate.ln_shift);
  }
  visit_conv(site.smooth, prefix + ".smooth", f);
}

template <typename Self, typename F>
void visit_neck(Self& n, F&& f) {
  for (std::size_t i = 0; i < n.lateral.size(); ++i)
    visit_conv(n.lateral[i], "fpn.lateral.l" + std::to_string(i + 2), f);
  for (std::size_t i = 0; i < n.smooth.size(); ++i)
    visit_conv(n.smooth[i], "fpn.smooth.l" + std::to_string(i + 2), f);
  for (std::size_t i = 0; i < n.down.size(); ++i)
    visit_conv(n.down[i], "pafpn.down.l" + std::to_string(i + 3), f);
  for (std::size_t i = 0; i < n.post.size(); ++i)
    visit_conv(n.post[i], "pafpn.post.l" + std::to_string(i + 3), f);
  visit_conv(n.extra, "extra.l6", f);
  visit_mgc(n.mgc, f);
  for (std::size_t i = 0; i < n.topdown.size(); ++i)
    visit_fusion(n.topdown[i], "td.l" + std::to_string(i + 2), f);
  visit_conv(n.finest, "bu.l2.smooth", f);
  for (std::size_t i = 0; i < n.bottomup.size(); ++i)
    visit_fusion(n.bottomup[i], "bu.l" + std::to_string(i + 3), f);
}

template <typename Self, typename F>
void visit_model(Self& m, F&& f) {
  visit_conv(m.backbone.stem1, "backbone.stem1", f);
  visit_conv(m.backbone.stem2, "backbone.stem2", f);
  for (std::size_t i = 0; i < m.backbone.stages.size(); ++i)
    visit_conv(m.backbone.stages[i], "backbone.stage" + std::to_string(i + 3), f);
  visit_neck(m.neck, f);
  visit_conv(m.head, "head", f);
}

/// Copy of `p` with every parameter tensor zeroed; the gradient store layout.
template <typename P>
P zero_grads(const P& p) {
  P g = p;
  if constexpr (requires { g.neck; }) {
    visit_model(g, [](const std::string&, auto& t) { t.fill(0); });
  } else {
    visit_neck(g, [](const std::string&, auto& t) { t.fill(0); });
  }
  return g;
}

template <typename T>
std::size_t neck_param_count(const NeckParams<T>& n) {
  std::size_t total = 0;
  visit_neck(n, [&](const std::string&, const Tensor<T>& t) { total += t.size(); });
  return total;
}

/// Writes one A2TSR file per tensor plus manifest.json listing names,
/// shapes and file names.
template <typename T>
void save_checkpoint(const ModelParams<T>& m, const std::filesystem::path& dir);

/// Loads into `m`, whose structure must already match the manifest.
template <typename T>
void load_checkpoint(ModelParams<T>& m, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Features and forward passes
// ---------------------------------------------------------------------------

template <typename T>
struct LevelFeature {
  std::size_t level = 0;
  std::size_t stride = 0;
  Tensor<T> data;
};

template <typename T>
struct BackboneTrace {
  std::vector<Tensor<T>> inputs;  // input of each conv, in order stem1, stem2, stages
  std::vector<Tensor<T>> pre;     // conv outputs before ReLU
  std::vector<LevelFeature<T>> levels;
};

template <typename T>
BackboneTrace<T> toy_backbone_forward_traced(const Tensor<T>& image,
                                             const BackboneParams<T>& p);

template <typename T>
std::vector<LevelFeature<T>> toy_backbone_forward(const Tensor<T>& image,
                                                  const BackboneParams<T>& p) {
  return toy_backbone_forward_traced(image, p).levels;
}

/// d(image) from per-level gradients (levels 2..5, empty tensors = zero).
template <typename T>
Tensor<T> toy_backbone_backward(const BackboneTrace<T>& tr, const BackboneParams<T>& p,
                                const std::vector<Tensor<T>>& dlevels,
                                BackboneParams<T>& grad);

template <typename T>
LevelFeature<T> make_extra_level(const LevelFeature<T>& f5, const ConvParams<T>& p);

/// Everything a backward pass through any neck variant needs.
template <typename T>
struct NeckTrace {
  std::vector<Tensor<T>> inputs;  // backbone levels 2..5
  // fpn / pafpn
  std::vector<Tensor<T>> merged;         // top-down sums, levels 2..5
  std::vector<Tensor<T>> smoothed;       // fpn outputs, levels 2..5
  std::vector<Tensor<T>> bu;             // pafpn bottom-up sums, levels 3..5
  std::vector<Tensor<T>> post_out;       // pafpn outputs, levels 3..5
  // a2fpn
  Tensor<T> extra_input;
  MgcTrace<T> mgc;
  std::vector<FusionTrace<T>> topdown;   // index 0 produces level 2
  Tensor<T> finest_input;
  std::vector<FusionTrace<T>> bottomup;  // index 0 produces level 3
  // shared
  Shape pool_input_shape;
  std::vector<std::size_t> pool_argmax;
  std::vector<LevelFeature<T>> outputs;  // levels 2..6
};

template <typename T>
NeckTrace<T> neck_forward_traced(const std::vector<LevelFeature<T>>& levels,
                                 const NeckParams<T>& p, const PyramidConfig& cfg);

template <typename T>
std::vector<LevelFeature<T>> forward_fpn(const std::vector<LevelFeature<T>>& levels,
                                         const NeckParams<T>& p, const PyramidConfig& cfg);
template <typename T>
std::vector<LevelFeature<T>> forward_pafpn(const std::vector<LevelFeature<T>>& levels,
                                           const NeckParams<T>& p, const PyramidConfig& cfg);
template <typename T>
std::vector<LevelFeature<T>> forward_a2fpn(const std::vector<LevelFeature<T>>& levels,
                                           const NeckParams<T>& p, const PyramidConfig& cfg);

/// Gradients w.r.t. the four backbone levels given gradients of the five
/// outputs (empty tensors count as zero).
template <typename T>
std::vector<Tensor<T>> neck_backward(const NeckTrace<T>& tr, const NeckParams<T>& p,
                                     const PyramidConfig& cfg,
                                     const std::vector<Tensor<T>>& doutputs,
                                     NeckParams<T>& grad);

/// Image -> five pyramid levels.
template <typename T>
std::vector<LevelFeature<T>> forward_pyramid(const Tensor<T>& image, const ModelParams<T>& m,
                                             const PyramidConfig& cfg);

// ---------------------------------------------------------------------------
// Dataflow graph of the fusion pathways, for structural comparisons.
// ---------------------------------------------------------------------------

struct GraphEdge {
  std::string from;
  std::string to;
  std::string kind;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
  friend auto operator<=>(const GraphEdge&, const GraphEdge&) = default;
};

/// Sorted edge list. Nodes: in<i> (backbone), lat<i> (per-level projection),
/// td<i>, bu<i>, out<i>. Cross-level context exchange inside the MGC is not
/// part of the fusion graph.
std::vector<GraphEdge> fusion_graph(const PyramidConfig& cfg);

}  // namespace a2fpn
