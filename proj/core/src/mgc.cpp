// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/mgc.hpp"

#include <cmath>

#include "a2fpn/ops.hpp"

namespace a2fpn {

namespace {

template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& f) {
  if (f.rank() != 3) {
    throw DimensionError("expected a c x h x w feature, got " + shape_to_string(f.shape()));
  }
  return f.reshaped({f.dim(0), f.dim(1) * f.dim(2)});
}

template <typename T>
Tensor<T> concat_columns(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_columns: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) {
      throw DimensionError("context banks disagree on channel width: " +
                           shape_to_string(p.shape()));
    }
    cols += p.dim(1);
  }
  Tensor<T> out({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.dim(1); ++c) out(r, offset + c) = p(r, c);
    offset += p.dim(1);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> split_columns(const Tensor<T>& t,
                                     const std::vector<std::size_t>& widths) {
  std::vector<Tensor<T>> parts;
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    Tensor<T> part({t.dim(0), w});
    for (std::size_t r = 0; r < t.dim(0); ++r)
      for (std::size_t c = 0; c < w; ++c) part(r, c) = t(r, offset + c);
    parts.push_back(std::move(part));
    offset += w;
  }
  return parts;
}

}  // namespace

template <typename T>
Attention<T> compatibility_forward(const Tensor<T>& queries, const Tensor<T>& keys,
                                   std::size_t scale_dim) {
  if (queries.rank() != 2 || keys.rank() != 2 || queries.dim(1) != keys.dim(0)) {
    throw DimensionError("compatibility: queries " + shape_to_string(queries.shape()) +
                         " vs keys " + shape_to_string(keys.shape()));
  }
  if (scale_dim != keys.dim(0)) {
    throw DimensionError("compatibility: scale dimension " + std::to_string(scale_dim) +
                         " != feature dimension " + std::to_string(keys.dim(0)));
  }
  Attention<T> a;
  a.keys_normed = l2_normalize(keys, 0);
  const T factor = std::sqrt(static_cast<T>(scale_dim));
  Tensor<T> scores = scale(matmul(queries, a.keys_normed), factor);
  a.map = transpose(softmax(scores, 1));
  return a;
}

template <typename T>
CompatibilityGrads<T> compatibility_backward(const Tensor<T>& queries,
                                             const Tensor<T>& keys,
                                             std::size_t scale_dim,
                                             const Attention<T>& attn,
                                             const Tensor<T>& dmap) {
  const T factor = std::sqrt(static_cast<T>(scale_dim));
  const Tensor<T> probs = transpose(attn.map);
  const Tensor<T> dscores =
      scale(softmax_backward(probs, transpose(dmap), 1), factor);
  CompatibilityGrads<T> g;
  g.dqueries = matmul_nt(dscores, attn.keys_normed);
  g.dkeys = l2_normalize_backward(keys, matmul_tn(queries, dscores), 0);
  return g;
}

template <typename T>
GcnParams<T> init_gcn(std::size_t c, Rng& rng) {
  if (c % 4 != 0) {
    throw DimensionError("GCN width " + std::to_string(c) + " must be divisible by 4");
  }
  GcnParams<T> p;
  p.query = kaiming_normal<T>({c / 4, c}, c, rng, 1.0);
  p.key = kaiming_normal<T>({c / 4, c}, c, rng, 1.0);
  p.mix = kaiming_normal<T>({c, c}, c, rng, 1.0);
  return p;
}

template <typename T>
MgcParams<T> init_mgc(const MgcShape& shape, Rng& rng) {
  const std::size_t c = shape.width;
  if (c % 4 != 0) throw DimensionError("MGC width must be divisible by 4");
  if (shape.entity_counts.size() > shape.in_channels.size()) {
    throw DimensionError("more collecting levels than distributed levels");
  }
  MgcParams<T> p;
  p.ortho_weight = shape.ortho_weight;
  for (std::size_t i = 0; i < shape.in_channels.size(); ++i) {
    const std::size_t ci = shape.in_channels[i];
    MgcLevelParams<T> level;
    if (i < shape.entity_counts.size()) {
      level.entities = orthogonal<T>(shape.entity_counts[i], ci, rng);
      level.embed = kaiming_normal<T>({c, ci}, ci, rng, 1.0);
      level.gcn = init_gcn<T>(c, rng);
    }
    level.query = kaiming_normal<T>({c, ci}, ci, rng, 1.0);
    level.residual = kaiming_normal<T>({c, ci}, ci, rng, 1.0);
    p.levels.push_back(std::move(level));
  }
  p.shared = init_gcn<T>(c, rng);
  p.out = kaiming_normal<T>({c, c}, c, rng, 1.0);
  return p;
}

template <typename T>
CollectTrace<T> collect_context_forward(const Tensor<T>& feature,
                                        const MgcLevelParams<T>& p) {
  if (!p.collects()) throw DimensionError("collect_context: level has no entities");
  if (feature.rank() != 3 || feature.dim(0) != p.entities.dim(1)) {
    throw DimensionError("collect_context: feature " + shape_to_string(feature.shape()) +
                         " vs entities " + shape_to_string(p.entities.shape()));
  }
  CollectTrace<T> tr;
  tr.feature_shape = feature.shape();
  tr.features = flatten_spatial(feature);
  tr.attn = compatibility_forward(p.entities, tr.features, feature.dim(0));
  tr.pooled = matmul(tr.features, tr.attn.map);
  tr.context = matmul(p.embed, tr.pooled);
  return tr;
}

template <typename T>
Tensor<T> collect_context_backward(const CollectTrace<T>& tr,
                                   const MgcLevelParams<T>& p,
                                   const Tensor<T>& dcontext,
                                   MgcLevelParams<T>& grad) {
  grad.embed += matmul_nt(dcontext, tr.pooled);
  const Tensor<T> dpooled = matmul_tn(p.embed, dcontext);
  Tensor<T> dfeatures = matmul_nt(dpooled, tr.attn.map);
  const Tensor<T> dmap = matmul_tn(tr.features, dpooled);
  auto cg = compatibility_backward(p.entities, tr.features, tr.feature_shape[0],
                                   tr.attn, dmap);
  grad.entities += cg.dqueries;
  dfeatures += cg.dkeys;
  return std::move(dfeatures).reshaped(tr.feature_shape);
}

namespace {

template <typename T>
Tensor<T> gram_minus_identity(const Tensor<T>& w) {
  Tensor<T> e = matmul_nt(w, w);
  for (std::size_t i = 0; i < e.dim(0); ++i) e(i, i) -= T{1};
  return e;
}

}  // namespace

template <typename T>
T orthogonal_reg_loss(const MgcParams<T>& p) {
  T total{0};
  for (const auto& level : p.levels) {
    if (!level.collects()) continue;
    const Tensor<T> e = gram_minus_identity(level.entities);
    total += dot(e, e);
  }
  return static_cast<T>(p.ortho_weight) * total;
}

template <typename T>
void orthogonal_reg_backward(const MgcParams<T>& p, T upstream, MgcParams<T>& grad) {
  const T factor = upstream * static_cast<T>(p.ortho_weight) * T{4};
  for (std::size_t i = 0; i < p.levels.size(); ++i) {
    const auto& level = p.levels[i];
    if (!level.collects()) continue;
    // d||W W^T - I||^2 / dW = 4 (W W^T - I) W
    grad.levels[i].entities +=
        scale(matmul(gram_minus_identity(level.entities), level.entities), factor);
  }
}

template <typename T>
GcnTrace<T> gcn_forward(const Tensor<T>& g, const GcnParams<T>& p) {
  if (g.rank() != 2 || g.dim(0) != p.width()) {
    throw DimensionError("gcn_layer: bank " + shape_to_string(g.shape()) +
                         " vs width " + std::to_string(p.width()));
  }
  GcnTrace<T> tr;
  tr.input = g;
  tr.queries = transpose(matmul(p.query, g));
  tr.keys = matmul(p.key, g);
  tr.attn = compatibility_forward(tr.queries, tr.keys, p.query.dim(0));
  tr.mixed = matmul(p.mix, g);
  tr.output = add(matmul(tr.mixed, tr.attn.map), g);
  return tr;
}

template <typename T>
Tensor<T> gcn_backward(const GcnTrace<T>& tr, const GcnParams<T>& p,
                       const Tensor<T>& dout, GcnParams<T>& grad) {
  const Tensor<T>& g = tr.input;
  Tensor<T> dg = dout;
  const Tensor<T> dmixed = matmul_nt(dout, tr.attn.map);
  const Tensor<T> dmap = matmul_tn(tr.mixed, dout);
  grad.mix += matmul_nt(dmixed, g);
  dg += matmul_tn(p.mix, dmixed);

  auto cg = compatibility_backward(tr.queries, tr.keys, p.query.dim(0), tr.attn, dmap);
  const Tensor<T> dq = transpose(cg.dqueries);
  grad.query += matmul_nt(dq, g);
  dg += matmul_tn(p.query, dq);
  grad.key += matmul_nt(cg.dkeys, g);
  dg += matmul_tn(p.key, cg.dkeys);
  return dg;
}

template <typename T>
ReasonTrace<T> reason_multilevel_forward(const std::vector<Tensor<T>>& banks,
                                         const GcnParams<T>& shared) {
  ReasonTrace<T> tr;
  for (const auto& b : banks) tr.widths.push_back(b.rank() == 2 ? b.dim(1) : 0);
  tr.gcn = gcn_forward(concat_columns(banks), shared);
  return tr;
}

template <typename T>
std::vector<Tensor<T>> reason_multilevel_backward(const ReasonTrace<T>& tr,
                                                  const GcnParams<T>& shared,
                                                  const Tensor<T>& dfused,
                                                  GcnParams<T>& grad) {
  return split_columns(gcn_backward(tr.gcn, shared, dfused, grad), tr.widths);
}

template <typename T>
DistributeTrace<T> distribute_context_forward(const Tensor<T>& feature,
                                              const Tensor<T>& fused,
                                              const MgcLevelParams<T>& level,
                                              const Tensor<T>& out_proj) {
  if (feature.rank() != 3 || feature.dim(0) != level.in_channels()) {
    throw DimensionError("distribute_context: feature " + shape_to_string(feature.shape()) +
                         " vs projection " + shape_to_string(level.query.shape()));
  }
  if (fused.empty() || fused.rank() != 2 || fused.dim(0) != level.query.dim(0)) {
    throw DimensionError("distribute_context: fused bank " + shape_to_string(fused.shape()));
  }
  DistributeTrace<T> tr;
  tr.feature_shape = feature.shape();
  tr.features = flatten_spatial(feature);
  tr.queries = transpose(matmul(level.query, tr.features));
  tr.attn = compatibility_forward(tr.queries, fused, fused.dim(0));
  tr.values = matmul(out_proj, fused);
  Tensor<T> out = matmul(tr.values, tr.attn.map);
  out += matmul(level.residual, tr.features);
  tr.output = std::move(out).reshaped({fused.dim(0), feature.dim(1), feature.dim(2)});
  return tr;
}

template <typename T>
DistributeGrads<T> distribute_context_backward(const DistributeTrace<T>& tr,
                                               const Tensor<T>& fused,
                                               const MgcLevelParams<T>& level,
                                               const Tensor<T>& out_proj,
                                               const Tensor<T>& doutput,
                                               MgcLevelParams<T>& level_grad,
                                               Tensor<T>& out_proj_grad) {
  const Tensor<T> dout = doutput.reshaped({doutput.dim(0), doutput.dim(1) * doutput.dim(2)});
  const Tensor<T> dvalues = matmul_nt(dout, tr.attn.map);
  const Tensor<T> dmap = matmul_tn(tr.values, dout);
  out_proj_grad += matmul_nt(dvalues, fused);

  DistributeGrads<T> g;
  g.dfused = matmul_tn(out_proj, dvalues);
  auto cg = compatibility_backward(tr.queries, fused, fused.dim(0), tr.attn, dmap);
  g.dfused += cg.dkeys;

  const Tensor<T> dq = transpose(cg.dqueries);
  level_grad.query += matmul_nt(dq, tr.features);
  Tensor<T> dfeatures = matmul_tn(level.query, dq);
  level_grad.residual += matmul_nt(dout, tr.features);
  dfeatures += matmul_tn(level.residual, dout);
  g.dfeature = std::move(dfeatures).reshaped(tr.feature_shape);
  return g;
}

template <typename T>
MgcTrace<T> mgc_forward_traced(const std::vector<Tensor<T>>& features,
                               const MgcParams<T>& p) {
  if (features.size() != p.levels.size()) {
    throw DimensionError("mgc_forward: missing level (got " + std::to_string(features.size()) +
                         " features for " + std::to_string(p.levels.size()) + " levels)");
  }
  MgcTrace<T> tr;
  std::vector<Tensor<T>> banks;
  for (std::size_t i = 0; i < p.levels.size(); ++i) {
    if (!p.levels[i].collects()) continue;
    tr.collect.push_back(collect_context_forward(features[i], p.levels[i]));
    tr.local.push_back(gcn_forward(tr.collect.back().context, p.levels[i].gcn));
    banks.push_back(tr.local.back().output);
  }
  if (banks.empty()) throw DimensionError("mgc_forward: no collecting level");
  tr.joint = reason_multilevel_forward(banks, p.shared);
  const Tensor<T>& fused = tr.joint.gcn.output;
  for (std::size_t i = 0; i < p.levels.size(); ++i)
    tr.distribute.push_back(distribute_context_forward(features[i], fused, p.levels[i], p.out));
  return tr;
}

template <typename T>
std::vector<Tensor<T>> mgc_forward(const std::vector<Tensor<T>>& features,
                                   const MgcParams<T>& p) {
  auto tr = mgc_forward_traced(features, p);
  std::vector<Tensor<T>> out;
  for (auto& d : tr.distribute) out.push_back(std::move(d.output));
  return out;
}

template <typename T>
std::vector<Tensor<T>> mgc_backward(const MgcTrace<T>& tr, const MgcParams<T>& p,
                                    const std::vector<Tensor<T>>& doutputs,
                                    MgcParams<T>& grad) {
  const Tensor<T>& fused = tr.joint.gcn.output;
  std::vector<Tensor<T>> dfeatures;
  Tensor<T> dfused(fused.shape());
  for (std::size_t i = 0; i < p.levels.size(); ++i) {
    auto g = distribute_context_backward(tr.distribute[i], fused, p.levels[i], p.out,
                                         doutputs[i], grad.levels[i], grad.out);
    dfeatures.push_back(std::move(g.dfeature));
    dfused += g.dfused;
  }
  auto dbanks = reason_multilevel_backward(tr.joint, p.shared, dfused, grad.shared);
  std::size_t bank = 0;
  for (std::size_t i = 0; i < p.levels.size(); ++i) {
    if (!p.levels[i].collects()) continue;
    const Tensor<T> dcontext =
        gcn_backward(tr.local[bank], p.levels[i].gcn, dbanks[bank], grad.levels[i].gcn);
    dfeatures[i] += collect_context_backward(tr.collect[bank], p.levels[i], dcontext,
                                             grad.levels[i]);
    ++bank;
  }
  return dfeatures;
}

#define A2FPN_INSTANTIATE_MGC(T)                                                        \
  template Attention<T> compatibility_forward(const Tensor<T>&, const Tensor<T>&,       \
                                              std::size_t);                             \
  template CompatibilityGrads<T> compatibility_backward(                                \
      const Tensor<T>&, const Tensor<T>&, std::size_t, const Attention<T>&,             \
      const Tensor<T>&);                                                                \
  template GcnParams<T> init_gcn(std::size_t, Rng&);                                    \
  template MgcParams<T> init_mgc(const MgcShape&, Rng&);                                \
  template CollectTrace<T> collect_context_forward(const Tensor<T>&,                    \
                                                   const MgcLevelParams<T>&);           \
  template Tensor<T> collect_context_backward(const CollectTrace<T>&,                   \
                                              const MgcLevelParams<T>&,                 \
                                              const Tensor<T>&, MgcLevelParams<T>&);    \
  template T orthogonal_reg_loss(const MgcParams<T>&);                                  \
  template void orthogonal_reg_backward(const MgcParams<T>&, T, MgcParams<T>&);         \
  template GcnTrace<T> gcn_forward(const Tensor<T>&, const GcnParams<T>&);              \
  template Tensor<T> gcn_backward(const GcnTrace<T>&, const GcnParams<T>&,              \
                                  const Tensor<T>&, GcnParams<T>&);                     \
  template ReasonTrace<T> reason_multilevel_forward(const std::vector<Tensor<T>>&,      \
                                                    const GcnParams<T>&);               \
  template std::vector<Tensor<T>> reason_multilevel_backward(                           \
      const ReasonTrace<T>&, const GcnParams<T>&, const Tensor<T>&, GcnParams<T>&);     \
  template DistributeTrace<T> distribute_context_forward(                               \
      const Tensor<T>&, const Tensor<T>&, const MgcLevelParams<T>&, const Tensor<T>&);  \
  template DistributeGrads<T> distribute_context_backward(                              \
      const DistributeTrace<T>&, const Tensor<T>&, const MgcLevelParams<T>&,            \
      const Tensor<T>&, const Tensor<T>&, MgcLevelParams<T>&, Tensor<T>&);              \
  template MgcTrace<T> mgc_forward_traced(const std::vector<Tensor<T>>&,                \
                                          const MgcParams<T>&);                         \
  template std::vector<Tensor<T>> mgc_forward(const std::vector<Tensor<T>>&,            \
                                              const MgcParams<T>&);                     \
  template std::vector<Tensor<T>> mgc_backward(const MgcTrace<T>&, const MgcParams<T>&, \
                                               const std::vector<Tensor<T>>&,           \
                                               MgcParams<T>&);

A2FPN_INSTANTIATE_MGC(float)
A2FPN_INSTANTIATE_MGC(double)

#undef A2FPN_INSTANTIATE_MGC

}  // namespace a2fpn
