// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "a2fpn/init.hpp"
#include "a2fpn/tensor.hpp"

namespace a2fpn {

// ---------------------------------------------------------------------------
// Scaled cosine-similarity attention.
//
// For queries Q (n_q x d) and keys K (d x n_k) the attention map is
//   A = softmax_keys(sqrt(d) * Q * normalize_columns(K))^T      (n_k x n_q)
// so every column of A is a distribution over the keys. Only the keys are
// L2-normalized; queries enter unnormalized.
// ---------------------------------------------------------------------------

template <typename T>
struct Attention {
  Tensor<T> map;          // n_k x n_q, columns sum to one
  Tensor<T> keys_normed;  // d x n_k
};

template <typename T>
Attention<T> compatibility_forward(const Tensor<T>& queries,
                                   const Tensor<T>& keys,
                                   std::size_t scale_dim);

template <typename T>
Tensor<T> compatibility(const Tensor<T>& queries, const Tensor<T>& keys,
                        std::size_t scale_dim) {
  return compatibility_forward(queries, keys, scale_dim).map;
}

template <typename T>
struct CompatibilityGrads {
  Tensor<T> dqueries;
  Tensor<T> dkeys;
};

template <typename T>
CompatibilityGrads<T> compatibility_backward(const Tensor<T>& queries,
                                             const Tensor<T>& keys,
                                             std::size_t scale_dim,
                                             const Attention<T>& attn,
                                             const Tensor<T>& dmap);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Dynamic-adjacency GCN: query/key projections (c/4 x c) and the mixing
/// weight (c x c).
template <typename T>
struct GcnParams {
  Tensor<T> query;
  Tensor<T> key;
  Tensor<T> mix;

  std::size_t width() const { return mix.dim(0); }
};

/// Per-level weights. Collecting levels own `entities`, `embed` and `gcn`;
/// every level owns the distribution projections `query` and `residual`.
template <typename T>
struct MgcLevelParams {
  Tensor<T> entities;  // n_i x c_i  (semantic entities, orthonormal rows at init)
  Tensor<T> embed;     // c x c_i
  GcnParams<T> gcn;
  Tensor<T> query;     // c x c_i
  Tensor<T> residual;  // c x c_i

  bool collects() const { return !entities.empty(); }
  std::size_t in_channels() const { return query.dim(1); }
};

template <typename T>
struct MgcParams {
  std::vector<MgcLevelParams<T>> levels;  // index 0 is pyramid level 2
  GcnParams<T> shared;                    // multi-level reasoning
  Tensor<T> out;                          // c x c
  double ortho_weight = 1e-4;

  std::size_t width() const { return out.dim(0); }
};

struct MgcShape {
  std::size_t width = 256;                 // c
  std::vector<std::size_t> in_channels;    // c_i for each distributed level
  std::vector<std::size_t> entity_counts;  // n_i for each collecting level
  double ortho_weight = 1e-4;
};

template <typename T>
GcnParams<T> init_gcn(std::size_t c, Rng& rng);

template <typename T>
MgcParams<T> init_mgc(const MgcShape& shape, Rng& rng);

// ---------------------------------------------------------------------------
// Context collection: G_i = W_embed F A, A = compat(W_entities, F, c_i)
// ---------------------------------------------------------------------------

template <typename T>
struct CollectTrace {
  Shape feature_shape;
  Tensor<T> features;  // c_i x hw
  Attention<T> attn;   // hw x n_i
  Tensor<T> pooled;    // c_i x n_i
  Tensor<T> context;   // c x n_i
};

template <typename T>
CollectTrace<T> collect_context_forward(const Tensor<T>& feature,
                                        const MgcLevelParams<T>& p);

template <typename T>
Tensor<T> collect_context(const Tensor<T>& feature, const MgcLevelParams<T>& p) {
  return collect_context_forward(feature, p).context;
}

template <typename T>
Tensor<T> collect_context_backward(const CollectTrace<T>& tr,
                                   const MgcLevelParams<T>& p,
                                   const Tensor<T>& dcontext,
                                   MgcLevelParams<T>& grad);

/// lambda * sum_i ||W_i W_i^T - I||_F^2 over the entity matrices.
template <typename T>
T orthogonal_reg_loss(const MgcParams<T>& p);

/// Accumulates `upstream` * d(loss)/d(entities) into `grad`.
template <typename T>
void orthogonal_reg_backward(const MgcParams<T>& p, T upstream,
                             MgcParams<T>& grad);

// ---------------------------------------------------------------------------
// GCN with self-attention adjacency and a residual connection:
//   out = W_mix G compat((W_query G)^T, W_key G, c/4) + G
// ---------------------------------------------------------------------------

template <typename T>
struct GcnTrace {
  Tensor<T> input;      // c x n
  Tensor<T> queries;    // n x c/4
  Tensor<T> keys;       // c/4 x n
  Attention<T> attn;    // n x n
  Tensor<T> mixed;      // c x n (W_mix G)
  Tensor<T> output;
};

template <typename T>
GcnTrace<T> gcn_forward(const Tensor<T>& g, const GcnParams<T>& p);

template <typename T>
Tensor<T> gcn_layer(const Tensor<T>& g, const GcnParams<T>& p) {
  return gcn_forward(g, p).output;
}

template <typename T>
Tensor<T> gcn_backward(const GcnTrace<T>& tr, const GcnParams<T>& p,
                       const Tensor<T>& dout, GcnParams<T>& grad);

/// Column-wise concatenation of per-level banks followed by one shared GCN.
template <typename T>
struct ReasonTrace {
  std::vector<std::size_t> widths;
  GcnTrace<T> gcn;
};

template <typename T>
ReasonTrace<T> reason_multilevel_forward(const std::vector<Tensor<T>>& banks,
                                         const GcnParams<T>& shared);

template <typename T>
Tensor<T> reason_multilevel(const std::vector<Tensor<T>>& banks,
                            const GcnParams<T>& shared) {
  return reason_multilevel_forward(banks, shared).gcn.output;
}

template <typename T>
std::vector<Tensor<T>> reason_multilevel_backward(const ReasonTrace<T>& tr,
                                                  const GcnParams<T>& shared,
                                                  const Tensor<T>& dfused,
                                                  GcnParams<T>& grad);

// ---------------------------------------------------------------------------
// Context distribution:
//   P = W_out G~ compat((W_query F)^T, G~, c) + W_residual F
// ---------------------------------------------------------------------------

template <typename T>
struct DistributeTrace {
  Shape feature_shape;
  Tensor<T> features;   // c_i x hw
  Tensor<T> queries;    // hw x c
  Attention<T> attn;    // n x hw
  Tensor<T> values;     // c x n  (W_out G~)
  Tensor<T> output;     // c x h x w
};

template <typename T>
DistributeTrace<T> distribute_context_forward(const Tensor<T>& feature,
                                              const Tensor<T>& fused,
                                              const MgcLevelParams<T>& level,
                                              const Tensor<T>& out_proj);

template <typename T>
Tensor<T> distribute_context(const Tensor<T>& feature, const Tensor<T>& fused,
                             const MgcLevelParams<T>& level,
                             const Tensor<T>& out_proj) {
  return distribute_context_forward(feature, fused, level, out_proj).output;
}

template <typename T>
struct DistributeGrads {
  Tensor<T> dfeature;
  Tensor<T> dfused;
};

template <typename T>
DistributeGrads<T> distribute_context_backward(const DistributeTrace<T>& tr,
                                               const Tensor<T>& fused,
                                               const MgcLevelParams<T>& level,
                                               const Tensor<T>& out_proj,
                                               const Tensor<T>& doutput,
                                               MgcLevelParams<T>& level_grad,
                                               Tensor<T>& out_proj_grad);

// ---------------------------------------------------------------------------
// Whole module: collect from every collecting level, reason per level then
// jointly, distribute to every level.
// ---------------------------------------------------------------------------

template <typename T>
struct MgcTrace {
  std::vector<CollectTrace<T>> collect;
  std::vector<GcnTrace<T>> local;
  ReasonTrace<T> joint;
  std::vector<DistributeTrace<T>> distribute;
};

template <typename T>
MgcTrace<T> mgc_forward_traced(const std::vector<Tensor<T>>& features,
                               const MgcParams<T>& p);

template <typename T>
std::vector<Tensor<T>> mgc_forward(const std::vector<Tensor<T>>& features,
                                   const MgcParams<T>& p);

template <typename T>
std::vector<Tensor<T>> mgc_backward(const MgcTrace<T>& tr, const MgcParams<T>& p,
                                    const std::vector<Tensor<T>>& doutputs,
                                    MgcParams<T>& grad);

}  // namespace a2fpn
