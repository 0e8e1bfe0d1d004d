// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

#include "a2fpn/init.hpp"
#include "a2fpn/nn_ops.hpp"
#include "a2fpn/tensor.hpp"

namespace a2fpn {

enum class GateActivation { sigmoid, two_sigmoid };

std::string_view to_string(GateActivation act);
GateActivation parse_gate_activation(std::string_view name);

enum class Direction { up, down };

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// compressor (1x1) -> encoder (3x3, ReLU) -> predictor (k_en x k_en).
template <typename T>
struct KernelPredictorParams {
  ConvParams<T> compressor;
  ConvParams<T> encoder;
  ConvParams<T> predictor;
};

/// Squeeze-and-gate path producing 2c channel gates from a 2c-channel input.
template <typename T>
struct ChannelAttentionParams {
  Tensor<T> mask;      // 1 x 2c
  Tensor<T> squeeze;   // c/2 x 2c
  Tensor<T> excite;    // 2c x c/2
  Tensor<T> ln_gain;   // c/2
  Tensor<T> ln_shift;  // c/2

  bool present() const { return !mask.empty(); }
};

template <typename T>
struct FusionParams {
  KernelPredictorParams<T> kpred;
  ChannelAttentionParams<T> gate;  // empty for the ungated baselines
  ConvParams<T> smooth;            // anti-alias 3x3 conv after the merge
  Direction direction = Direction::up;
  std::size_t kernel_size = 5;
  std::size_t scale = 2;
  bool concat_guidance = true;

  std::size_t channels() const { return smooth.out_channels(); }
};

struct FusionSpec {
  std::size_t channels = 256;
  std::size_t c_mid = 64;
  std::size_t k_encoder = 3;
  std::size_t kernel_size = 5;
  std::size_t scale = 2;
  Direction direction = Direction::up;
  bool concat_guidance = true;
  bool gated = true;
};

template <typename T>
FusionParams<T> init_fusion(const FusionSpec& spec, Rng& rng);

template <typename T>
FusionParams<T> zeros_like(const FusionParams<T>& p);

struct FusionOptions {
  GateActivation activation = GateActivation::two_sigmoid;
  bool pin_gates = false;  // skip the gate path and merge with unit weights
};

// ---------------------------------------------------------------------------
// Kernel prediction
// ---------------------------------------------------------------------------

template <typename T>
struct KernelTrace {
  Tensor<T> guide;       // predictor input
  Tensor<T> compressed;
  Tensor<T> encoded_pre;
  Tensor<T> encoded;
  Tensor<T> kernels;     // k^2 x H x W, softmax over axis 0
};

/// Up: predictor emits s^2 k^2 channels at the guide resolution, pixel
/// shuffled to k^2 x sH x sW. Down: strided predictor emits k^2 x H/s x W/s.
template <typename T>
KernelTrace<T> predict_kernels_forward(const Tensor<T>& guide,
                                       const FusionParams<T>& p);

/// Returns d(guide).
template <typename T>
Tensor<T> predict_kernels_backward(const KernelTrace<T>& tr,
                                   const FusionParams<T>& p,
                                   const Tensor<T>& dkernels,
                                   FusionParams<T>& grad);

template <typename T>
Tensor<T> predict_up_kernels(const Tensor<T>& coarse, const Tensor<T>& fine_pooled,
                             const FusionParams<T>& p);

template <typename T>
Tensor<T> predict_down_kernels(const Tensor<T>& fine, const Tensor<T>& coarse_up,
                               const FusionParams<T>& p);

// ---------------------------------------------------------------------------
// Content-aware reassembly. Each output location takes the kernel-weighted
// sum of the k x k zero-padded window centred on (y / s, x / s) for
// upsampling and on (s y, s x) for downsampling.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reassemble_up(const Tensor<T>& coarse, const Tensor<T>& kernels,
                        std::size_t s);

template <typename T>
Tensor<T> reassemble_down(const Tensor<T>& fine, const Tensor<T>& kernels,
                          std::size_t s);

template <typename T>
struct ReassembleGrads {
  Tensor<T> dsource;
  Tensor<T> dkernels;
};

template <typename T>
ReassembleGrads<T> reassemble_up_backward(const Tensor<T>& coarse,
                                          const Tensor<T>& kernels,
                                          std::size_t s, const Tensor<T>& dout);

template <typename T>
ReassembleGrads<T> reassemble_down_backward(const Tensor<T>& fine,
                                            const Tensor<T>& kernels,
                                            std::size_t s, const Tensor<T>& dout);

// ---------------------------------------------------------------------------
// Channel gates
// ---------------------------------------------------------------------------

template <typename T>
struct GateTrace {
  Shape input_shape;
  Tensor<T> input;     // 2c x hw
  Tensor<T> mask;      // 1 x hw, softmax over positions
  Tensor<T> pooled;    // 2c x 1
  Tensor<T> squeezed;  // c/2
  Tensor<T> normed;    // c/2
  Tensor<T> hidden;    // c/2 after ReLU
  Tensor<T> gates;     // 2c
};

template <typename T>
struct ChannelGates {
  Tensor<T> high;  // first c entries
  Tensor<T> low;   // last c entries
};

template <typename T>
GateTrace<T> channel_gates_forward(const Tensor<T>& high, const Tensor<T>& low,
                                   const ChannelAttentionParams<T>& p,
                                   GateActivation act);

template <typename T>
ChannelGates<T> split_gates(const Tensor<T>& gates);

template <typename T>
ChannelGates<T> channel_gates(const Tensor<T>& high, const Tensor<T>& low,
                              const ChannelAttentionParams<T>& p,
                              GateActivation act) {
  return split_gates(channel_gates_forward(high, low, p, act).gates);
}

/// d(high), d(low) given d(gates) (2c entries).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_gates_backward(const GateTrace<T>& tr,
                                                       const ChannelAttentionParams<T>& p,
                                                       GateActivation act,
                                                       const Tensor<T>& dgates,
                                                       ChannelAttentionParams<T>& grad);

// ---------------------------------------------------------------------------
// Fusion sites
// ---------------------------------------------------------------------------

template <typename T>
struct FusionTrace {
  Tensor<T> primary;    // upper (top-down) or lower (bottom-up) input
  Tensor<T> partner;    // lateral (top-down) or td (bottom-up) input
  MaxPoolResult<T> pooled;  // top-down: pooled lateral
  Tensor<T> upsampled;      // bottom-up: bilinearly upsampled td
  KernelTrace<T> kernels;
  Tensor<T> resampled;  // reassembled primary
  bool gated = false;
  GateTrace<T> gate;
  Tensor<T> merged;
  Tensor<T> output;
};

/// upper: c x h x w, lateral: c x sh x sw -> c x sh x sw
template <typename T>
FusionTrace<T> fuse_topdown_forward(const Tensor<T>& upper, const Tensor<T>& lateral,
                                    const FusionParams<T>& p, const FusionOptions& opt);

/// lower: c x sh x sw, td: c x h x w -> c x h x w
template <typename T>
FusionTrace<T> fuse_bottomup_forward(const Tensor<T>& lower, const Tensor<T>& td,
                                     const FusionParams<T>& p, const FusionOptions& opt);

template <typename T>
Tensor<T> fuse_topdown(const Tensor<T>& upper, const Tensor<T>& lateral,
                       const FusionParams<T>& p, const FusionOptions& opt = {}) {
  return fuse_topdown_forward(upper, lateral, p, opt).output;
}

template <typename T>
Tensor<T> fuse_bottomup(const Tensor<T>& lower, const Tensor<T>& td,
                        const FusionParams<T>& p, const FusionOptions& opt = {}) {
  return fuse_bottomup_forward(lower, td, p, opt).output;
}

template <typename T>
struct FusionGrads {
  Tensor<T> dprimary;
  Tensor<T> dpartner;
};

template <typename T>
FusionGrads<T> fuse_topdown_backward(const FusionTrace<T>& tr, const FusionParams<T>& p,
                                     const FusionOptions& opt, const Tensor<T>& dout,
                                     FusionParams<T>& grad);

template <typename T>
FusionGrads<T> fuse_bottomup_backward(const FusionTrace<T>& tr, const FusionParams<T>& p,
                                      const FusionOptions& opt, const Tensor<T>& dout,
                                      FusionParams<T>& grad);

/// Plain CARAFE upsampling fusion: kernels predicted from the upper feature
/// alone, unit gates. `p` must come from a spec without concat guidance.
template <typename T>
Tensor<T> carafe_baseline(const Tensor<T>& upper, const Tensor<T>& lateral,
                          const FusionParams<T>& p);

/// Plain content-aware pooling fusion, the bottom-up counterpart.
template <typename T>
Tensor<T> cap_baseline(const Tensor<T>& lower, const Tensor<T>& td,
                       const FusionParams<T>& p);

}  // namespace a2fpn
