// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/fusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "a2fpn/ops.hpp"

namespace a2fpn {

std::string_view to_string(GateActivation act) {
  return act == GateActivation::sigmoid ? "sigmoid" : "two_sigmoid";
}

GateActivation parse_gate_activation(std::string_view name) {
  if (name == "sigmoid") return GateActivation::sigmoid;
  if (name == "two_sigmoid") return GateActivation::two_sigmoid;
  throw std::invalid_argument("unknown gate activation '" + std::string(name) +
                              "' (expected sigmoid or two_sigmoid)");
}

namespace {

void require_feature(const Shape& s, const char* what) {
  if (s.size() != 3) {
    throw DimensionError(std::string(what) + ": expected c x h x w, got " +
                         shape_to_string(s));
  }
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, GateActivation act) {
  return act == GateActivation::sigmoid ? sigmoid(x) : two_sigmoid(x);
}

template <typename T>
Tensor<T> activate_backward(const Tensor<T>& y, const Tensor<T>& dy, GateActivation act) {
  return act == GateActivation::sigmoid ? sigmoid_backward(y, dy)
                                        : two_sigmoid_backward(y, dy);
}

// Window centre of output (oy, ox) in source coordinates.
struct UpCenter {
  std::size_t s;
  std::size_t operator()(std::size_t o) const { return o / s; }
};
struct DownCenter {
  std::size_t s;
  std::size_t operator()(std::size_t o) const { return o * s; }
};

void check_reassembly(const Shape& src, const Shape& kernels, std::size_t out_h,
                      std::size_t out_w, const char* what) {
  require_feature(src, what);
  require_feature(kernels, what);
  const std::size_t k2 = kernels[0];
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(k2))));
  if (k * k != k2 || k % 2 == 0) {
    throw DimensionError(std::string(what) + ": kernel channel count " +
                         std::to_string(k2) + " is not an odd square");
  }
  if (kernels[1] != out_h || kernels[2] != out_w) {
    throw DimensionError(std::string(what) + ": kernels " + shape_to_string(kernels) +
                         " do not match source " + shape_to_string(src));
  }
}

std::size_t kernel_side(std::size_t k2) {
  return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(k2))));
}

template <typename T, typename Center>
Tensor<T> reassemble(const Tensor<T>& src, const Tensor<T>& kernels, Center center) {
  const std::size_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
  const std::size_t k2 = kernels.dim(0), oh = kernels.dim(1), ow = kernels.dim(2);
  const std::size_t k = kernel_side(k2);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<T> out({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto cy = static_cast<std::ptrdiff_t>(center(oy));
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto cx = static_cast<std::ptrdiff_t>(center(ox));
        T acc{0};
        for (std::size_t dy = 0; dy < k; ++dy) {
          const std::ptrdiff_t sy = cy + static_cast<std::ptrdiff_t>(dy) - r;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::ptrdiff_t sx = cx + static_cast<std::ptrdiff_t>(dx) - r;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            acc += kernels(dy * k + dx, oy, ox) *
                   src(ch, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
          }
        }
        out(ch, oy, ox) = acc;
      }
    }
  }
  return out;
}

template <typename T, typename Center>
ReassembleGrads<T> reassemble_backward(const Tensor<T>& src, const Tensor<T>& kernels,
                                       const Tensor<T>& dout, Center center) {
  const std::size_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
  const std::size_t k2 = kernels.dim(0), oh = kernels.dim(1), ow = kernels.dim(2);
  if (dout.shape() != Shape{c, oh, ow}) {
    throw DimensionError("reassemble backward: upstream " + shape_to_string(dout.shape()));
  }
  const std::size_t k = kernel_side(k2);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  ReassembleGrads<T> g{Tensor<T>(src.shape()), Tensor<T>(kernels.shape())};
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto cy = static_cast<std::ptrdiff_t>(center(oy));
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto cx = static_cast<std::ptrdiff_t>(center(ox));
        const T d = dout(ch, oy, ox);
        for (std::size_t dy = 0; dy < k; ++dy) {
          const std::ptrdiff_t sy = cy + static_cast<std::ptrdiff_t>(dy) - r;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::ptrdiff_t sx = cx + static_cast<std::ptrdiff_t>(dx) - r;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            const auto uy = static_cast<std::size_t>(sy);
            const auto ux = static_cast<std::size_t>(sx);
            g.dkernels(dy * k + dx, oy, ox) += d * src(ch, uy, ux);
            g.dsource(ch, uy, ux) += d * kernels(dy * k + dx, oy, ox);
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
ChannelAttentionParams<T> init_channel_attention(std::size_t c, Rng& rng) {
  ChannelAttentionParams<T> p;
  p.mask = kaiming_normal<T>({1, 2 * c}, 2 * c, rng, 1.0);
  p.squeeze = kaiming_normal<T>({c / 2, 2 * c}, 2 * c, rng, 1.0);
  p.excite = kaiming_normal<T>({2 * c, c / 2}, c / 2, rng, 1.0);
  p.ln_gain = Tensor<T>({c / 2}, T{1});
  p.ln_shift = Tensor<T>({c / 2});
  return p;
}

template <typename T>
void check_gates(const FusionParams<T>& p, const FusionOptions& opt) {
  if (!opt.pin_gates && !p.gate.present()) {
    throw std::invalid_argument("fusion site has no channel-attention weights; "
                                "gates must be pinned");
  }
}

}  // namespace

template <typename T>
FusionParams<T> init_fusion(const FusionSpec& spec, Rng& rng) {
  if (spec.kernel_size % 2 == 0 || spec.k_encoder % 2 == 0) {
    throw DimensionError("fusion kernel sizes must be odd");
  }
  if (spec.channels % 2 != 0) throw DimensionError("fusion width must be even");
  FusionParams<T> p;
  p.direction = spec.direction;
  p.kernel_size = spec.kernel_size;
  p.scale = spec.scale;
  p.concat_guidance = spec.concat_guidance;

  const std::size_t c = spec.channels;
  const std::size_t guide = spec.concat_guidance ? 2 * c : c;
  const std::size_t k2 = spec.kernel_size * spec.kernel_size;
  const bool up = spec.direction == Direction::up;
  p.kpred.compressor = make_conv<T>(guide, spec.c_mid, 1, 1, true, rng, 1.0);
  p.kpred.encoder = make_conv<T>(spec.c_mid, spec.c_mid, 3, 1, true, rng, std::sqrt(2.0));
  p.kpred.predictor = make_conv<T>(spec.c_mid, up ? spec.scale * spec.scale * k2 : k2,
                                   spec.k_encoder, up ? 1 : spec.scale, true, rng, 1.0);
  p.kpred.predictor.weight = random_normal<T>(p.kpred.predictor.weight.shape(), rng, 1e-3);
  if (spec.gated) p.gate = init_channel_attention<T>(c, rng);
  p.smooth = make_conv<T>(c, c, 3, 1, true, rng, 1.0);
  return p;
}

template <typename T>
FusionParams<T> zeros_like(const FusionParams<T>& p) {
  FusionParams<T> g = p;
  g.kpred.compressor = zeros_like(p.kpred.compressor);
  g.kpred.encoder = zeros_like(p.kpred.encoder);
  g.kpred.predictor = zeros_like(p.kpred.predictor);
  g.gate.mask = Tensor<T>::zeros_like(p.gate.mask);
  g.gate.squeeze = Tensor<T>::zeros_like(p.gate.squeeze);
  g.gate.excite = Tensor<T>::zeros_like(p.gate.excite);
  g.gate.ln_gain = Tensor<T>::zeros_like(p.gate.ln_gain);
  g.gate.ln_shift = Tensor<T>::zeros_like(p.gate.ln_shift);
  g.smooth = zeros_like(p.smooth);
  return g;
}

template <typename T>
KernelTrace<T> predict_kernels_forward(const Tensor<T>& guide, const FusionParams<T>& p) {
  require_feature(guide.shape(), "predict_kernels");
  KernelTrace<T> tr;
  tr.guide = guide;
  tr.compressed = conv2d(p.kpred.compressor, guide);
  tr.encoded_pre = conv2d(p.kpred.encoder, tr.compressed);
  tr.encoded = relu(tr.encoded_pre);
  Tensor<T> logits = conv2d(p.kpred.predictor, tr.encoded);
  if (p.direction == Direction::up) logits = pixel_shuffle(logits, p.scale);
  tr.kernels = softmax(logits, 0);
  return tr;
}

template <typename T>
Tensor<T> predict_kernels_backward(const KernelTrace<T>& tr, const FusionParams<T>& p,
                                   const Tensor<T>& dkernels, FusionParams<T>& grad) {
  Tensor<T> dlogits = softmax_backward(tr.kernels, dkernels, 0);
  if (p.direction == Direction::up) dlogits = pixel_unshuffle(dlogits, p.scale);
  const Tensor<T> dencoded =
      conv2d_backward(p.kpred.predictor, tr.encoded, dlogits, grad.kpred.predictor);
  const Tensor<T> dcompressed = conv2d_backward(
      p.kpred.encoder, tr.compressed, relu_backward(tr.encoded_pre, dencoded),
      grad.kpred.encoder);
  return conv2d_backward(p.kpred.compressor, tr.guide, dcompressed, grad.kpred.compressor);
}

template <typename T>
Tensor<T> predict_up_kernels(const Tensor<T>& coarse, const Tensor<T>& fine_pooled,
                             const FusionParams<T>& p) {
  if (p.direction != Direction::up) throw std::invalid_argument("expected upsampling params");
  const Tensor<T> guide = p.concat_guidance ? concat_channels(coarse, fine_pooled) : coarse;
  return predict_kernels_forward(guide, p).kernels;
}

template <typename T>
Tensor<T> predict_down_kernels(const Tensor<T>& fine, const Tensor<T>& coarse_up,
                               const FusionParams<T>& p) {
  if (p.direction != Direction::down) {
    throw std::invalid_argument("expected downsampling params");
  }
  const Tensor<T> guide = p.concat_guidance ? concat_channels(fine, coarse_up) : fine;
  return predict_kernels_forward(guide, p).kernels;
}

template <typename T>
Tensor<T> reassemble_up(const Tensor<T>& coarse, const Tensor<T>& kernels, std::size_t s) {
  require_feature(coarse.shape(), "reassemble_up");
  check_reassembly(coarse.shape(), kernels.shape(), coarse.dim(1) * s, coarse.dim(2) * s,
                   "reassemble_up");
  return reassemble(coarse, kernels, UpCenter{s});
}

template <typename T>
Tensor<T> reassemble_down(const Tensor<T>& fine, const Tensor<T>& kernels, std::size_t s) {
  require_feature(fine.shape(), "reassemble_down");
  if (fine.dim(1) % s != 0 || fine.dim(2) % s != 0) {
    throw DimensionError("reassemble_down: " + shape_to_string(fine.shape()) +
                         " not divisible by the scale");
  }
  check_reassembly(fine.shape(), kernels.shape(), fine.dim(1) / s, fine.dim(2) / s,
                   "reassemble_down");
  return reassemble(fine, kernels, DownCenter{s});
}

template <typename T>
ReassembleGrads<T> reassemble_up_backward(const Tensor<T>& coarse, const Tensor<T>& kernels,
                                          std::size_t s, const Tensor<T>& dout) {
  return reassemble_backward(coarse, kernels, dout, UpCenter{s});
}

template <typename T>
ReassembleGrads<T> reassemble_down_backward(const Tensor<T>& fine, const Tensor<T>& kernels,
                                            std::size_t s, const Tensor<T>& dout) {
  return reassemble_backward(fine, kernels, dout, DownCenter{s});
}

template <typename T>
GateTrace<T> channel_gates_forward(const Tensor<T>& high, const Tensor<T>& low,
                                   const ChannelAttentionParams<T>& p, GateActivation act) {
  require_feature(high.shape(), "channel_gates");
  if (high.shape() != low.shape()) {
    throw DimensionError("channel_gates: " + shape_to_string(high.shape()) + " vs " +
                         shape_to_string(low.shape()));
  }
  if (p.mask.dim(1) != 2 * high.dim(0)) {
    throw DimensionError("channel_gates: weights expect " + std::to_string(p.mask.dim(1)) +
                         " channels, got 2 x " + std::to_string(high.dim(0)));
  }
  GateTrace<T> tr;
  const Tensor<T> x = concat_channels(high, low);
  tr.input_shape = x.shape();
  tr.input = x.reshaped({x.dim(0), x.dim(1) * x.dim(2)});
  tr.mask = softmax(matmul(p.mask, tr.input), 1);
  tr.pooled = matmul_nt(tr.input, tr.mask);
  tr.squeezed = matmul(p.squeeze, tr.pooled).reshaped({p.squeeze.dim(0)});
  tr.normed = layer_norm(tr.squeezed, p.ln_gain, p.ln_shift);
  tr.hidden = relu(tr.normed);
  const Tensor<T> pre =
      matmul(p.excite, tr.hidden.reshaped({tr.hidden.size(), 1})).reshaped({p.excite.dim(0)});
  tr.gates = activate(pre, act);
  return tr;
}

template <typename T>
ChannelGates<T> split_gates(const Tensor<T>& gates) {
  const std::size_t c = gates.size() / 2;
  ChannelGates<T> g{Tensor<T>({c}), Tensor<T>({c})};
  for (std::size_t i = 0; i < c; ++i) {
    g.high[i] = gates[i];
    g.low[i] = gates[c + i];
  }
  return g;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_gates_backward(const GateTrace<T>& tr,
                                                       const ChannelAttentionParams<T>& p,
                                                       GateActivation act,
                                                       const Tensor<T>& dgates,
                                                       ChannelAttentionParams<T>& grad) {
  const std::size_t half = p.squeeze.dim(0);
  const Tensor<T> dpre =
      activate_backward(tr.gates, dgates, act).reshaped({p.excite.dim(0), 1});
  const Tensor<T> hidden = tr.hidden.reshaped({half, 1});
  grad.excite += matmul_nt(dpre, hidden);
  const Tensor<T> dhidden = matmul_tn(p.excite, dpre).reshaped({half});
  auto ln = layer_norm_backward(tr.squeezed, p.ln_gain, relu_backward(tr.normed, dhidden));
  grad.ln_gain += ln.dgain;
  grad.ln_shift += ln.dshift;
  const Tensor<T> dsqueezed = std::move(ln.dx).reshaped({half, 1});
  grad.squeeze += matmul_nt(dsqueezed, tr.pooled);
  const Tensor<T> dpooled = matmul_tn(p.squeeze, dsqueezed);

  Tensor<T> dinput = matmul(dpooled, tr.mask);
  const Tensor<T> dmask = matmul_tn(dpooled, tr.input);
  const Tensor<T> dlogits = softmax_backward(tr.mask, dmask, 1);
  grad.mask += matmul_nt(dlogits, tr.input);
  dinput += matmul_tn(p.mask, dlogits);
  return split_channels(std::move(dinput).reshaped(tr.input_shape), tr.input_shape[0] / 2);
}

template <typename T>
FusionTrace<T> fuse_topdown_forward(const Tensor<T>& upper, const Tensor<T>& lateral,
                                    const FusionParams<T>& p, const FusionOptions& opt) {
  require_feature(upper.shape(), "fuse_topdown");
  require_feature(lateral.shape(), "fuse_topdown");
  if (p.direction != Direction::up) throw std::invalid_argument("fuse_topdown: down params");
  if (lateral.dim(0) != upper.dim(0) || lateral.dim(1) != upper.dim(1) * p.scale ||
      lateral.dim(2) != upper.dim(2) * p.scale) {
    throw DimensionError("fuse_topdown: upper " + shape_to_string(upper.shape()) +
                         " is not half the resolution of lateral " +
                         shape_to_string(lateral.shape()));
  }
  check_gates(p, opt);
  FusionTrace<T> tr;
  tr.primary = upper;
  tr.partner = lateral;
  tr.pooled = max_pool2d(lateral);
  tr.kernels = predict_kernels_forward(
      p.concat_guidance ? concat_channels(upper, tr.pooled.out) : upper, p);
  tr.resampled = reassemble_up(upper, tr.kernels.kernels, p.scale);
  tr.gated = !opt.pin_gates;
  if (tr.gated) {
    tr.gate = channel_gates_forward(upper, tr.pooled.out, p.gate, opt.activation);
    const auto g = split_gates(tr.gate.gates);
    tr.merged = add(scale_channels(tr.resampled, g.high), scale_channels(lateral, g.low));
  } else {
    tr.merged = add(tr.resampled, lateral);
  }
  tr.output = conv2d(p.smooth, tr.merged);
  return tr;
}

template <typename T>
FusionGrads<T> fuse_topdown_backward(const FusionTrace<T>& tr, const FusionParams<T>& p,
                                     const FusionOptions& opt, const Tensor<T>& dout,
                                     FusionParams<T>& grad) {
  const Tensor<T> dmerged = conv2d_backward(p.smooth, tr.merged, dout, grad.smooth);
  const std::size_t c = tr.primary.dim(0);
  Tensor<T> dresampled, dlateral;
  Tensor<T> dupper(tr.primary.shape()), dpooled(tr.pooled.out.shape());
  if (tr.gated) {
    const auto g = split_gates(tr.gate.gates);
    auto hi = scale_channels_backward(tr.resampled, g.high, dmerged);
    auto lo = scale_channels_backward(tr.partner, g.low, dmerged);
    dresampled = std::move(hi.dx);
    dlateral = std::move(lo.dx);
    Tensor<T> dgates({2 * c});
    for (std::size_t i = 0; i < c; ++i) {
      dgates[i] = hi.dgate[i];
      dgates[c + i] = lo.dgate[i];
    }
    auto [dh, dl] = channel_gates_backward(tr.gate, p.gate, opt.activation, dgates, grad.gate);
    dupper += dh;
    dpooled += dl;
  } else {
    dresampled = dmerged;
    dlateral = dmerged;
  }
  auto ra = reassemble_up_backward(tr.primary, tr.kernels.kernels, p.scale, dresampled);
  dupper += ra.dsource;
  const Tensor<T> dguide = predict_kernels_backward(tr.kernels, p, ra.dkernels, grad);
  if (p.concat_guidance) {
    auto [du, dp] = split_channels(dguide, c);
    dupper += du;
    dpooled += dp;
  } else {
    dupper += dguide;
  }
  dlateral += max_pool2d_backward(tr.partner.shape(), tr.pooled.argmax, dpooled);
  return {std::move(dupper), std::move(dlateral)};
}

template <typename T>
FusionTrace<T> fuse_bottomup_forward(const Tensor<T>& lower, const Tensor<T>& td,
                                     const FusionParams<T>& p, const FusionOptions& opt) {
  require_feature(lower.shape(), "fuse_bottomup");
  require_feature(td.shape(), "fuse_bottomup");
  if (p.direction != Direction::down) throw std::invalid_argument("fuse_bottomup: up params");
  if (lower.dim(0) != td.dim(0) || lower.dim(1) != td.dim(1) * p.scale ||
      lower.dim(2) != td.dim(2) * p.scale) {
    throw DimensionError("fuse_bottomup: lower " + shape_to_string(lower.shape()) +
                         " is not twice the resolution of td " +
                         shape_to_string(td.shape()));
  }
  check_gates(p, opt);
  FusionTrace<T> tr;
  tr.primary = lower;
  tr.partner = td;
  tr.upsampled = bilinear_upsample(td, p.scale);
  tr.kernels = predict_kernels_forward(
      p.concat_guidance ? concat_channels(lower, tr.upsampled) : lower, p);
  tr.resampled = reassemble_down(lower, tr.kernels.kernels, p.scale);
  tr.gated = !opt.pin_gates;
  if (tr.gated) {
    tr.gate = channel_gates_forward(lower, tr.upsampled, p.gate, opt.activation);
    const auto g = split_gates(tr.gate.gates);
    tr.merged = add(scale_channels(td, g.high), scale_channels(tr.resampled, g.low));
  } else {
    tr.merged = add(td, tr.resampled);
  }
  tr.output = conv2d(p.smooth, tr.merged);
  return tr;
}

template <typename T>
FusionGrads<T> fuse_bottomup_backward(const FusionTrace<T>& tr, const FusionParams<T>& p,
                                      const FusionOptions& opt, const Tensor<T>& dout,
                                      FusionParams<T>& grad) {
  const Tensor<T> dmerged = conv2d_backward(p.smooth, tr.merged, dout, grad.smooth);
  const std::size_t c = tr.primary.dim(0);
  Tensor<T> dtd, dresampled;
  Tensor<T> dlower(tr.primary.shape()), dupsampled(tr.upsampled.shape());
  if (tr.gated) {
    const auto g = split_gates(tr.gate.gates);
    auto hi = scale_channels_backward(tr.partner, g.high, dmerged);
    auto lo = scale_channels_backward(tr.resampled, g.low, dmerged);
    dtd = std::move(hi.dx);
    dresampled = std::move(lo.dx);
    Tensor<T> dgates({2 * c});
    for (std::size_t i = 0; i < c; ++i) {
      dgates[i] = hi.dgate[i];
      dgates[c + i] = lo.dgate[i];
    }
    auto [dl, du] = channel_gates_backward(tr.gate, p.gate, opt.activation, dgates, grad.gate);
    dlower += dl;
    dupsampled += du;
  } else {
    dtd = dmerged;
    dresampled = dmerged;
  }
  auto ra = reassemble_down_backward(tr.primary, tr.kernels.kernels, p.scale, dresampled);
  dlower += ra.dsource;
  const Tensor<T> dguide = predict_kernels_backward(tr.kernels, p, ra.dkernels, grad);
  if (p.concat_guidance) {
    auto [dl, du] = split_channels(dguide, c);
    dlower += dl;
    dupsampled += du;
  } else {
    dlower += dguide;
  }
  dtd += bilinear_upsample_backward(tr.partner.shape(), dupsampled, p.scale);
  return {std::move(dlower), std::move(dtd)};
}

template <typename T>
Tensor<T> carafe_baseline(const Tensor<T>& upper, const Tensor<T>& lateral,
                          const FusionParams<T>& p) {
  if (p.concat_guidance) {
    throw std::invalid_argument("carafe_baseline: params predict from a concatenation");
  }
  const Tensor<T> kernels = predict_kernels_forward(upper, p).kernels;
  return conv2d(p.smooth, add(reassemble_up(upper, kernels, p.scale), lateral));
}

template <typename T>
Tensor<T> cap_baseline(const Tensor<T>& lower, const Tensor<T>& td, const FusionParams<T>& p) {
  if (p.concat_guidance) {
    throw std::invalid_argument("cap_baseline: params predict from a concatenation");
  }
  const Tensor<T> kernels = predict_kernels_forward(lower, p).kernels;
  return conv2d(p.smooth, add(td, reassemble_down(lower, kernels, p.scale)));
}

#define A2FPN_INSTANTIATE_FUSION(T)                                                        \
  template FusionParams<T> init_fusion(const FusionSpec&, Rng&);                           \
  template FusionParams<T> zeros_like(const FusionParams<T>&);                             \
  template KernelTrace<T> predict_kernels_forward(const Tensor<T>&, const FusionParams<T>&); \
  template Tensor<T> predict_kernels_backward(const KernelTrace<T>&, const FusionParams<T>&, \
                                              const Tensor<T>&, FusionParams<T>&);         \
  template Tensor<T> predict_up_kernels(const Tensor<T>&, const Tensor<T>&,                \
                                        const FusionParams<T>&);                           \
  template Tensor<T> predict_down_kernels(const Tensor<T>&, const Tensor<T>&,              \
                                          const FusionParams<T>&);                         \
  template Tensor<T> reassemble_up(const Tensor<T>&, const Tensor<T>&, std::size_t);       \
  template Tensor<T> reassemble_down(const Tensor<T>&, const Tensor<T>&, std::size_t);     \
  template ReassembleGrads<T> reassemble_up_backward(const Tensor<T>&, const Tensor<T>&,   \
                                                     std::size_t, const Tensor<T>&);       \
  template ReassembleGrads<T> reassemble_down_backward(const Tensor<T>&, const Tensor<T>&, \
                                                       std::size_t, const Tensor<T>&);     \
  template GateTrace<T> channel_gates_forward(const Tensor<T>&, const Tensor<T>&,          \
                                              const ChannelAttentionParams<T>&,            \
                                              GateActivation);                             \
  template ChannelGates<T> split_gates(const Tensor<T>&);                                  \
  template std::pair<Tensor<T>, Tensor<T>> channel_gates_backward(                         \
      const GateTrace<T>&, const ChannelAttentionParams<T>&, GateActivation,               \
      const Tensor<T>&, ChannelAttentionParams<T>&);                                       \
  template FusionTrace<T> fuse_topdown_forward(const Tensor<T>&, const Tensor<T>&,         \
                                               const FusionParams<T>&,                     \
                                               const FusionOptions&);                      \
  template FusionTrace<T> fuse_bottomup_forward(const Tensor<T>&, const Tensor<T>&,        \
                                                const FusionParams<T>&,                    \
                                                const FusionOptions&);                     \
  template FusionGrads<T> fuse_topdown_backward(const FusionTrace<T>&,                     \
                                                const FusionParams<T>&,                    \
                                                const FusionOptions&, const Tensor<T>&,    \
                                                FusionParams<T>&);                         \
  template FusionGrads<T> fuse_bottomup_backward(const FusionTrace<T>&,                    \
                                                 const FusionParams<T>&,                   \
                                                 const FusionOptions&, const Tensor<T>&,   \
                                                 FusionParams<T>&);                        \
  template Tensor<T> carafe_baseline(const Tensor<T>&, const Tensor<T>&,                   \
                                     const FusionParams<T>&);                              \
  template Tensor<T> cap_baseline(const Tensor<T>&, const Tensor<T>&, const FusionParams<T>&);

A2FPN_INSTANTIATE_FUSION(float)
A2FPN_INSTANTIATE_FUSION(double)

#undef A2FPN_INSTANTIATE_FUSION

}  // namespace a2fpn
