// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/nn_ops.hpp"

#include "a2fpn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace a2fpn {

namespace {

void require_chw(const Shape& s, const char* what) {
  if (s.size() != 3) {
    throw DimensionError(std::string(what) + ": expected c x h x w, got " +
                         shape_to_string(s));
  }
}

// Output columns whose input tap ox*stride + tap - pad lands in [0, in).
struct TapRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

TapRange valid_outputs(std::size_t in, std::size_t out, std::size_t stride,
                       std::size_t tap, std::size_t pad) {
  // Need ox*stride + tap >= pad and ox*stride + tap - pad <= in - 1.
  std::size_t begin = 0;
  if (tap < pad) begin = (pad - tap + stride - 1) / stride;
  if (in + pad < tap + 1) return {0, 0};
  std::size_t end = (in - 1 + pad - tap) / stride + 1;
  end = std::min(end, out);
  if (begin >= end) return {0, 0};
  return {begin, end};
}

}  // namespace

template <typename T>
ConvParams<T> make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                        std::size_t stride, bool bias, Rng& rng, double gain) {
  ConvParams<T> p;
  p.weight = kaiming_normal<T>({out_ch, in_ch, k, k}, in_ch * k * k, rng, gain);
  if (bias) p.bias = Tensor<T>({out_ch});
  p.stride = stride;
  p.padding = (k - 1) / 2;
  return p;
}

template <typename T>
Tensor<T> conv2d(const ConvParams<T>& p, const Tensor<T>& x) {
  require_chw(x.shape(), "conv2d");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = p.out_channels(), k = p.kernel();
  if (p.in_channels() != cin) {
    throw DimensionError("conv2d: weight expects " + std::to_string(p.in_channels()) +
                         " input channels, got " + shape_to_string(x.shape()));
  }
  if (h + 2 * p.padding < k || w + 2 * p.padding < k || p.stride == 0) {
    throw DimensionError("conv2d: input " + shape_to_string(x.shape()) +
                         " too small for kernel " + std::to_string(k));
  }
  const std::size_t ho = p.output_extent(h), wo = p.output_extent(w);
  Tensor<T> out({cout, ho, wo});
  const T* in = x.data().data();
  const T* wt = p.weight.data().data();
  T* po = out.data().data();
  const std::size_t s = p.stride;

  std::vector<TapRange> row_range(k), col_range(k);
  for (std::size_t t = 0; t < k; ++t) {
    row_range[t] = valid_outputs(h, ho, s, t, p.padding);
    col_range[t] = valid_outputs(w, wo, s, t, p.padding);
  }

  for (std::size_t oc = 0; oc < cout; ++oc) {
    T* plane = po + oc * ho * wo;
    if (p.has_bias()) std::fill(plane, plane + ho * wo, p.bias[oc]);
    for (std::size_t ic = 0; ic < cin; ++ic) {
      const T* src = in + ic * h * w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const TapRange rr = row_range[ky];
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T wv = wt[((oc * cin + ic) * k + ky) * k + kx];
          const TapRange cr = col_range[kx];
          for (std::size_t oy = rr.begin; oy < rr.end; ++oy) {
            const std::size_t iy = oy * s + ky - p.padding;
            const T* srow = src + iy * w;
            T* orow = plane + oy * wo;
            if (s == 1) {
              const T* shifted = srow + (cr.begin + kx - p.padding);
              for (std::size_t ox = cr.begin; ox < cr.end; ++ox)
                orow[ox] += wv * shifted[ox - cr.begin];
            } else {
              for (std::size_t ox = cr.begin; ox < cr.end; ++ox)
                orow[ox] += wv * srow[ox * s + kx - p.padding];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_backward(const ConvParams<T>& p, const Tensor<T>& x,
                          const Tensor<T>& dout, ConvParams<T>& grad) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = p.out_channels(), k = p.kernel();
  const std::size_t ho = p.output_extent(h), wo = p.output_extent(w);
  if (dout.shape() != Shape{cout, ho, wo}) {
    throw DimensionError("conv2d_backward: upstream gradient " +
                         shape_to_string(dout.shape()));
  }
  Tensor<T> dx(x.shape());
  const T* in = x.data().data();
  const T* wt = p.weight.data().data();
  const T* pd = dout.data().data();
  T* pdx = dx.data().data();
  T* pdw = grad.weight.data().data();
  const std::size_t s = p.stride;

  std::vector<TapRange> row_range(k), col_range(k);
  for (std::size_t t = 0; t < k; ++t) {
    row_range[t] = valid_outputs(h, ho, s, t, p.padding);
    col_range[t] = valid_outputs(w, wo, s, t, p.padding);
  }

  for (std::size_t oc = 0; oc < cout; ++oc) {
    const T* gplane = pd + oc * ho * wo;
    if (p.has_bias()) {
      T acc{0};
      for (std::size_t i = 0; i < ho * wo; ++i) acc += gplane[i];
      grad.bias[oc] += acc;
    }
    for (std::size_t ic = 0; ic < cin; ++ic) {
      const T* src = in + ic * h * w;
      T* dsrc = pdx + ic * h * w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const TapRange rr = row_range[ky];
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::size_t widx = ((oc * cin + ic) * k + ky) * k + kx;
          const T wv = wt[widx];
          const TapRange cr = col_range[kx];
          // Four fixed partial sums keep the reduction order deterministic
          // while letting the compiler pipeline it.
          T wacc[4] = {T{0}, T{0}, T{0}, T{0}};
          for (std::size_t oy = rr.begin; oy < rr.end; ++oy) {
            const std::size_t iy = oy * s + ky - p.padding;
            const std::size_t off = iy * w + kx - p.padding;
            const T* grow = gplane + oy * wo;
            if (s == 1) {
              const std::size_t n = cr.end - cr.begin;
              const std::size_t first = iy * w + cr.begin + kx - p.padding;
              const T* __restrict xs = src + first;
              T* __restrict ds = dsrc + first;
              const T* __restrict gs = grow + cr.begin;
              for (std::size_t j = 0; j < n; ++j) ds[j] += wv * gs[j];
              std::size_t j = 0;
              for (; j + 4 <= n; j += 4) {
                wacc[0] += gs[j] * xs[j];
                wacc[1] += gs[j + 1] * xs[j + 1];
                wacc[2] += gs[j + 2] * xs[j + 2];
                wacc[3] += gs[j + 3] * xs[j + 3];
              }
              for (; j < n; ++j) wacc[0] += gs[j] * xs[j];
            } else {
              for (std::size_t ox = cr.begin; ox < cr.end; ++ox) {
                const T g = grow[ox];
                wacc[0] += g * src[off + ox * s];
                dsrc[off + ox * s] += wv * g;
              }
            }
          }
          const T wsum = (wacc[0] + wacc[1]) + (wacc[2] + wacc[3]);
          pdw[widx] += wsum;
        }
      }
    }
  }
  return dx;
}

template <typename T>
MaxPoolResult<T> max_pool2d(const Tensor<T>& x) {
  require_chw(x.shape(), "max_pool2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) {
    throw DimensionError("max_pool2d: extents must be even, got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t ho = h / 2, wo = w / 2;
  MaxPoolResult<T> r{Tensor<T>({c, ho, wo}), std::vector<std::size_t>(c * ho * wo)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (ch * h + 2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (ch * ho + oy) * wo + ox;
        r.out[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  if (BranchRecorder* rec = BranchRecorder::active()) {
    for (std::size_t idx : r.argmax) rec->record(idx);
  }
  return r;
}

template <typename T>
Tensor<T> max_pool2d_backward(const Shape& input_shape,
                              const std::vector<std::size_t>& argmax,
                              const Tensor<T>& dout) {
  if (argmax.size() != dout.size()) {
    throw DimensionError("max_pool2d_backward: index/gradient size mismatch");
  }
  Tensor<T> dx(input_shape);
  for (std::size_t o = 0; o < dout.size(); ++o) dx[argmax[o]] += dout[o];
  return dx;
}

namespace {

// Source taps and weights along one axis for half-pixel bilinear resizing.
struct LerpTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double w_lo = 1.0;
  double w_hi = 0.0;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t s) {
  std::vector<LerpTap> taps(in * s);
  for (std::size_t o = 0; o < in * s; ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(s) - 0.5;
    src = std::max(src, 0.0);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    const double frac = src - static_cast<double>(lo);
    taps[o] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::size_t s) {
  require_chw(x.shape(), "bilinear_upsample");
  if (s == 0) throw DimensionError("bilinear_upsample: scale must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto ty = lerp_taps(h, s);
  const auto tx = lerp_taps(w, s);
  Tensor<T> out({c, h * s, w * s});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < h * s; ++oy) {
      const LerpTap& a = ty[oy];
      const auto wy0 = static_cast<T>(a.w_lo), wy1 = static_cast<T>(a.w_hi);
      for (std::size_t ox = 0; ox < w * s; ++ox) {
        const LerpTap& b = tx[ox];
        const auto wx0 = static_cast<T>(b.w_lo), wx1 = static_cast<T>(b.w_hi);
        out(ch, oy, ox) = wy0 * (wx0 * x(ch, a.lo, b.lo) + wx1 * x(ch, a.lo, b.hi)) +
                          wy1 * (wx0 * x(ch, a.hi, b.lo) + wx1 * x(ch, a.hi, b.hi));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Shape& input_shape,
                                     const Tensor<T>& dout, std::size_t s) {
  require_chw(input_shape, "bilinear_upsample_backward");
  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  if (dout.shape() != Shape{c, h * s, w * s}) {
    throw DimensionError("bilinear_upsample_backward: upstream gradient " +
                         shape_to_string(dout.shape()));
  }
  const auto ty = lerp_taps(h, s);
  const auto tx = lerp_taps(w, s);
  Tensor<T> dx(input_shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < h * s; ++oy) {
      const LerpTap& a = ty[oy];
      const auto wy0 = static_cast<T>(a.w_lo), wy1 = static_cast<T>(a.w_hi);
      for (std::size_t ox = 0; ox < w * s; ++ox) {
        const LerpTap& b = tx[ox];
        const auto wx0 = static_cast<T>(b.w_lo), wx1 = static_cast<T>(b.w_hi);
        const T g = dout(ch, oy, ox);
        dx(ch, a.lo, b.lo) += wy0 * wx0 * g;
        dx(ch, a.lo, b.hi) += wy0 * wx1 * g;
        dx(ch, a.hi, b.lo) += wy1 * wx0 * g;
        dx(ch, a.hi, b.hi) += wy1 * wx1 * g;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, std::size_t s) {
  require_chw(x.shape(), "nearest_upsample");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<T> out({c, h * s, w * s});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < h * s; ++oy)
      for (std::size_t ox = 0; ox < w * s; ++ox) out(ch, oy, ox) = x(ch, oy / s, ox / s);
  return out;
}

template <typename T>
Tensor<T> nearest_upsample_backward(const Shape& input_shape,
                                    const Tensor<T>& dout, std::size_t s) {
  require_chw(input_shape, "nearest_upsample_backward");
  const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  if (dout.shape() != Shape{c, h * s, w * s}) {
    throw DimensionError("nearest_upsample_backward: upstream gradient " +
                         shape_to_string(dout.shape()));
  }
  Tensor<T> dx(input_shape);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < h * s; ++oy)
      for (std::size_t ox = 0; ox < w * s; ++ox) dx(ch, oy / s, ox / s) += dout(ch, oy, ox);
  return dx;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t s) {
  require_chw(x.shape(), "pixel_shuffle");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (s == 0 || c % (s * s)) {
    throw DimensionError("pixel_shuffle: " + std::to_string(c) +
                         " channels not divisible by " + std::to_string(s * s));
  }
  const std::size_t q = c / (s * s);
  Tensor<T> out({q, h * s, w * s});
  for (std::size_t g = 0; g < q; ++g)
    for (std::size_t dy = 0; dy < s; ++dy)
      for (std::size_t dx = 0; dx < s; ++dx)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            out(g, s * y + dy, s * xx + dx) = x(g * s * s + dy * s + dx, y, xx);
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t s) {
  require_chw(x.shape(), "pixel_unshuffle");
  const std::size_t q = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (s == 0 || H % s || W % s) {
    throw DimensionError("pixel_unshuffle: extents " + shape_to_string(x.shape()) +
                         " not divisible by " + std::to_string(s));
  }
  const std::size_t h = H / s, w = W / s;
  Tensor<T> out({q * s * s, h, w});
  for (std::size_t g = 0; g < q; ++g)
    for (std::size_t dy = 0; dy < s; ++dy)
      for (std::size_t dx = 0; dx < s; ++dx)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            out(g * s * s + dy * s + dx, y, xx) = x(g, s * y + dy, s * xx + dx);
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_chw(a.shape(), "concat_channels");
  require_chw(b.shape(), "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw DimensionError("concat_channels: spatial mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  Tensor<T> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, std::size_t c1) {
  require_chw(t.shape(), "split_channels");
  if (c1 > t.dim(0)) {
    throw DimensionError("split_channels: cannot take " + std::to_string(c1) +
                         " channels from " + shape_to_string(t.shape()));
  }
  const std::size_t plane = t.dim(1) * t.dim(2);
  Tensor<T> a({c1, t.dim(1), t.dim(2)});
  Tensor<T> b({t.dim(0) - c1, t.dim(1), t.dim(2)});
  const auto mid = t.data().begin() + static_cast<std::ptrdiff_t>(c1 * plane);
  std::copy(t.data().begin(), mid, a.data().begin());
  std::copy(mid, t.data().end(), b.data().begin());
  return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& gate) {
  require_chw(x.shape(), "scale_channels");
  if (gate.size() != x.dim(0)) {
    throw DimensionError("scale_channels: gate of " + std::to_string(gate.size()) +
                         " for " + shape_to_string(x.shape()));
  }
  const std::size_t plane = x.dim(1) * x.dim(2);
  Tensor<T> out(x.shape());
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = x[c * plane + i] * gate[c];
  return out;
}

template <typename T>
ScaleChannelsGrads<T> scale_channels_backward(const Tensor<T>& x,
                                              const Tensor<T>& gate,
                                              const Tensor<T>& dout) {
  const std::size_t plane = x.dim(1) * x.dim(2);
  ScaleChannelsGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(gate.shape())};
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    T acc{0};
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = c * plane + i;
      g.dx[idx] = dout[idx] * gate[c];
      acc += dout[idx] * x[idx];
    }
    g.dgate[c] = acc;
  }
  return g;
}

#define A2FPN_INSTANTIATE_NN(T)                                                       \
  template ConvParams<T> make_conv(std::size_t, std::size_t, std::size_t,             \
                                   std::size_t, bool, Rng&, double);                  \
  template Tensor<T> conv2d(const ConvParams<T>&, const Tensor<T>&);                  \
  template Tensor<T> conv2d_backward(const ConvParams<T>&, const Tensor<T>&,          \
                                     const Tensor<T>&, ConvParams<T>&);               \
  template MaxPoolResult<T> max_pool2d(const Tensor<T>&);                             \
  template Tensor<T> max_pool2d_backward(const Shape&,                                \
                                         const std::vector<std::size_t>&,             \
                                         const Tensor<T>&);                           \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, std::size_t);                \
  template Tensor<T> bilinear_upsample_backward(const Shape&, const Tensor<T>&,       \
                                                std::size_t);                         \
  template Tensor<T> nearest_upsample(const Tensor<T>&, std::size_t);                 \
  template Tensor<T> nearest_upsample_backward(const Shape&, const Tensor<T>&,        \
                                               std::size_t);                          \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, std::size_t);                    \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::size_t);                  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);             \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&,           \
                                                          std::size_t);               \
  template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);              \
  template ScaleChannelsGrads<T> scale_channels_backward(                             \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

A2FPN_INSTANTIATE_NN(float)
A2FPN_INSTANTIATE_NN(double)

#undef A2FPN_INSTANTIATE_NN

}  // namespace a2fpn
