// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "a2fpn/init.hpp"
#include "a2fpn/tensor.hpp"

namespace a2fpn {

/// Square-kernel 2-D convolution (cross-correlation, zero padding).
template <typename T>
struct ConvParams {
  Tensor<T> weight;  // out_ch x in_ch x k x k
  Tensor<T> bias;    // out_ch, or empty
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
  bool has_bias() const { return !bias.empty(); }
  std::size_t output_extent(std::size_t in) const {
    return (in + 2 * padding - kernel()) / stride + 1;
  }
};

/// Kaiming-initialized conv with "same" padding (k - 1) / 2 and zero bias.
template <typename T>
ConvParams<T> make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                        std::size_t stride, bool bias, Rng& rng,
                        double gain = 1.0);

/// Gradient buffer with the same layout as `p`, all zeros.
template <typename T>
ConvParams<T> zeros_like(const ConvParams<T>& p) {
  return {Tensor<T>::zeros_like(p.weight), Tensor<T>::zeros_like(p.bias),
          p.stride, p.padding};
}

template <typename T>
Tensor<T> conv2d(const ConvParams<T>& p, const Tensor<T>& x);

/// Returns dL/dx and accumulates dL/dweight, dL/dbias into `grad`.
template <typename T>
Tensor<T> conv2d_backward(const ConvParams<T>& p, const Tensor<T>& x,
                          const Tensor<T>& dout, ConvParams<T>& grad);

/// 2x2 / stride-2 max pooling. `argmax` holds the flat input index that
/// produced each output (first maximum in row-major window order).
template <typename T>
struct MaxPoolResult {
  Tensor<T> out;
  std::vector<std::size_t> argmax;
};

template <typename T>
MaxPoolResult<T> max_pool2d(const Tensor<T>& x);

template <typename T>
Tensor<T> max_pool2d_backward(const Shape& input_shape,
                              const std::vector<std::size_t>& argmax,
                              const Tensor<T>& dout);

/// Bilinear resize by an integer factor with half-pixel centers:
/// src = (dst + 0.5) / s - 0.5, clamped to the valid range.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::size_t s);

template <typename T>
Tensor<T> bilinear_upsample_backward(const Shape& input_shape,
                                     const Tensor<T>& dout, std::size_t s);

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, std::size_t s);

template <typename T>
Tensor<T> nearest_upsample_backward(const Shape& input_shape,
                                    const Tensor<T>& dout, std::size_t s);

/// out[g, s*y + dy, s*x + dx] = in[g*s*s + dy*s + dx, y, x]
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t s);

/// Inverse of pixel_shuffle; also its backward.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t s);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Splits off the first `c1` channels; also the backward of concat_channels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t,
                                               std::size_t c1);

/// out[c, y, x] = x[c, y, x] * gate[c]
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& gate);

template <typename T>
struct ScaleChannelsGrads {
  Tensor<T> dx;
  Tensor<T> dgate;
};

template <typename T>
ScaleChannelsGrads<T> scale_channels_backward(const Tensor<T>& x,
                                              const Tensor<T>& gate,
                                              const Tensor<T>& dout);

}  // namespace a2fpn
