// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Forward and backward kernels over NCHW tensors. All functions are pure:
// identical inputs give bitwise-identical outputs and no state is kept.

#ifndef FINSIGHT_KERNELS_HPP_
#define FINSIGHT_KERNELS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "finsight/tensor.hpp"

namespace finsight {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  bool has_bias = true;

  // k x k convolution that keeps the spatial size at stride 1.
  static ConvSpec same(std::size_t in, std::size_t out, std::size_t k,
                       std::size_t dilation = 1, std::size_t groups = 1,
                       bool bias = true);
  static ConvSpec pointwise(std::size_t in, std::size_t out, bool bias = true);

  // Throws ConfigError on zero fields, DivisibilityError on bad groups.
  void validate() const;
  // floor((in + 2p - d(k-1) - 1)/s) + 1; GeometryError when below one.
  std::size_t out_extent(std::size_t in, std::size_t k) const;
  Shape output_shape(const Shape& in) const;
  Shape weight_shape() const;
  std::size_t param_count() const;
  // Multiply-accumulates for one batch element producing out_h x out_w.
  std::uint64_t macs(std::size_t out_h, std::size_t out_w) const;
  bool operator==(const ConvSpec&) const = default;
};

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weights,
              std::span<const double> bias);

struct ConvGrads {
  Tensor grad_x;
  Tensor grad_w;
  std::vector<double> grad_b;
};

ConvGrads conv2d_backward(const Tensor& x, const ConvSpec& spec,
                          const Tensor& weights, const Tensor& grad_out);

/// Depthwise k x k stage (groups == channels) followed by a 1x1 pointwise
/// stage. Both stages use same-padding at stride 1.
struct SeparableSpec {
  std::size_t channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  bool has_bias = true;

  ConvSpec depthwise() const;
  ConvSpec pointwise() const;
  std::size_t param_count() const;
};

Tensor depthwise_separable(const Tensor& x, const SeparableSpec& spec,
                           const Tensor& dw_weights,
                           std::span<const double> dw_bias,
                           const Tensor& pw_weights,
                           std::span<const double> pw_bias);

// Global average pooling: N x C x H x W -> N x C x 1 x 1.
Tensor gap(const Tensor& x);
Tensor gap_backward(const Shape& input_shape, const Tensor& grad_out);

// Max-subtracted softmax. Throws ValueError on non-finite input.
std::vector<double> softmax(std::span<const double> v);

// Contiguous channel blocks; DivisibilityError when C % parts != 0.
std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts);
Tensor concat_channels(std::span<const Tensor> parts);

Tensor upsample_nearest(const Tensor& x, std::size_t factor);
Tensor upsample_nearest_backward(const Tensor& grad_out, std::size_t factor);

double sigmoid(double v);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);

Tensor add(const Tensor& a, const Tensor& b);

// y[n,c] = x[n,c] * scale[c] + shift[c]
Tensor scale_shift(const Tensor& x, std::span<const double> scale,
                   std::span<const double> shift);

// y[n,c,:,:] = x[n,c,:,:] * gate[n,c]; gate is N x C x 1 x 1.
Tensor channel_scale(const Tensor& x, const Tensor& gate);

struct ChannelScaleGrads {
  Tensor grad_x;
  Tensor grad_gate;
};
ChannelScaleGrads channel_scale_backward(const Tensor& x, const Tensor& gate,
                                         const Tensor& grad_out);

}  // namespace finsight

#endif  // FINSIGHT_KERNELS_HPP_
