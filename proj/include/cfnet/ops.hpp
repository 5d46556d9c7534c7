// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "cfnet/tensor.hpp"

namespace cfnet {

/// Geometry of a 2-D convolution. Transposed convolutions are stride-2,
/// 3×3, padding 1 with one row/column of output padding, so they exactly
/// double H and W.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool transposed = false;

  static ConvSpec conv3x3(std::size_t in, std::size_t out) { return {in, out, 3, 1, 1, false}; }
  static ConvSpec conv1x1(std::size_t in, std::size_t out) { return {in, out, 1, 1, 0, false}; }
  static ConvSpec up3x3(std::size_t in, std::size_t out) { return {in, out, 3, 2, 1, true}; }

  /// Throws ConfigError when the combination is not supported.
  void validate() const;
  Shape4 weight_shape() const { return {out_channels, in_channels, kernel_size, kernel_size}; }
  Shape4 output_shape(const Shape4& input) const;
  std::size_t fan_in() const { return in_channels * kernel_size * kernel_size; }
};

/// Zero-padded cross-correlation (or its stride-2 transpose). `weight` is
/// (out_channels, in_channels, k, k) in both modes; `bias` has out_channels
/// entries or is empty.
Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& weight, std::span<const Real> bias,
                       const ConvSpec& spec);

struct ConvGrads {
  Tensor4 input;  // empty when not requested
  Tensor4 weight;
  std::vector<Real> bias;
};

ConvGrads conv2d_backward(const Tensor4& grad_out, const Tensor4& saved_input,
                          const Tensor4& weight, const ConvSpec& spec,
                          bool need_input_grad = true);

/// 2×2 mean pooling with stride 2. Requires even H and W.
Tensor4 avg_pool2(const Tensor4& input);
Tensor4 avg_pool2_backward(const Tensor4& grad_out);

/// Nearest-neighbour ×2 upsampling (used by invariants and resampling).
Tensor4 upsample_nearest2(const Tensor4& input);

/// out = x for x >= 0, slope[c]·x otherwise.
Tensor4 prelu(const Tensor4& input, std::span<const Real> slope);

struct PreluGrads {
  Tensor4 input;
  std::vector<Real> slope;
};
PreluGrads prelu_backward(const Tensor4& grad_out, const Tensor4& saved_input,
                          std::span<const Real> slope);

Tensor4 sigmoid(const Tensor4& input);
Tensor4 sigmoid_backward(const Tensor4& grad_out, const Tensor4& saved_output);

/// log(1 + e^x), evaluated without overflow.
Tensor4 softplus(const Tensor4& input);
Tensor4 softplus_backward(const Tensor4& grad_out, const Tensor4& saved_input);

Tensor4 add(const Tensor4& a, const Tensor4& b);
Tensor4 sub(const Tensor4& a, const Tensor4& b);
Tensor4 mul(const Tensor4& a, const Tensor4& b);
/// Gradients of mul: (grad·b, grad·a).
std::pair<Tensor4, Tensor4> mul_backward(const Tensor4& grad_out, const Tensor4& a,
                                         const Tensor4& b);

/// Channel concatenation, `a` first.
Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);
/// Inverse of concat_channels: first `channels_a` channels, then the rest.
std::pair<Tensor4, Tensor4> split_channels(const Tensor4& t, std::size_t channels_a);

}  // namespace cfnet
