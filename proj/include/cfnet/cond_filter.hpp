// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "cfnet/layers.hpp"
#include "cfnet/params.hpp"
#include "cfnet/tensor.hpp"

namespace cfnet {

/// Conditional filter geometry: k×k windows, g channel groups over C channels.
struct CfbConfig {
  std::size_t k = 3;
  std::size_t g = 16;
  std::size_t channels = 16;

  /// Throws ConfigError unless k is odd and g divides channels.
  void validate() const;
  std::size_t group_size() const { return channels / g; }
  std::size_t taps() const { return k * k; }
};

/// Per-position kernels of logical shape (B, g, k², H, W). Stored as a
/// Tensor4 of shape (B, g·k², H, W), which has the same memory layout.
class KernelField {
 public:
  KernelField() = default;
  KernelField(Tensor4 values, std::size_t k, std::size_t groups);
  KernelField(std::size_t batch, std::size_t groups, std::size_t k, std::size_t h, std::size_t w);

  std::size_t batch() const { return values_.n(); }
  std::size_t groups() const { return groups_; }
  std::size_t k() const { return k_; }
  std::size_t taps() const { return k_ * k_; }
  std::size_t h() const { return values_.h(); }
  std::size_t w() const { return values_.w(); }

  Real& at(std::size_t b, std::size_t grp, std::size_t tap, std::size_t y, std::size_t x) {
    return values_(b, grp * taps() + tap, y, x);
  }
  Real at(std::size_t b, std::size_t grp, std::size_t tap, std::size_t y, std::size_t x) const {
    return values_(b, grp * taps() + tap, y, x);
  }

  const Tensor4& values() const { return values_; }
  Tensor4& values() { return values_; }

 private:
  Tensor4 values_;
  std::size_t k_ = 0;
  std::size_t groups_ = 0;
};

/// τ = μ ⊙ γ.
KernelField hadamard_kernels(const KernelField& mu, const KernelField& gamma);
/// Product rule: (grad ⊙ γ, grad ⊙ μ).
std::pair<KernelField, KernelField> hadamard_kernels_backward(const KernelField& grad_tau,
                                                              const KernelField& mu,
                                                              const KernelField& gamma);

/// Content-aware filtering: every output (b, c, p) is the zero-padded k×k
/// window of channel c around p, weighted by the kernel of group c / r at p.
/// Window taps are enumerated row-major.
Tensor4 conditional_conv(const Tensor4& features, const KernelField& tau, const CfbConfig& cfg);

struct ConditionalConvGrads {
  Tensor4 features;
  KernelField tau;
};
ConditionalConvGrads conditional_conv_backward(const Tensor4& grad_out, const Tensor4& features,
                                               const KernelField& tau, const CfbConfig& cfg);

/// Five-layer kernel generation subnetwork: two 3×3 convs at C, then 1×1
/// convs through a C/2 bottleneck to g·k² output channels. The last layer has
/// no activation so kernels can be signed.
class KernelGenerator {
 public:
  KernelGenerator() = default;
  KernelGenerator(ParamStore& store, const std::string& prefix, std::size_t in_channels,
                  const CfbConfig& cfg, std::uint64_t seed);

  KernelField forward(const Tensor4& features, ConvStack::Cache* cache) const;
  Tensor4 backward(const KernelField& grad, const ConvStack::Cache& cache) const;

  const ConvStack& stack() const { return stack_; }

 private:
  CfbConfig cfg_;
  std::size_t in_channels_ = 0;
  ConvStack stack_;
};

/// Conditional filter block: kernels from the image and noise streams are
/// combined by Hadamard product, applied to the image features, refined by
/// two 3×3 convolutions and added back to the input.
class ConditionalFilterBlock {
 public:
  struct Cache {
    ConvStack::Cache image_gen;
    ConvStack::Cache noise_gen;
    KernelField mu;
    KernelField gamma;
    KernelField tau;
    Tensor4 image;
    ConvStack::Cache tail;
  };
  struct Grads {
    Tensor4 image;
    Tensor4 noise;
  };

  ConditionalFilterBlock() = default;
  /// The second tail conv is zero-initialised, so a fresh block is the
  /// identity on the image stream.
  ConditionalFilterBlock(ParamStore& store, const std::string& prefix, const CfbConfig& cfg,
                         std::size_t noise_channels, std::uint64_t seed);

  Tensor4 forward(const Tensor4& image, const Tensor4& noise, Cache* cache) const;
  Grads backward(const Tensor4& grad_out, const Cache& cache) const;

  /// τ for the given inputs (used for kernel export).
  KernelField kernels(const Tensor4& image, const Tensor4& noise) const;

  const CfbConfig& config() const { return cfg_; }
  const KernelGenerator& image_generator() const { return image_gen_; }
  const KernelGenerator& noise_generator() const { return noise_gen_; }
  const ConvStack& tail() const { return tail_; }

 private:
  CfbConfig cfg_;
  std::size_t noise_channels_ = 0;
  KernelGenerator image_gen_;
  KernelGenerator noise_gen_;
  ConvStack tail_;
};

}  // namespace cfnet
