// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cfnet/ops.hpp"
#include "cfnet/params.hpp"

namespace cfnet {

enum class Init { kKaiming, kZero };

inline constexpr Real kRectifierGain = 1.4142135623730951;

/// Stable 64-bit FNV-1a, used to derive per-parameter init seeds from names.
std::uint64_t name_hash(std::string_view s);

/// Convolution bound to weight/bias entries of a ParamStore. Backward
/// accumulates into the entries' gradients.
class Conv2d {
 public:
  Conv2d() = default;
  /// Kaiming weights use std = gain / sqrt(fan_in): sqrt(2) ahead of a
  /// rectifier, 1 for a linear output.
  Conv2d(ParamStore& store, const std::string& name, ConvSpec spec, Init init,
         std::uint64_t seed, Real gain = kRectifierGain);

  /// Registers aliases `name.w` / `name.b` for the parameters of `source`.
  static Conv2d shared(ParamStore& store, const std::string& name, const Conv2d& source);

  Tensor4 forward(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& grad_out, const Tensor4& saved_input,
                   bool need_input_grad = true) const;

  const ConvSpec& spec() const { return spec_; }
  const std::string& name() const { return name_; }
  Param& weight() const { return *weight_; }
  Param& bias() const { return *bias_; }

 private:
  std::string name_;
  ConvSpec spec_;
  Param* weight_ = nullptr;
  Param* bias_ = nullptr;
};

/// Per-channel learnable PReLU, slope initialised to 0.25.
class PRelu {
 public:
  PRelu() = default;
  PRelu(ParamStore& store, const std::string& name, std::size_t channels);
  static PRelu shared(ParamStore& store, const std::string& name, const PRelu& source);

  Tensor4 forward(const Tensor4& x) const;
  Tensor4 backward(const Tensor4& grad_out, const Tensor4& saved_input) const;

  const std::string& name() const { return name_; }
  Param& slope() const { return *slope_; }

 private:
  std::string name_;
  Param* slope_ = nullptr;
};

struct LayerPlan {
  ConvSpec spec;
  bool activation = true;  // PReLU after the conv
  Init init = Init::kKaiming;
  Real gain = 0.0;  // 0: kRectifierGain before a PReLU, 1 otherwise
};

/// A chain of convolutions with optional PReLU after each.
class ConvStack {
 public:
  struct Cache {
    std::vector<Tensor4> conv_in;
    std::vector<Tensor4> act_in;
  };

  ConvStack() = default;
  ConvStack(ParamStore& store, const std::string& prefix, const std::vector<LayerPlan>& plan,
            std::uint64_t seed);
  static ConvStack shared(ParamStore& store, const std::string& prefix, const ConvStack& source);

  /// `cache` may be null for inference.
  Tensor4 forward(const Tensor4& x, Cache* cache) const;
  Tensor4 backward(const Tensor4& grad_out, const Cache& cache,
                   bool need_input_grad = true) const;

  std::size_t depth() const { return convs_.size(); }
  const Conv2d& conv(std::size_t i) const { return convs_[i]; }
  std::size_t out_channels() const { return convs_.back().spec().out_channels; }

 private:
  std::vector<Conv2d> convs_;
  std::vector<PRelu> acts_;  // acts_[i] valid iff has_act_[i]
  std::vector<bool> has_act_;
};

}  // namespace cfnet
