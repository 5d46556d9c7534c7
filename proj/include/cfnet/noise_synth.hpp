// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "cfnet/tensor.hpp"

namespace cfnet {

enum class NoiseMode { kAwgn, kHetero };

/// Heteroscedastic model: per-pixel variance L·sigma_d² + sigma_s² in linear
/// irradiance units. `awgn_sigma` is in [0,1]-normalised intensity units.
struct NoiseParams {
  Real sigma_d = 0.0;
  Real sigma_s = 0.0;
  Real awgn_sigma = 0.0;
  NoiseMode mode = NoiseMode::kHetero;

  void validate() const;
};

/// Simplified camera pipeline: gamma curve, clipping, optional quantisation.
struct IspConfig {
  Real gamma = 2.2;
  int quantize_bits = 0;  // 0 (off), 8 or 16
  bool clip = true;

  void validate() const;
};

struct NoisyPair {
  Tensor4 noisy;
  Tensor4 sigma;  // per-pixel noise standard deviation
};

/// clean + N(0, (sigma/255)²) i.i.d., not clipped. `sigma` is on the 0–255
/// scale; the sigma map holds sigma/255.
NoisyPair synth_awgn(const Tensor4& clean, Real sigma, std::uint64_t seed);

/// Linear-domain step of the heteroscedastic model: returns L + n with
/// n ~ N(0, L·sigma_d² + sigma_s²) and the per-pixel std. No clipping.
NoisyPair add_hetero_noise(const Tensor4& irradiance, const NoiseParams& params,
                           std::uint64_t seed);

/// Full synthesis: L = clean^gamma, add heteroscedastic noise in the linear
/// domain, then clip, re-apply gamma and quantise. The sigma map is the
/// linear-domain std sqrt(L·sigma_d² + sigma_s²).
NoisyPair synth_hetero(const Tensor4& clean_srgb, const NoiseParams& params, const IspConfig& isp,
                       std::uint64_t seed);

/// Linear-domain std map of the heteroscedastic model for a clean image;
/// independent of any noise seed.
Tensor4 hetero_sigma_map(const Tensor4& clean_srgb, const NoiseParams& params,
                         const IspConfig& isp);

/// Uniform draw in [lo, hi], deterministic per seed.
Real sample_sigma_range(Real lo, Real hi, std::uint64_t seed);

}  // namespace cfnet
