// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/noise_synth.hpp"

#include <algorithm>
#include <cmath>

#include "cfnet/errors.hpp"
#include "cfnet/random.hpp"

namespace cfnet {

void NoiseParams::validate() const {
  if (sigma_d < 0.0 || sigma_s < 0.0 || awgn_sigma < 0.0 || awgn_sigma > 1.0) {
    throw ParameterError("noise parameters out of range");
  }
}

void IspConfig::validate() const {
  if (!(gamma >= 1.0 && gamma <= 4.0)) throw ParameterError("isp gamma must lie in [1, 4]");
  if (quantize_bits != 0 && quantize_bits != 8 && quantize_bits != 16) {
    throw ParameterError("isp quantize_bits must be 0, 8 or 16");
  }
}

NoisyPair synth_awgn(const Tensor4& clean, Real sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ParameterError("awgn sigma must be non-negative");
  const Real s = sigma / 255.0;
  NoisyPair out{clean, Tensor4(clean.shape(), s)};
  if (s == 0.0) return out;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CounterRng rng(seed, i);
    out.noisy[i] = clean[i] + s * rng.normal();
  }
  return out;
}

NoisyPair add_hetero_noise(const Tensor4& irradiance, const NoiseParams& params,
                           std::uint64_t seed) {
  params.validate();
  const Real vd = params.sigma_d * params.sigma_d;
  const Real vs = params.sigma_s * params.sigma_s;
  NoisyPair out{irradiance, Tensor4(irradiance.shape())};
  for (std::size_t i = 0; i < irradiance.size(); ++i) {
    const Real L = irradiance[i];
    const Real sd = std::sqrt(std::max(L, 0.0) * vd + vs);
    out.sigma[i] = sd;
    if (sd > 0.0) {
      CounterRng rng(seed, i);
      out.noisy[i] = L + sd * rng.normal();
    }
  }
  return out;
}

namespace {

Tensor4 inverse_gamma(const Tensor4& srgb, Real gamma) {
  Tensor4 L(srgb.shape());
  for (std::size_t i = 0; i < srgb.size(); ++i) {
    L[i] = std::pow(std::clamp(srgb[i], 0.0, 1.0), gamma);
  }
  return L;
}

}  // namespace

Tensor4 hetero_sigma_map(const Tensor4& clean_srgb, const NoiseParams& params,
                         const IspConfig& isp) {
  isp.validate();
  params.validate();
  const Tensor4 L = inverse_gamma(clean_srgb, isp.gamma);
  Tensor4 sigma(L.shape());
  const Real vd = params.sigma_d * params.sigma_d;
  const Real vs = params.sigma_s * params.sigma_s;
  for (std::size_t i = 0; i < L.size(); ++i) sigma[i] = std::sqrt(L[i] * vd + vs);
  return sigma;
}

NoisyPair synth_hetero(const Tensor4& clean_srgb, const NoiseParams& params, const IspConfig& isp,
                       std::uint64_t seed) {
  isp.validate();
  params.validate();
  if (params.sigma_d == 0.0 && params.sigma_s == 0.0) {
    return {clean_srgb, Tensor4(clean_srgb.shape())};
  }
  NoisyPair lin = add_hetero_noise(inverse_gamma(clean_srgb, isp.gamma), params, seed);
  const Real inv = 1.0 / isp.gamma;
  const Real levels = isp.quantize_bits ? std::ldexp(1.0, isp.quantize_bits) - 1.0 : 0.0;
  for (auto& v : lin.noisy.values()) {
    if (isp.clip) v = std::clamp(v, 0.0, 1.0);
    v = std::copysign(std::pow(std::abs(v), inv), v);
    if (levels > 0.0) v = std::round(v * levels) / levels;
  }
  return lin;
}

Real sample_sigma_range(Real lo, Real hi, std::uint64_t seed) {
  if (!(lo >= 0.0) || lo > hi) throw ParameterError("sigma range requires 0 <= lo <= hi");
  if (lo == hi) return lo;
  CounterRng rng(seed, 0x5167);
  return rng.uniform(lo, hi);
}

}  // namespace cfnet
