// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/cond_filter.hpp"

#include <cmath>

#include <algorithm>

#include "cfnet/errors.hpp"

namespace cfnet {

void CfbConfig::validate() const {
  if (k == 0 || k % 2 == 0) throw ConfigError("conditional filter: k must be odd, got " + std::to_string(k));
  if (g == 0 || channels == 0 || channels % g != 0) {
    throw ConfigError("conditional filter: g = " + std::to_string(g) + " does not divide C = " +
                      std::to_string(channels));
  }
}

KernelField::KernelField(Tensor4 values, std::size_t k, std::size_t groups)
    : values_(std::move(values)), k_(k), groups_(groups) {
  if (values_.c() != groups * k * k) {
    throw ShapeError("kernel field: " + std::to_string(values_.c()) +
                     " channels, expected g*k^2 = " + std::to_string(groups * k * k));
  }
}

KernelField::KernelField(std::size_t batch, std::size_t groups, std::size_t k, std::size_t h,
                         std::size_t w)
    : values_(batch, groups * k * k, h, w), k_(k), groups_(groups) {}

namespace {

void require_same_field(const KernelField& a, const KernelField& b, const char* what) {
  if (a.k() != b.k() || a.groups() != b.groups()) {
    throw ShapeError(std::string(what) + ": kernel fields differ in k or g");
  }
  require_shape(b.values().shape(), a.values().shape(), what);
}

}  // namespace

KernelField hadamard_kernels(const KernelField& mu, const KernelField& gamma) {
  require_same_field(mu, gamma, "hadamard_kernels");
  return KernelField(mul(mu.values(), gamma.values()), mu.k(), mu.groups());
}

std::pair<KernelField, KernelField> hadamard_kernels_backward(const KernelField& grad_tau,
                                                              const KernelField& mu,
                                                              const KernelField& gamma) {
  require_same_field(mu, gamma, "hadamard_kernels_backward");
  require_same_field(mu, grad_tau, "hadamard_kernels_backward");
  auto [gm, gg] = mul_backward(grad_tau.values(), mu.values(), gamma.values());
  return {KernelField(std::move(gm), mu.k(), mu.groups()),
          KernelField(std::move(gg), mu.k(), mu.groups())};
}

namespace {

void check_filter_operands(const Tensor4& features, const KernelField& tau, const CfbConfig& cfg) {
  cfg.validate();
  if (features.c() != cfg.channels) {
    throw ConfigError("conditional_conv: features have " + std::to_string(features.c()) +
                      " channels, config expects " + std::to_string(cfg.channels));
  }
  if (tau.groups() != cfg.g || tau.k() != cfg.k) {
    throw ConfigError("conditional_conv: kernel field (g, k) does not match config");
  }
  if (tau.batch() != features.n() || tau.h() != features.h() || tau.w() != features.w()) {
    throw ShapeError("conditional_conv: kernel field " + to_string(tau.values().shape()) +
                     " vs features " + to_string(features.shape()));
  }
}

// Valid output range [lo, hi) along one axis for window offset d (centred).
struct Span1 {
  std::size_t lo, hi;
};
Span1 valid_range(std::size_t extent, long offset) {
  const long lo = std::max<long>(0, -offset);
  const long hi = std::min<long>(static_cast<long>(extent), static_cast<long>(extent) - offset);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Tensor4 conditional_conv(const Tensor4& features, const KernelField& tau, const CfbConfig& cfg) {
  check_filter_operands(features, tau, cfg);
  const std::size_t H = features.h(), W = features.w();
  const std::size_t r = cfg.group_size();
  const long half = static_cast<long>(cfg.k / 2);
  Tensor4 out(features.shape());
  for (std::size_t b = 0; b < features.n(); ++b) {
    for (std::size_t c = 0; c < features.c(); ++c) {
      const Real* f = features.plane(b, c);
      Real* o = out.plane(b, c);
      const std::size_t grp = c / r;
      for (std::size_t i = 0; i < cfg.taps(); ++i) {
        const long dy = static_cast<long>(i / cfg.k) - half;
        const long dx = static_cast<long>(i % cfg.k) - half;
        const Real* t = tau.values().plane(b, grp * cfg.taps() + i);
        const Span1 ys = valid_range(H, dy), xs = valid_range(W, dx);
        for (std::size_t y = ys.lo; y < ys.hi; ++y) {
          const Real* frow = f + static_cast<std::size_t>(static_cast<long>(y) + dy) * W;
          const Real* trow = t + y * W;
          Real* orow = o + y * W;
          for (std::size_t x = xs.lo; x < xs.hi; ++x) {
            orow[x] += trow[x] * frow[static_cast<long>(x) + dx];
          }
        }
      }
    }
  }
  return out;
}

ConditionalConvGrads conditional_conv_backward(const Tensor4& grad_out, const Tensor4& features,
                                               const KernelField& tau, const CfbConfig& cfg) {
  check_filter_operands(features, tau, cfg);
  require_shape(grad_out.shape(), features.shape(), "conditional_conv grad_out");
  const std::size_t H = features.h(), W = features.w();
  const std::size_t r = cfg.group_size();
  const long half = static_cast<long>(cfg.k / 2);
  ConditionalConvGrads g{Tensor4(features.shape()),
                         KernelField(features.n(), cfg.g, cfg.k, H, W)};
  for (std::size_t b = 0; b < features.n(); ++b) {
    for (std::size_t c = 0; c < features.c(); ++c) {
      const Real* f = features.plane(b, c);
      const Real* go = grad_out.plane(b, c);
      Real* gf = g.features.plane(b, c);
      const std::size_t grp = c / r;
      for (std::size_t i = 0; i < cfg.taps(); ++i) {
        const long dy = static_cast<long>(i / cfg.k) - half;
        const long dx = static_cast<long>(i % cfg.k) - half;
        const Real* t = tau.values().plane(b, grp * cfg.taps() + i);
        Real* gt = g.tau.values().plane(b, grp * cfg.taps() + i);
        const Span1 ys = valid_range(H, dy), xs = valid_range(W, dx);
        for (std::size_t y = ys.lo; y < ys.hi; ++y) {
          const std::size_t src = static_cast<std::size_t>(static_cast<long>(y) + dy) * W;
          const Real* frow = f + src;
          Real* gfrow = gf + src;
          const Real* trow = t + y * W;
          const Real* grow = go + y * W;
          Real* gtrow = gt + y * W;
          for (std::size_t x = xs.lo; x < xs.hi; ++x) {
            const long q = static_cast<long>(x) + dx;
            gfrow[q] += trow[x] * grow[x];
            gtrow[x] += frow[q] * grow[x];
          }
        }
      }
    }
  }
  return g;
}

KernelGenerator::KernelGenerator(ParamStore& store, const std::string& prefix,
                                 std::size_t in_channels, const CfbConfig& cfg,
                                 std::uint64_t seed)
    : cfg_(cfg), in_channels_(in_channels) {
  cfg_.validate();
  const std::size_t C = cfg.channels;
  const std::size_t half = std::max<std::size_t>(1, C / 2);
  const std::vector<LayerPlan> plan = {
      {ConvSpec::conv3x3(in_channels, C), true},
      {ConvSpec::conv3x3(C, C), true},
      {ConvSpec::conv1x1(C, half), true},
      {ConvSpec::conv1x1(half, half), true},
      // Scaled so that μ ⊙ γ starts with roughly unit filter gain.
      {ConvSpec::conv1x1(half, cfg.g * cfg.taps()), false, Init::kKaiming,
       1.0 / std::sqrt(static_cast<Real>(cfg.k))},
  };
  stack_ = ConvStack(store, prefix, plan, seed);
}

KernelField KernelGenerator::forward(const Tensor4& features, ConvStack::Cache* cache) const {
  if (features.c() != in_channels_) {
    throw ShapeError("kernel generator: expected " + std::to_string(in_channels_) +
                     " input channels, got " + std::to_string(features.c()));
  }
  return KernelField(stack_.forward(features, cache), cfg_.k, cfg_.g);
}

Tensor4 KernelGenerator::backward(const KernelField& grad, const ConvStack::Cache& cache) const {
  return stack_.backward(grad.values(), cache);
}

ConditionalFilterBlock::ConditionalFilterBlock(ParamStore& store, const std::string& prefix,
                                               const CfbConfig& cfg, std::size_t noise_channels,
                                               std::uint64_t seed)
    : cfg_(cfg), noise_channels_(noise_channels) {
  cfg_.validate();
  image_gen_ = KernelGenerator(store, prefix + ".mu", cfg.channels, cfg, seed);
  noise_gen_ = KernelGenerator(store, prefix + ".gamma", noise_channels, cfg, seed);
  const std::size_t C = cfg.channels;
  tail_ = ConvStack(store, prefix + ".tail",
                    {{ConvSpec::conv3x3(C, C), true},
                     {ConvSpec::conv3x3(C, C), false, Init::kZero}},
                    seed);
}

Tensor4 ConditionalFilterBlock::forward(const Tensor4& image, const Tensor4& noise,
                                        Cache* cache) const {
  if (image.n() != noise.n() || image.h() != noise.h() || image.w() != noise.w()) {
    throw ShapeError("conditional filter block: image stream " + to_string(image.shape()) +
                     " vs noise stream " + to_string(noise.shape()));
  }
  KernelField mu = image_gen_.forward(image, cache ? &cache->image_gen : nullptr);
  KernelField gamma = noise_gen_.forward(noise, cache ? &cache->noise_gen : nullptr);
  KernelField tau = hadamard_kernels(mu, gamma);
  Tensor4 filtered = conditional_conv(image, tau, cfg_);
  Tensor4 out = add(image, tail_.forward(filtered, cache ? &cache->tail : nullptr));
  if (cache) {
    cache->mu = std::move(mu);
    cache->gamma = std::move(gamma);
    cache->tau = std::move(tau);
    cache->image = image;
  }
  return out;
}

ConditionalFilterBlock::Grads ConditionalFilterBlock::backward(const Tensor4& grad_out,
                                                               const Cache& cache) const {
  Tensor4 g_filtered = tail_.backward(grad_out, cache.tail);
  ConditionalConvGrads gc = conditional_conv_backward(g_filtered, cache.image, cache.tau, cfg_);
  auto [g_mu, g_gamma] = hadamard_kernels_backward(gc.tau, cache.mu, cache.gamma);
  Grads g;
  g.image = grad_out;
  g.image += gc.features;
  g.image += image_gen_.backward(g_mu, cache.image_gen);
  g.noise = noise_gen_.backward(g_gamma, cache.noise_gen);
  return g;
}

KernelField ConditionalFilterBlock::kernels(const Tensor4& image, const Tensor4& noise) const {
  return hadamard_kernels(image_gen_.forward(image, nullptr), noise_gen_.forward(noise, nullptr));
}

}  // namespace cfnet
