// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/noise_estimation.hpp"

#include <cmath>

#include "cfnet/errors.hpp"

namespace cfnet {

namespace {

constexpr std::size_t kPlainStackDepth = 10;
constexpr Real kSigmaPrior = 0.1;

}  // namespace

AffineTransformBlock::AffineTransformBlock(ParamStore& store, const std::string& prefix,
                                           std::size_t width, AffineMode mode,
                                           std::uint64_t seed)
    : width_(width), mode_(mode) {
  const ConvSpec pw = ConvSpec::conv1x1(width, width);
  if (mode == AffineMode::kAffine) {
    scale_ = ConvStack(store, prefix + ".scale", {{pw, true}, {pw, false}}, seed);
    translate_ = ConvStack(store, prefix + ".translate", {{pw, true}, {pw, false}}, seed);
  } else {
    std::vector<LayerPlan> plan(kPlainStackDepth, LayerPlan{pw, true});
    plan.back().activation = false;
    stack_ = ConvStack(store, prefix + ".stack", plan, seed);
  }
}

AffineTransformBlock AffineTransformBlock::shared(ParamStore& store, const std::string& prefix,
                                                  const AffineTransformBlock& source) {
  AffineTransformBlock a;
  a.width_ = source.width_;
  a.mode_ = source.mode_;
  if (source.mode_ == AffineMode::kAffine) {
    a.scale_ = ConvStack::shared(store, prefix + ".scale", source.scale_);
    a.translate_ = ConvStack::shared(store, prefix + ".translate", source.translate_);
  } else {
    a.stack_ = ConvStack::shared(store, prefix + ".stack", source.stack_);
  }
  return a;
}

Tensor4 AffineTransformBlock::forward(const Tensor4& x, Cache* cache) const {
  if (x.c() != width_) {
    throw ShapeError("affine transform block: expected " + std::to_string(width_) +
                     " channels, got " + std::to_string(x.c()));
  }
  if (mode_ == AffineMode::kConvStack) return stack_.forward(x, cache ? &cache->stack : nullptr);
  Tensor4 s = sigmoid(scale_.forward(x, cache ? &cache->scale : nullptr));
  Tensor4 t = translate_.forward(x, cache ? &cache->translate : nullptr);
  Tensor4 out = add(mul(s, x), t);
  if (cache) {
    cache->input = x;
    cache->scale_out = std::move(s);
  }
  return out;
}

Tensor4 AffineTransformBlock::backward(const Tensor4& grad_out, const Cache& cache) const {
  if (mode_ == AffineMode::kConvStack) return stack_.backward(grad_out, cache.stack);
  auto [g_scale, g_x] = mul_backward(grad_out, cache.scale_out, cache.input);
  Tensor4 gx = std::move(g_x);
  gx += scale_.backward(sigmoid_backward(g_scale, cache.scale_out), cache.scale);
  gx += translate_.backward(grad_out, cache.translate);
  return gx;
}

NoiseEstimationCore::NoiseEstimationCore(ParamStore& store, const std::string& prefix,
                                         std::size_t width, AffineMode mode, std::uint64_t seed)
    : width_(width) {
  first_ = AffineTransformBlock(store, prefix + ".atb1", width, mode, seed);
  second_ = AffineTransformBlock(store, prefix + ".atb2", width, mode, seed);
  fuse_ = ConvStack(store, prefix + ".fuse", {{ConvSpec::conv1x1(2 * width, width), true}}, seed);
}

NoiseEstimationCore NoiseEstimationCore::shared(ParamStore& store, const std::string& prefix,
                                                const NoiseEstimationCore& source) {
  NoiseEstimationCore c;
  c.width_ = source.width_;
  c.first_ = AffineTransformBlock::shared(store, prefix + ".atb1", source.first_);
  c.second_ = AffineTransformBlock::shared(store, prefix + ".atb2", source.second_);
  c.fuse_ = ConvStack::shared(store, prefix + ".fuse", source.fuse_);
  return c;
}

Tensor4 NoiseEstimationCore::forward(const Tensor4& x, Cache* cache) const {
  Tensor4 a = first_.forward(x, cache ? &cache->first : nullptr);
  Tensor4 b = second_.forward(x, cache ? &cache->second : nullptr);
  return fuse_.forward(concat_channels(a, b), cache ? &cache->fuse : nullptr);
}

Tensor4 NoiseEstimationCore::backward(const Tensor4& grad_out, const Cache& cache) const {
  auto [ga, gb] = split_channels(fuse_.backward(grad_out, cache.fuse), width_);
  Tensor4 gx = first_.backward(ga, cache.first);
  gx += second_.backward(gb, cache.second);
  return gx;
}

NoiseEstimationStage::NoiseEstimationStage(ParamStore& store, const std::string& prefix,
                                           const NemStageConfig& cfg, AffineMode mode,
                                           const NoiseEstimationCore* core_source,
                                           std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.in_channels > 0) {
    in_port_ = ConvStack(store, prefix + ".in_port",
                         {{ConvSpec::conv1x1(cfg.in_channels, cfg.width), false}}, seed);
    core_ = core_source ? NoiseEstimationCore::shared(store, prefix + ".core", *core_source)
                        : NoiseEstimationCore(store, prefix + ".core", cfg.width, mode, seed);
  }
  out_port_ = ConvStack(store, prefix + ".out_port",
                        {{ConvSpec::conv1x1(cfg.width, cfg.out_channels), false}}, seed);
  if (cfg.sigma_channels > 0) {
    // Start from a flat map at a mid-range noise level instead of softplus(0) ~ 0.69,
    // whose early loss would otherwise swamp the reconstruction term.
    sigma_head_ = ConvStack(store, prefix + ".sigma",
                            {{ConvSpec::conv3x3(cfg.out_channels, cfg.sigma_channels), false,
                              Init::kZero}},
                            seed);
    const Real bias = std::log(std::expm1(kSigmaPrior));
    for (Real& v : sigma_head_.conv(0).bias().value.values()) v = bias;
  }
}

Tensor4 NoiseEstimationStage::encode(const Tensor4& stage_input, EncodeCache* cache) const {
  if (cfg_.in_channels == 0) throw ConfigError("noise estimation stage has no input port");
  if (stage_input.c() != cfg_.in_channels) {
    throw ShapeError("noise estimation stage: expected " + std::to_string(cfg_.in_channels) +
                     " input channels, got " + std::to_string(stage_input.c()));
  }
  Tensor4 x = in_port_.forward(stage_input, cache ? &cache->in_port : nullptr);
  return core_.forward(x, cache ? &cache->core : nullptr);
}

Tensor4 NoiseEstimationStage::encode_backward(const Tensor4& grad, const EncodeCache& cache) const {
  return in_port_.backward(core_.backward(grad, cache.core), cache.in_port);
}

NoiseEstimationStage::Output NoiseEstimationStage::project(const Tensor4& core_features,
                                                           ProjectCache* cache) const {
  Output out;
  out.features = out_port_.forward(core_features, cache ? &cache->out_port : nullptr);
  if (has_sigma_head()) {
    Tensor4 pre = sigma_head_.forward(out.features, cache ? &cache->sigma_head : nullptr);
    out.sigma = softplus(pre);
    if (cache) cache->sigma_pre = std::move(pre);
  }
  return out;
}

Tensor4 NoiseEstimationStage::project_backward(const Tensor4& grad_features,
                                               const Tensor4& grad_sigma,
                                               const ProjectCache& cache) const {
  Tensor4 g = grad_features;
  if (has_sigma_head() && !grad_sigma.empty()) {
    g += sigma_head_.backward(softplus_backward(grad_sigma, cache.sigma_pre), cache.sigma_head);
  }
  return out_port_.backward(g, cache.out_port);
}

NoiseEstimationStage::Output NoiseEstimationStage::forward(const Tensor4& stage_input,
                                                           Cache* cache) const {
  Tensor4 core = encode(stage_input, cache ? &cache->encode : nullptr);
  return project(core, cache ? &cache->project : nullptr);
}

Tensor4 NoiseEstimationStage::backward(const Tensor4& grad_features, const Tensor4& grad_sigma,
                                       const Cache& cache) const {
  return encode_backward(project_backward(grad_features, grad_sigma, cache.project),
                         cache.encode);
}

}  // namespace cfnet
