// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/network.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "cfnet/errors.hpp"
#include "cfnet/text_config.hpp"

namespace cfnet {

Components components_of(Variant v) {
  switch (v) {
    case Variant::kFull:
      return {true, true, true};
    case Variant::kNoAtb:
      return {false, true, true};
    case Variant::kNoCfb:
      return {true, false, true};
    case Variant::kNoDne:
      return {true, true, false};
    case Variant::kBaseline:
      return {false, false, false};
  }
  throw ParameterError("unknown variant");
}

Variant parse_variant(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Variant v : {Variant::kFull, Variant::kNoAtb, Variant::kNoCfb, Variant::kNoDne,
                    Variant::kBaseline}) {
    if (variant_name(v) == up) return v;
  }
  throw ParameterError("unknown variant '" + name +
                       "' (expected FULL, NO_ATB, NO_CFB, NO_DNE or BASELINE)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "FULL";
    case Variant::kNoAtb:
      return "NO_ATB";
    case Variant::kNoCfb:
      return "NO_CFB";
    case Variant::kNoDne:
      return "NO_DNE";
    case Variant::kBaseline:
      return "BASELINE";
  }
  return "?";
}

ArchConfig ArchConfig::desk() { return ArchConfig{}; }

ArchConfig ArchConfig::full_width() {
  ArchConfig c;
  c.width_plan = {64, 128, 256, 256, 128, 64};
  return c;
}

void ArchConfig::validate() const {
  if (input_channels != 1 && input_channels != 3) {
    throw ConfigError("input_channels must be 1 or 3");
  }
  for (std::size_t i = 0; i < kStages; ++i) {
    if (width_plan[i] != width_plan[kStages - 1 - i]) {
      throw ConfigError("width_plan must be symmetric");
    }
    if (width_plan[i] == 0 || g == 0 || width_plan[i] % g != 0) {
      throw ConfigError("width " + std::to_string(width_plan[i]) + " not divisible by g = " +
                        std::to_string(g));
    }
  }
  if (k == 0 || k % 2 == 0) throw ConfigError("k must be odd");
  if (nem_width == 0) throw ConfigError("nem_width must be positive");
}

std::string ArchConfig::to_text() const {
  std::ostringstream os;
  os << "input_channels = " << input_channels << "\n";
  os << "width_plan = ";
  for (std::size_t i = 0; i < kStages; ++i) os << (i ? "," : "") << width_plan[i];
  os << "\n";
  os << "t = " << t << "\n";
  os << "k = " << k << "\n";
  os << "g = " << g << "\n";
  os << "nem_width = " << nem_width << "\n";
  os << "affine_blocks = " << (components.affine_blocks ? "true" : "false") << "\n";
  os << "conditional_filters = " << (components.conditional_filters ? "true" : "false") << "\n";
  os << "dynamic_estimation = " << (components.dynamic_estimation ? "true" : "false") << "\n";
  os << "seed = " << seed << "\n";
  return os.str();
}

ArchConfig ArchConfig::parse(const std::string& text) {
  const TextConfig kv = TextConfig::parse(text);
  ArchConfig c;
  c.input_channels = kv.get_size("input_channels", c.input_channels);
  if (kv.contains("width_plan")) {
    const auto widths = kv.get_size_list("width_plan");
    if (widths.size() != kStages) throw ConfigError("width_plan needs exactly 6 entries");
    std::copy(widths.begin(), widths.end(), c.width_plan.begin());
  }
  c.t = kv.get_size("t", c.t);
  c.k = kv.get_size("k", c.k);
  c.g = kv.get_size("g", c.g);
  c.nem_width = kv.get_size("nem_width", c.nem_width);
  c.components.affine_blocks = kv.get_bool("affine_blocks", true);
  c.components.conditional_filters = kv.get_bool("conditional_filters", true);
  c.components.dynamic_estimation = kv.get_bool("dynamic_estimation", true);
  c.seed = kv.get_u64("seed", c.seed);
  c.validate();
  return c;
}

DownLink::DownLink(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   std::uint64_t seed)
    : conv_(store, prefix + ".conv", ConvSpec::conv3x3(in, out), Init::kKaiming, seed, 1.0) {}

Tensor4 DownLink::forward(const Tensor4& x, Cache* cache) const {
  Tensor4 pooled = avg_pool2(x);
  Tensor4 out = conv_.forward(pooled);
  if (cache) cache->pooled = std::move(pooled);
  return out;
}

Tensor4 DownLink::backward(const Tensor4& grad_out, const Cache& cache) const {
  return avg_pool2_backward(conv_.backward(grad_out, cache.pooled));
}

ConcatFusionBlock::ConcatFusionBlock(ParamStore& store, const std::string& prefix,
                                     std::size_t channels, std::size_t noise_channels,
                                     std::uint64_t seed)
    : channels_(channels),
      conv_(store, prefix + ".conv", ConvSpec::conv3x3(channels + noise_channels, channels),
            Init::kZero, seed) {}

Tensor4 ConcatFusionBlock::forward(const Tensor4& image, const Tensor4& noise, Cache* cache) const {
  Tensor4 joined = concat_channels(image, noise);
  Tensor4 out = add(image, conv_.forward(joined));
  if (cache) cache->joined = std::move(joined);
  return out;
}

ConcatFusionBlock::Grads ConcatFusionBlock::backward(const Tensor4& grad_out,
                                                     const Cache& cache) const {
  auto [gi, gn] = split_channels(conv_.backward(grad_out, cache.joined), channels_);
  gi += grad_out;
  return {std::move(gi), std::move(gn)};
}

DenoisingModule::DenoisingModule(ParamStore& store, const std::string& prefix,
                                 std::size_t channels, std::size_t t, const CfbConfig& cfb,
                                 bool conditional, std::uint64_t seed)
    : channels_(channels), conditional_(conditional) {
  const ConvSpec c3 = ConvSpec::conv3x3(channels, channels);
  frb_ = ConvStack(store, prefix + ".frb",
                   {{c3, true}, {c3, true}, {c3, true}, {c3, true}, {c3, false}}, seed);
  for (std::size_t i = 0; i < t; ++i) {
    const std::string id = prefix + ".block" + std::to_string(i);
    if (conditional) {
      cfbs_.emplace_back(store, id, cfb, channels, seed);
    } else {
      concats_.emplace_back(store, id, channels, channels, seed);
    }
  }
}

Tensor4 DenoisingModule::forward(const Tensor4& features, const Tensor4& noise,
                                 const Tensor4* skip_in, Cache* cache, Tensor4* frb_out) const {
  if (noise.n() != features.n() || noise.h() != features.h() || noise.w() != features.w() ||
      noise.c() != channels_) {
    throw ShapeError("denoising module: noise features " + to_string(noise.shape()) +
                     " do not pair with features " + to_string(features.shape()));
  }
  Tensor4 x = features;
  if (skip_in) {
    require_shape(skip_in->shape(), features.shape(), "denoising module skip_in");
    x += *skip_in;
  }
  Tensor4 h = frb_.forward(x, cache ? &cache->frb : nullptr);
  if (frb_out) *frb_out = h;
  if (cache) {
    cache->cfb.assign(cfbs_.size(), {});
    cache->concat.assign(concats_.size(), {});
  }
  for (std::size_t i = 0; i < cfbs_.size(); ++i) {
    h = cfbs_[i].forward(h, noise, cache ? &cache->cfb[i] : nullptr);
  }
  for (std::size_t i = 0; i < concats_.size(); ++i) {
    h = concats_[i].forward(h, noise, cache ? &cache->concat[i] : nullptr);
  }
  return h;
}

DenoisingModule::Grads DenoisingModule::backward(const Tensor4& grad_out,
                                                 const Tensor4& grad_frb_out,
                                                 const Cache& cache) const {
  Tensor4 g = grad_out;
  Tensor4 g_noise;
  auto add_noise = [&](Tensor4 gn) {
    if (g_noise.empty()) {
      g_noise = std::move(gn);
    } else {
      g_noise += gn;
    }
  };
  for (std::size_t i = concats_.size(); i-- > 0;) {
    auto gr = concats_[i].backward(g, cache.concat[i]);
    g = std::move(gr.image);
    add_noise(std::move(gr.noise));
  }
  for (std::size_t i = cfbs_.size(); i-- > 0;) {
    auto gr = cfbs_[i].backward(g, cache.cfb[i]);
    g = std::move(gr.image);
    add_noise(std::move(gr.noise));
  }
  if (!grad_frb_out.empty()) g += grad_frb_out;
  Grads out;
  out.features = frb_.backward(g, cache.frb);
  out.noise = g_noise.empty() ? Tensor4(Shape4{grad_out.n(), channels_, grad_out.h(), grad_out.w()})
                              : std::move(g_noise);
  return out;
}

CFNet::CFNet(const ArchConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& w = cfg_.width_plan;
  const std::uint64_t seed = cfg_.seed;
  const AffineMode mode =
      cfg_.components.affine_blocks ? AffineMode::kAffine : AffineMode::kConvStack;

  sfeb_ = ConvStack(store_, "sfeb",
                    {{ConvSpec::conv3x3(cfg_.input_channels, w[0]), true},
                     {ConvSpec::conv3x3(w[0], w[0]), true},
                     {ConvSpec::conv3x3(w[0], w[0]), false}},
                    seed);

  for (std::size_t i = 0; i < kStages; ++i) {
    const std::string id = "cdm" + std::to_string(i + 1);
    const CfbConfig cfb{cfg_.k, cfg_.g, w[i]};
    cdms_.emplace_back(store_, id, w[i], cfg_.t, cfb, cfg_.components.conditional_filters, seed);
  }

  for (std::size_t i = 0; i < kStages; ++i) {
    NemStageConfig nc;
    nc.width = cfg_.nem_width;
    nc.out_channels = w[i];
    if (i == 0) {
      nc.in_channels = cfg_.input_channels;
      nc.sigma_channels = cfg_.input_channels;
    } else {
      nc.in_channels = cfg_.components.dynamic_estimation ? w[i] : 0;
    }
    const NoiseEstimationCore* shared = i == 0 ? nullptr : &nems_.front().core();
    nems_.emplace_back(store_, "nem" + std::to_string(i + 1), nc, mode, shared, seed);
  }

  down1_ = DownLink(store_, "down1", w[0], w[1], seed);
  down2_ = DownLink(store_, "down2", w[1], w[2], seed);
  up1_ = Conv2d(store_, "up1", ConvSpec::up3x3(w[3], w[4]), Init::kKaiming, seed, 1.0);
  up2_ = Conv2d(store_, "up2", ConvSpec::up3x3(w[4], w[5]), Init::kKaiming, seed, 1.0);
  head_ = Conv2d(store_, "head", ConvSpec::conv3x3(w[5], cfg_.input_channels), Init::kZero, seed);
}

CFNet::~CFNet() = default;
CFNet::CFNet(CFNet&&) noexcept = default;
CFNet& CFNet::operator=(CFNet&&) noexcept = default;

CFNet::Output CFNet::forward(const Tensor4& noisy, Cache* cache, bool keep_noise_features) const {
  if (noisy.c() != cfg_.input_channels) {
    throw ShapeError("cfnet: expected " + std::to_string(cfg_.input_channels) +
                     " input channels, got " + std::to_string(noisy.c()));
  }
  if (noisy.h() % 4 != 0 || noisy.w() % 4 != 0 || noisy.h() == 0 || noisy.w() == 0) {
    throw ShapeError("cfnet: spatial dims must be positive multiples of 4, got " +
                     to_string(noisy.shape()));
  }
  const bool dynamic = cfg_.components.dynamic_estimation;
  Output out;

  // Stage-1 estimation reads the raw noisy image.
  NoiseEstimationStage::Cache* nc0 = cache ? &cache->nem[0] : nullptr;
  Tensor4 core0 = nems_[0].encode(noisy, nc0 ? &nc0->encode : nullptr);
  std::array<Tensor4, 3> pyramid;
  if (!dynamic) {
    pyramid[0] = core0;
    pyramid[1] = avg_pool2(pyramid[0]);
    pyramid[2] = avg_pool2(pyramid[1]);
  }
  NoiseEstimationStage::Output est0 = nems_[0].project(core0, nc0 ? &nc0->project : nullptr);
  out.sigma = std::move(est0.sigma);

  auto estimate = [&](std::size_t i, const Tensor4& stage_input) -> Tensor4 {
    if (i == 0) return est0.features;
    NoiseEstimationStage::Cache* nc = cache ? &cache->nem[i] : nullptr;
    if (dynamic) return nems_[i].forward(stage_input, nc).features;
    return nems_[i].project(pyramid[kLevel[i]], nc ? &nc->project : nullptr).features;
  };

  std::array<Tensor4, kStages> frb;
  Tensor4 x = sfeb_.forward(noisy, cache ? &cache->sfeb : nullptr);
  for (std::size_t i = 0; i < kStages; ++i) {
    // Links between consecutive modules; the inner pair (3 -> 4) is direct.
    if (i == 1) x = down1_.forward(x, cache ? &cache->down1 : nullptr);
    if (i == 2) x = down2_.forward(x, cache ? &cache->down2 : nullptr);
    if (i == 4) {
      if (cache) cache->up1_in = x;
      x = up1_.forward(x);
      x += frb[1];
    }
    if (i == 5) {
      if (cache) cache->up2_in = x;
      x = up2_.forward(x);
      x += frb[0];
    }
    Tensor4 noise = estimate(i, x);
    if (cache) cache->cdm_in[i] = x;
    x = cdms_[i].forward(x, noise, nullptr, cache ? &cache->cdm[i] : nullptr, &frb[i]);
    if (keep_noise_features) out.noise_features.push_back(std::move(noise));
  }
  if (cache) cache->head_in = x;
  out.denoised = add(noisy, head_.forward(x));
  return out;
}

void CFNet::backward(const Tensor4& grad_denoised, const Tensor4& grad_sigma,
                     const Cache& cache) const {
  const bool dynamic = cfg_.components.dynamic_estimation;
  std::array<Tensor4, 3> g_pyramid;
  auto add_to = [](Tensor4& acc, Tensor4 g) {
    if (acc.empty()) {
      acc = std::move(g);
    } else {
      acc += g;
    }
  };

  Tensor4 g = head_.backward(grad_denoised, cache.head_in);
  std::array<Tensor4, kStages> g_frb;
  Tensor4 g_noise0;
  for (std::size_t i = kStages; i-- > 0;) {
    auto gc = cdms_[i].backward(g, g_frb[i], cache.cdm[i]);
    g = std::move(gc.features);
    if (i == 0) {
      g_noise0 = std::move(gc.noise);
    } else if (dynamic) {
      g += nems_[i].backward(gc.noise, Tensor4(), cache.nem[i]);
    } else {
      add_to(g_pyramid[kLevel[i]], nems_[i].project_backward(gc.noise, Tensor4(), cache.nem[i].project));
    }
    if (i == 5) {
      g_frb[0] = g;
      g = up2_.backward(g, cache.up2_in);
    }
    if (i == 4) {
      g_frb[1] = g;
      g = up1_.backward(g, cache.up1_in);
    }
    if (i == 2) g = down2_.backward(g, cache.down2);
    if (i == 1) g = down1_.backward(g, cache.down1);
  }
  sfeb_.backward(g, cache.sfeb, false);

  Tensor4 g_core0 = nems_[0].project_backward(g_noise0, grad_sigma, cache.nem[0].project);
  if (!dynamic) {
    if (!g_pyramid[2].empty()) add_to(g_pyramid[1], avg_pool2_backward(g_pyramid[2]));
    if (!g_pyramid[1].empty()) g_core0 += avg_pool2_backward(g_pyramid[1]);
    if (!g_pyramid[0].empty()) g_core0 += g_pyramid[0];
  }
  nems_[0].encode_backward(g_core0, cache.nem[0].encode);
}

KernelField CFNet::stage_kernels(const Tensor4& noisy, std::size_t stage, std::size_t block) const {
  if (!cfg_.components.conditional_filters) {
    throw ConfigError("network has no conditional filters");
  }
  if (stage >= kStages || block >= cdms_[stage].blocks()) {
    throw ParameterError("no conditional filter block " + std::to_string(block) + " in stage " +
                         std::to_string(stage));
  }
  Cache cache;
  Output out = forward(noisy, &cache, true);
  // Reproduce the block input by running the module prefix.
  const DenoisingModule& m = cdms_[stage];
  Tensor4 h = cache.cdm[stage].cfb[block].image;
  return m.cfb(block).kernels(h, out.noise_features[stage]);
}

CFNet build_ablation_variant(Variant variant, ArchConfig cfg) {
  cfg.components = components_of(variant);
  return CFNet(cfg);
}

}  // namespace cfnet
