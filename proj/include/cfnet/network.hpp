// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfnet/cond_filter.hpp"
#include "cfnet/layers.hpp"
#include "cfnet/noise_estimation.hpp"
#include "cfnet/params.hpp"

namespace cfnet {

/// Which of the three contributions a network is built with. Disabling one
/// swaps in the ablation stand-in:
///   affine_blocks off   -> each ATB becomes a ten-conv 1×1 stack
///   conditional_filters off -> each CFB becomes concat + one 3×3 conv
///   dynamic_estimation off  -> stage-1 noise features broadcast to all stages
struct Components {
  bool affine_blocks = true;
  bool conditional_filters = true;
  bool dynamic_estimation = true;
  bool operator==(const Components&) const = default;
};

enum class Variant { kFull, kNoAtb, kNoCfb, kNoDne, kBaseline };

Components components_of(Variant v);
/// Parses FULL, NO_ATB, NO_CFB, NO_DNE, BASELINE (case-insensitive); throws
/// ParameterError otherwise.
Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

inline constexpr std::size_t kStages = 6;

struct ArchConfig {
  std::size_t input_channels = 1;
  std::array<std::size_t, kStages> width_plan{16, 32, 64, 64, 32, 16};
  std::size_t t = 2;   // conditional filter blocks per stage
  std::size_t k = 3;
  std::size_t g = 16;
  std::size_t nem_width = 64;
  Components components;
  std::uint64_t seed = 1;

  /// Desk-scale default widths (16, 32, 64, 64, 32, 16).
  static ArchConfig desk();
  /// Widths (64, 128, 256, 256, 128, 64).
  static ArchConfig full_width();

  /// Throws ConfigError on asymmetric plans, widths not divisible by g, etc.
  void validate() const;

  /// `key = value` lines; round-trips through parse().
  std::string to_text() const;
  static ArchConfig parse(const std::string& text);
  bool operator==(const ArchConfig&) const = default;
};

/// 2×2 average pool followed by a 3×3 conv that changes the channel count.
class DownLink {
 public:
  struct Cache {
    Tensor4 pooled;
  };
  DownLink() = default;
  DownLink(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
           std::uint64_t seed);
  Tensor4 forward(const Tensor4& x, Cache* cache) const;
  Tensor4 backward(const Tensor4& grad_out, const Cache& cache) const;

 private:
  Conv2d conv_;
};

/// Channel-concatenation of image and noise features followed by one 3×3
/// conv, added back to the image features. Stand-in for a CFB in ablations.
class ConcatFusionBlock {
 public:
  struct Cache {
    Tensor4 joined;
  };
  struct Grads {
    Tensor4 image;
    Tensor4 noise;
  };
  ConcatFusionBlock() = default;
  ConcatFusionBlock(ParamStore& store, const std::string& prefix, std::size_t channels,
                    std::size_t noise_channels, std::uint64_t seed);
  Tensor4 forward(const Tensor4& image, const Tensor4& noise, Cache* cache) const;
  Grads backward(const Tensor4& grad_out, const Cache& cache) const;

 private:
  std::size_t channels_ = 0;
  Conv2d conv_;
};

/// Conditional denoising module: a five-conv feature refinement block
/// followed by t conditional filter blocks (or concat stand-ins) that all
/// consume the same stage noise features.
class DenoisingModule {
 public:
  struct Cache {
    ConvStack::Cache frb;
    std::vector<ConditionalFilterBlock::Cache> cfb;
    std::vector<ConcatFusionBlock::Cache> concat;
  };
  struct Grads {
    Tensor4 features;  // also the gradient of skip_in
    Tensor4 noise;
  };

  DenoisingModule() = default;
  DenoisingModule(ParamStore& store, const std::string& prefix, std::size_t channels,
                  std::size_t t, const CfbConfig& cfb, bool conditional, std::uint64_t seed);

  /// `skip_in` (optional) is added to `features` before refinement. When
  /// `frb_out` is non-null it receives the refinement block output.
  Tensor4 forward(const Tensor4& features, const Tensor4& noise, const Tensor4* skip_in,
                  Cache* cache, Tensor4* frb_out = nullptr) const;
  /// `grad_frb_out` carries gradient arriving at the refinement output from a
  /// skip connection; may be empty.
  Grads backward(const Tensor4& grad_out, const Tensor4& grad_frb_out, const Cache& cache) const;

  std::size_t channels() const { return channels_; }
  std::size_t blocks() const { return conditional_ ? cfbs_.size() : concats_.size(); }
  const ConditionalFilterBlock& cfb(std::size_t i) const { return cfbs_.at(i); }
  bool conditional() const { return conditional_; }

 private:
  std::size_t channels_ = 0;
  bool conditional_ = true;
  ConvStack frb_;
  std::vector<ConditionalFilterBlock> cfbs_;
  std::vector<ConcatFusionBlock> concats_;
};

/// The assembled denoiser: shallow features, six denoising modules in a
/// two-level U-Net (pool/transposed-conv links, additive skips between the
/// outer two symmetric pairs), a paired noise estimation stage per module, and
/// a final 3×3 conv producing the residual added to the noisy input.
class CFNet {
 public:
  struct Output {
    Tensor4 denoised;
    Tensor4 sigma;
    /// Per-stage noise features, filled only when requested.
    std::vector<Tensor4> noise_features;
  };
  struct Cache;

  explicit CFNet(const ArchConfig& cfg);
  ~CFNet();
  CFNet(const CFNet&) = delete;
  CFNet& operator=(const CFNet&) = delete;
  CFNet(CFNet&&) noexcept;
  CFNet& operator=(CFNet&&) noexcept;

  /// `noisy` spatial dims must be divisible by 4.
  Output forward(const Tensor4& noisy, Cache* cache = nullptr, bool keep_noise_features = false) const;
  /// Accumulates parameter gradients. `grad_sigma` may be empty.
  void backward(const Tensor4& grad_denoised, const Tensor4& grad_sigma, const Cache& cache) const;

  /// Conditional kernels τ of block `block` in stage `stage` (0-based) for
  /// the given input. Requires conditional filters.
  KernelField stage_kernels(const Tensor4& noisy, std::size_t stage, std::size_t block) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ArchConfig& config() const { return cfg_; }
  const NoiseEstimationStage& nem(std::size_t i) const { return nems_.at(i); }
  const DenoisingModule& cdm(std::size_t i) const { return cdms_.at(i); }

  /// Stage index -> pyramid level (0 full resolution).
  static constexpr std::array<std::size_t, kStages> kLevel{0, 1, 2, 2, 1, 0};

 private:
  ArchConfig cfg_;
  ParamStore store_;
  ConvStack sfeb_;
  std::vector<DenoisingModule> cdms_;
  std::vector<NoiseEstimationStage> nems_;
  DownLink down1_, down2_;
  Conv2d up1_, up2_;
  Conv2d head_;
};

struct CFNet::Cache {
  ConvStack::Cache sfeb;
  std::array<DenoisingModule::Cache, kStages> cdm;
  std::array<NoiseEstimationStage::Cache, kStages> nem;
  std::array<Tensor4, kStages> cdm_in;  // stage inputs after skip addition
  DownLink::Cache down1, down2;
  Tensor4 up1_in, up2_in;
  Tensor4 head_in;
  std::array<Tensor4, 3> core_pyramid;  // static estimation only
};

/// Builds the network for an ablation variant of `cfg`.
CFNet build_ablation_variant(Variant variant, ArchConfig cfg);

}  // namespace cfnet
