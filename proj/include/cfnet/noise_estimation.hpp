// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "cfnet/layers.hpp"
#include "cfnet/params.hpp"

namespace cfnet {

/// kAffine: scale(x) ⊙ x + translate(x), scale = sigmoid(1×1, PReLU, 1×1),
/// translate = (1×1, PReLU, 1×1).
/// kConvStack: ablation stand-in, ten 1×1 convs with PReLU between.
enum class AffineMode { kAffine, kConvStack };

class AffineTransformBlock {
 public:
  struct Cache {
    Tensor4 input;
    ConvStack::Cache scale;
    ConvStack::Cache translate;
    Tensor4 scale_out;  // post-sigmoid
    ConvStack::Cache stack;
  };

  AffineTransformBlock() = default;
  AffineTransformBlock(ParamStore& store, const std::string& prefix, std::size_t width,
                       AffineMode mode, std::uint64_t seed);
  static AffineTransformBlock shared(ParamStore& store, const std::string& prefix,
                                     const AffineTransformBlock& source);

  Tensor4 forward(const Tensor4& x, Cache* cache) const;
  Tensor4 backward(const Tensor4& grad_out, const Cache& cache) const;

  std::size_t width() const { return width_; }
  AffineMode mode() const { return mode_; }
  const ConvStack& scale_head() const { return scale_; }
  const ConvStack& translate_head() const { return translate_; }

 private:
  std::size_t width_ = 0;
  AffineMode mode_ = AffineMode::kAffine;
  ConvStack scale_;
  ConvStack translate_;
  ConvStack stack_;
};

/// The parameter-shared part of a noise estimation module: two affine
/// transform blocks on the same input, concatenated and fused back to the
/// core width by a 1×1 conv with PReLU.
class NoiseEstimationCore {
 public:
  struct Cache {
    AffineTransformBlock::Cache first;
    AffineTransformBlock::Cache second;
    ConvStack::Cache fuse;
  };

  NoiseEstimationCore() = default;
  NoiseEstimationCore(ParamStore& store, const std::string& prefix, std::size_t width,
                      AffineMode mode, std::uint64_t seed);
  static NoiseEstimationCore shared(ParamStore& store, const std::string& prefix,
                                    const NoiseEstimationCore& source);

  Tensor4 forward(const Tensor4& x, Cache* cache) const;
  Tensor4 backward(const Tensor4& grad_out, const Cache& cache) const;

  std::size_t width() const { return width_; }
  const AffineTransformBlock& first() const { return first_; }

 private:
  std::size_t width_ = 0;
  AffineTransformBlock first_;
  AffineTransformBlock second_;
  ConvStack fuse_;
};

struct NemStageConfig {
  std::size_t in_channels = 0;     // 0: no input port, stage only projects
  std::size_t out_channels = 16;   // matches the paired refinement block
  std::size_t width = 64;          // core width
  std::size_t sigma_channels = 0;  // 0: no sigma head
};

/// One noise estimation module: in-port 1×1 conv to the core width, core,
/// out-port 1×1 conv to the paired stage width, and (stage 1 only) a 3×3
/// sigma-map head with softplus output.
class NoiseEstimationStage {
 public:
  struct Output {
    Tensor4 features;
    Tensor4 sigma;  // empty without a sigma head
  };
  struct EncodeCache {
    ConvStack::Cache in_port;
    NoiseEstimationCore::Cache core;
  };
  struct ProjectCache {
    ConvStack::Cache out_port;
    ConvStack::Cache sigma_head;
    Tensor4 sigma_pre;
  };
  struct Cache {
    EncodeCache encode;
    ProjectCache project;
  };

  NoiseEstimationStage() = default;
  /// Creates a stage with its own core (`core_source` null) or one sharing the
  /// core parameters of `core_source`.
  NoiseEstimationStage(ParamStore& store, const std::string& prefix, const NemStageConfig& cfg,
                       AffineMode mode, const NoiseEstimationCore* core_source,
                       std::uint64_t seed);

  Output forward(const Tensor4& stage_input, Cache* cache) const;
  /// `grad_sigma` may be empty.
  Tensor4 backward(const Tensor4& grad_features, const Tensor4& grad_sigma,
                   const Cache& cache) const;

  /// In-port and core only.
  Tensor4 encode(const Tensor4& stage_input, EncodeCache* cache) const;
  Tensor4 encode_backward(const Tensor4& grad, const EncodeCache& cache) const;
  /// Out-port and sigma head applied to core-width features.
  Output project(const Tensor4& core_features, ProjectCache* cache) const;
  Tensor4 project_backward(const Tensor4& grad_features, const Tensor4& grad_sigma,
                           const ProjectCache& cache) const;

  const NemStageConfig& config() const { return cfg_; }
  const NoiseEstimationCore& core() const { return core_; }
  bool has_sigma_head() const { return cfg_.sigma_channels > 0; }

 private:
  NemStageConfig cfg_;
  ConvStack in_port_;
  NoiseEstimationCore core_;
  ConvStack out_port_;
  ConvStack sigma_head_;
};

}  // namespace cfnet
