// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfnet/noise_synth.hpp"
#include "cfnet/tensor.hpp"

namespace cfnet {

struct NamedImage {
  std::string id;
  Tensor4 image;  // 1×C×H×W in [0, 1]
};
using Dataset = std::vector<NamedImage>;

using WarningSink = std::function<void(const std::string&)>;

/// Loads every .pgm/.ppm in `dir` in filename order. Unreadable files are
/// reported to `warn` and skipped.
Dataset load_dataset(const std::string& dir, const WarningSink& warn = {});

/// Deterministic piecewise-smooth test images: a shaded background with
/// discs, rectangles and a soft texture band.
Dataset fixture_images(std::size_t count, std::size_t size, std::uint64_t seed,
                       std::size_t channels = 1);

/// Dihedral transform of the (h, w) planes: code & 3 counter-clockwise
/// quarter turns, preceded by a horizontal mirror when code >= 4. Code 0 is
/// the identity.
Tensor4 dihedral(const Tensor4& t, int code);

Tensor4 crop(const Tensor4& image, std::size_t y, std::size_t x, std::size_t h, std::size_t w);

enum class TrainMode { kNonBlind, kBlind, kHetero };

/// How training/evaluation noise is drawn. Non-blind uses `sigma`; blind
/// draws sigma uniformly in [sigma_lo, sigma_hi] per patch; hetero draws
/// (sigma_d, sigma_s) uniformly from their ranges per patch.
struct NoiseSpec {
  TrainMode mode = TrainMode::kNonBlind;
  Real sigma = 25.0;
  Real sigma_lo = 0.0;
  Real sigma_hi = 55.0;
  Real sigma_d_lo = 0.0;
  Real sigma_d_hi = 0.16;
  Real sigma_s_lo = 0.0;
  Real sigma_s_hi = 0.06;
  IspConfig isp;

  void validate() const;
};

/// Noisy version of one clean image under `spec`, deterministic per seed.
NoisyPair synthesize(const Tensor4& clean, const NoiseSpec& spec, std::uint64_t seed);

struct Provenance {
  std::string image_id;
  std::size_t y = 0;
  std::size_t x = 0;
  int augmentation = 0;
  bool real = false;
};

struct PatchBatch {
  Tensor4 clean;
  Tensor4 noisy;
  Tensor4 sigma;           // empty for real-noise batches
  std::vector<Provenance> provenance;
  bool supervised() const { return !sigma.empty(); }
};

struct BatchSpec {
  std::size_t batch_size = 8;
  std::size_t patch_size = 32;
  std::uint64_t seed = 1;
  NoiseSpec noise;
};

/// Images at least patch_size in both dims; reports the others to `warn`.
/// Throws DataError when none remain.
Dataset usable_images(const Dataset& dataset, std::size_t patch_size, const WarningSink& warn = {});

/// Uniform image choice, uniform crop, uniform dihedral augmentation, then
/// noise synthesis on the augmented clean patch. A pure function of
/// (dataset, spec, iter).
PatchBatch sample_batch(const Dataset& dataset, const BatchSpec& spec, std::uint64_t iter);

/// Real-noise pairs: crops of clean/noisy images at identical offsets and
/// augmentation, without a sigma map. `clean` and `noisy` are index-aligned.
PatchBatch sample_real_batch(const Dataset& clean, const Dataset& noisy, const BatchSpec& spec,
                             std::uint64_t iter);

/// Reflect-pads H and W up to the next multiple of `multiple`.
Tensor4 pad_reflect(const Tensor4& image, std::size_t multiple);

}  // namespace cfnet
