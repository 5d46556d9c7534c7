// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfnet/data.hpp"
#include "cfnet/network.hpp"
#include "cfnet/objectives.hpp"

namespace cfnet {

struct TileSpec {
  std::size_t tile = 128;
  std::size_t overlap = 16;
};

struct Denoised {
  Tensor4 image;
  Tensor4 sigma;
};

/// Runs the network on one 1×C×H×W image of any size: reflect-pads to a
/// multiple of 4 and crops the outputs back. With `tiling`, overlapping
/// tiles are processed independently and averaged where they overlap.
Denoised denoise_image(const CFNet& net, const Tensor4& image,
                       const std::optional<TileSpec>& tiling = {});

/// Noise seed for an evaluation image, derived from its id only.
std::uint64_t image_noise_seed(std::uint64_t seed, const std::string& id);

/// Adds noise to each clean image (seeded per image id), denoises it and
/// scores the result clamped to [0, 1], i.e. as it would be written. When `outputs` is non-null it receives the denoised
/// images in dataset order.
MetricReport evaluate(const CFNet& net, const Dataset& clean, const NoiseSpec& noise,
                      std::uint64_t seed, std::vector<Denoised>* outputs = nullptr);

/// Same scoring for an identity model (noisy input returned unchanged).
MetricReport evaluate_noisy_input(const Dataset& clean, const NoiseSpec& noise, std::uint64_t seed);

}  // namespace cfnet
