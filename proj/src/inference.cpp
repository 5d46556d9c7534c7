// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/inference.hpp"

#include <algorithm>

#include "cfnet/errors.hpp"
#include "cfnet/layers.hpp"
#include "cfnet/random.hpp"

namespace cfnet {

namespace {

Denoised run_padded(const CFNet& net, const Tensor4& image) {
  const Tensor4 padded = pad_reflect(image, 4);
  CFNet::Output out = net.forward(padded);
  if (padded.shape() == image.shape()) return {std::move(out.denoised), std::move(out.sigma)};
  return {crop(out.denoised, 0, 0, image.h(), image.w()),
          crop(out.sigma, 0, 0, image.h(), image.w())};
}

std::vector<std::size_t> tile_starts(std::size_t size, std::size_t tile, std::size_t overlap) {
  if (size <= tile) return {0};
  std::vector<std::size_t> starts;
  const std::size_t step = tile - overlap;
  for (std::size_t s = 0; s + tile < size; s += step) starts.push_back(s);
  starts.push_back(size - tile);
  return starts;
}

void accumulate(Tensor4& dst, const Tensor4& src, std::size_t y0, std::size_t x0) {
  for (std::size_t c = 0; c < src.c(); ++c)
    for (std::size_t y = 0; y < src.h(); ++y)
      for (std::size_t x = 0; x < src.w(); ++x) dst(0, c, y0 + y, x0 + x) += src(0, c, y, x);
}

}  // namespace

Denoised denoise_image(const CFNet& net, const Tensor4& image, const std::optional<TileSpec>& tiling) {
  if (image.n() != 1) throw ShapeError("denoise_image expects a single image, got " + to_string(image.shape()));
  if (image.c() != net.config().input_channels) {
    throw ShapeError("image has " + std::to_string(image.c()) + " channels, network expects " +
                     std::to_string(net.config().input_channels));
  }
  if (!tiling) return run_padded(net, image);
  if (tiling->overlap >= tiling->tile || tiling->tile == 0) {
    throw ParameterError("tile overlap must be smaller than the tile size");
  }

  const std::size_t th = std::min(tiling->tile, image.h());
  const std::size_t tw = std::min(tiling->tile, image.w());
  Denoised acc{Tensor4(image.shape()), Tensor4(image.shape())};
  Tensor4 weight(1, 1, image.h(), image.w());
  for (std::size_t y0 : tile_starts(image.h(), th, tiling->overlap)) {
    for (std::size_t x0 : tile_starts(image.w(), tw, tiling->overlap)) {
      const Denoised part = run_padded(net, crop(image, y0, x0, th, tw));
      accumulate(acc.image, part.image, y0, x0);
      accumulate(acc.sigma, part.sigma, y0, x0);
      for (std::size_t y = 0; y < th; ++y)
        for (std::size_t x = 0; x < tw; ++x) weight(0, 0, y0 + y, x0 + x) += 1.0;
    }
  }
  for (Tensor4* t : {&acc.image, &acc.sigma})
    for (std::size_t c = 0; c < t->c(); ++c)
      for (std::size_t y = 0; y < t->h(); ++y)
        for (std::size_t x = 0; x < t->w(); ++x) (*t)(0, c, y, x) /= weight(0, 0, y, x);
  return acc;
}

std::uint64_t image_noise_seed(std::uint64_t seed, const std::string& id) {
  return derive_seed(seed, name_hash(id));
}

MetricReport evaluate(const CFNet& net, const Dataset& clean, const NoiseSpec& noise,
                      std::uint64_t seed, std::vector<Denoised>* outputs) {
  if (clean.empty()) throw DataError("evaluation set is empty");
  MetricReport report;
  for (const auto& im : clean) {
    const NoisyPair pair = synthesize(im.image, noise, image_noise_seed(seed, im.id));
    Denoised d = denoise_image(net, pair.noisy);
    // Score the image as it would be stored.
    for (Real& v : d.image.values()) v = std::clamp(v, Real{0}, Real{1});
    report.rows.push_back({im.id, psnr(d.image, im.image), ssim(d.image, im.image)});
    if (outputs) outputs->push_back(std::move(d));
  }
  return report;
}

MetricReport evaluate_noisy_input(const Dataset& clean, const NoiseSpec& noise, std::uint64_t seed) {
  if (clean.empty()) throw DataError("evaluation set is empty");
  MetricReport report;
  for (const auto& im : clean) {
    const NoisyPair pair = synthesize(im.image, noise, image_noise_seed(seed, im.id));
    report.rows.push_back({im.id, psnr(pair.noisy, im.image), ssim(pair.noisy, im.image)});
  }
  return report;
}

}  // namespace cfnet
