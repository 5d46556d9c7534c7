// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "cfnet/errors.hpp"
#include "cfnet/image_io.hpp"
#include "cfnet/random.hpp"

namespace cfnet {

namespace fs = std::filesystem;

Dataset load_dataset(const std::string& dir, const WarningSink& warn) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  Dataset out;
  for (const auto& p : paths) {
    try {
      out.push_back({p.stem().string(), read_pnm(p.string())});
    } catch (const Error& e) {
      if (warn) warn("skipping " + p.string() + ": " + e.what());
    }
  }
  return out;
}

Dataset fixture_images(std::size_t count, std::size_t size, std::uint64_t seed,
                       std::size_t channels) {
  Dataset out;
  const Real s = static_cast<Real>(size);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(seed, i);
    Tensor4 img(1, channels, size, size);
    // Shaded background.
    const Real base = rng.uniform(0.2, 0.6);
    const Real gy = rng.uniform(-0.3, 0.3), gx = rng.uniform(-0.3, 0.3);
    // Soft texture band.
    const Real freq = rng.uniform(0.15, 0.5), angle = rng.uniform(0.0, std::numbers::pi);
    const Real tex_amp = rng.uniform(0.0, 0.08);
    struct Shape {
      bool disc;
      Real cy, cx, a, b, value;
    };
    std::vector<Shape> shapes(3 + rng.below(4));
    for (auto& sh : shapes) {
      sh.disc = rng.uniform() < 0.5;
      sh.cy = rng.uniform(0.0, s);
      sh.cx = rng.uniform(0.0, s);
      sh.a = rng.uniform(0.08, 0.3) * s;
      sh.b = rng.uniform(0.08, 0.3) * s;
      sh.value = rng.uniform(0.05, 0.95);
    }
    std::vector<Real> tint(channels);
    for (auto& t : tint) t = rng.uniform(0.85, 1.15);

    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const Real fy = static_cast<Real>(y), fx = static_cast<Real>(x);
        Real v = base + gy * fy / s + gx * fx / s;
        v += tex_amp * std::sin(freq * (fy * std::cos(angle) + fx * std::sin(angle)));
        for (const auto& sh : shapes) {
          const Real dy = (fy - sh.cy) / sh.a, dx = (fx - sh.cx) / sh.b;
          const bool inside = sh.disc ? dy * dy + dx * dx <= 1.0
                                      : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
          if (inside) v = sh.value;
        }
        for (std::size_t c = 0; c < channels; ++c) {
          img(0, c, y, x) = std::clamp(v * tint[c], 0.02, 0.98);
        }
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "fixture_%03zu", i);
    out.push_back({id, std::move(img)});
  }
  return out;
}

Tensor4 dihedral(const Tensor4& t, int code) {
  if (code < 0 || code > 7) throw ParameterError("dihedral code must be in [0, 7]");
  Tensor4 cur = t;
  if (code >= 4) {
    for (std::size_t b = 0; b < t.n(); ++b)
      for (std::size_t c = 0; c < t.c(); ++c)
        for (std::size_t y = 0; y < t.h(); ++y)
          for (std::size_t x = 0; x < t.w(); ++x) cur(b, c, y, x) = t(b, c, y, t.w() - 1 - x);
  }
  for (int r = 0; r < (code & 3); ++r) {
    // Counter-clockwise quarter turn: out(y, x) = in(x, W-1-y).
    Tensor4 rot(cur.n(), cur.c(), cur.w(), cur.h());
    for (std::size_t b = 0; b < cur.n(); ++b)
      for (std::size_t c = 0; c < cur.c(); ++c)
        for (std::size_t y = 0; y < rot.h(); ++y)
          for (std::size_t x = 0; x < rot.w(); ++x) rot(b, c, y, x) = cur(b, c, x, cur.w() - 1 - y);
    cur = std::move(rot);
  }
  return cur;
}

Tensor4 crop(const Tensor4& image, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  if (y + h > image.h() || x + w > image.w()) {
    throw ShapeError("crop window exceeds image " + to_string(image.shape()));
  }
  Tensor4 out(image.n(), image.c(), h, w);
  for (std::size_t b = 0; b < image.n(); ++b)
    for (std::size_t c = 0; c < image.c(); ++c)
      for (std::size_t i = 0; i < h; ++i)
        std::copy_n(image.plane(b, c) + (y + i) * image.w() + x, w, out.plane(b, c) + i * w);
  return out;
}

void NoiseSpec::validate() const {
  switch (mode) {
    case TrainMode::kNonBlind:
      if (sigma < 0) throw ParameterError("noise sigma must be >= 0");
      break;
    case TrainMode::kBlind:
      if (sigma_lo < 0 || sigma_lo > sigma_hi) throw ParameterError("invalid blind sigma range");
      break;
    case TrainMode::kHetero:
      if (sigma_d_lo < 0 || sigma_d_lo > sigma_d_hi || sigma_s_lo < 0 || sigma_s_lo > sigma_s_hi) {
        throw ParameterError("invalid heteroscedastic sigma ranges");
      }
      isp.validate();
      break;
  }
}

NoisyPair synthesize(const Tensor4& clean, const NoiseSpec& spec, std::uint64_t seed) {
  switch (spec.mode) {
    case TrainMode::kNonBlind:
      return synth_awgn(clean, spec.sigma, seed);
    case TrainMode::kBlind:
      return synth_awgn(clean, sample_sigma_range(spec.sigma_lo, spec.sigma_hi, derive_seed(seed, 1)),
                        seed);
    case TrainMode::kHetero: {
      NoiseParams p;
      p.sigma_d = sample_sigma_range(spec.sigma_d_lo, spec.sigma_d_hi, derive_seed(seed, 2));
      p.sigma_s = sample_sigma_range(spec.sigma_s_lo, spec.sigma_s_hi, derive_seed(seed, 3));
      return synth_hetero(clean, p, spec.isp, seed);
    }
  }
  throw ParameterError("unknown noise mode");
}

Dataset usable_images(const Dataset& dataset, std::size_t patch_size, const WarningSink& warn) {
  Dataset out;
  for (const auto& im : dataset) {
    if (im.image.h() >= patch_size && im.image.w() >= patch_size) {
      out.push_back(im);
    } else if (warn) {
      warn("skipping " + im.id + ": smaller than patch size " + std::to_string(patch_size));
    }
  }
  if (out.empty()) throw DataError("no image is at least " + std::to_string(patch_size) + " pixels in both dims");
  return out;
}

namespace {

struct Draw {
  std::size_t index, y, x;
  int aug;
};

Draw draw_patch(CounterRng& rng, const Dataset& ds, std::size_t patch) {
  Draw d;
  d.index = rng.below(ds.size());
  const Tensor4& im = ds[d.index].image;
  if (im.h() < patch || im.w() < patch) {
    throw DataError("image " + ds[d.index].id + " is smaller than the patch size");
  }
  d.y = rng.below(im.h() - patch + 1);
  d.x = rng.below(im.w() - patch + 1);
  d.aug = static_cast<int>(rng.below(8));
  return d;
}

void check_batch_spec(const BatchSpec& spec, const Dataset& ds) {
  if (ds.empty()) throw DataError("empty dataset");
  if (spec.batch_size == 0) throw ParameterError("batch size must be positive");
  if (spec.patch_size == 0 || spec.patch_size % 4 != 0) {
    throw ParameterError("patch size must be a positive multiple of 4");
  }
}

void put_sample(Tensor4& dst, std::size_t s, const Tensor4& src) {
  std::copy(src.values().begin(), src.values().end(), dst.sample(s));
}

}  // namespace

PatchBatch sample_batch(const Dataset& dataset, const BatchSpec& spec, std::uint64_t iter) {
  check_batch_spec(spec, dataset);
  const std::size_t p = spec.patch_size, n = spec.batch_size;
  const std::size_t c = dataset.front().image.c();
  CounterRng rng(derive_seed(spec.seed, 0xBA7C4ull), iter);
  PatchBatch batch;
  batch.clean = Tensor4(n, c, p, p);
  batch.noisy = Tensor4(n, c, p, p);
  batch.sigma = Tensor4(n, c, p, p);
  for (std::size_t s = 0; s < n; ++s) {
    const Draw d = draw_patch(rng, dataset, p);
    const NamedImage& im = dataset[d.index];
    if (im.image.c() != c) throw DataError("mixed channel counts in dataset at " + im.id);
    Tensor4 clean = dihedral(crop(im.image, d.y, d.x, p, p), d.aug);
    const std::uint64_t noise_seed = derive_seed(spec.seed, iter * 0x10000ull + s + 1);
    NoisyPair pair = synthesize(clean, spec.noise, noise_seed);
    put_sample(batch.clean, s, clean);
    put_sample(batch.noisy, s, pair.noisy);
    put_sample(batch.sigma, s, pair.sigma);
    batch.provenance.push_back({im.id, d.y, d.x, d.aug, false});
  }
  return batch;
}

PatchBatch sample_real_batch(const Dataset& clean, const Dataset& noisy, const BatchSpec& spec,
                             std::uint64_t iter) {
  check_batch_spec(spec, clean);
  if (clean.size() != noisy.size()) throw DataError("real dataset: clean/noisy count mismatch");
  const std::size_t p = spec.patch_size, n = spec.batch_size;
  const std::size_t c = clean.front().image.c();
  CounterRng rng(derive_seed(spec.seed, 0x4EA1ull), iter);
  PatchBatch batch;
  batch.clean = Tensor4(n, c, p, p);
  batch.noisy = Tensor4(n, c, p, p);
  for (std::size_t s = 0; s < n; ++s) {
    const Draw d = draw_patch(rng, clean, p);
    const Tensor4& a = clean[d.index].image;
    const Tensor4& b = noisy[d.index].image;
    if (a.shape() != b.shape() || a.c() != c) {
      throw DataError("real pair " + clean[d.index].id + ": clean/noisy dims differ");
    }
    put_sample(batch.clean, s, dihedral(crop(a, d.y, d.x, p, p), d.aug));
    put_sample(batch.noisy, s, dihedral(crop(b, d.y, d.x, p, p), d.aug));
    batch.provenance.push_back({clean[d.index].id, d.y, d.x, d.aug, true});
  }
  return batch;
}

Tensor4 pad_reflect(const Tensor4& image, std::size_t multiple) {
  if (multiple == 0) throw ParameterError("pad multiple must be positive");
  const std::size_t h = image.h(), w = image.w();
  const std::size_t ph = (h + multiple - 1) / multiple * multiple;
  const std::size_t pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return image;
  if ((ph - h) >= h || (pw - w) >= w) {
    throw ShapeError("image " + to_string(image.shape()) + " too small to reflect-pad");
  }
  auto reflect = [](std::size_t i, std::size_t n) { return i < n ? i : 2 * n - 2 - i; };
  Tensor4 out(image.n(), image.c(), ph, pw);
  for (std::size_t b = 0; b < image.n(); ++b)
    for (std::size_t c = 0; c < image.c(); ++c)
      for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x)
          out(b, c, y, x) = image(b, c, reflect(y, h), reflect(x, w));
  return out;
}

}  // namespace cfnet
