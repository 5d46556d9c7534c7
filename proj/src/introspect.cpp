// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/introspect.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cfnet/data.hpp"
#include "cfnet/errors.hpp"
#include "cfnet/image_io.hpp"

namespace cfnet {

namespace {

Tensor4 normalised(const Tensor4& t) {
  const auto v = t.values();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  Tensor4 out(t.shape());
  const Real range = *hi - *lo;
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = range > 0 ? (t[i] - *lo) / range : 0.5;
  return out;
}

Tensor4 upsample_to(const Tensor4& t, std::size_t h, std::size_t w) {
  Tensor4 out(t.n(), t.c(), h, w);
  for (std::size_t b = 0; b < t.n(); ++b)
    for (std::size_t c = 0; c < t.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out(b, c, y, x) = t(b, c, y * t.h() / h, x * t.w() / w);
  return out;
}

}  // namespace

std::string KernelGrid::to_text() const {
  std::string s = std::to_string(site.y) + " " + std::to_string(site.x) + "\n";
  char buf[32];
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof buf, j ? " %+.6e" : "%+.6e", taps[i * k + j]);
      s += buf;
    }
    s += "\n";
  }
  return s;
}

std::vector<KernelGrid> kernel_grids(const KernelField& tau, std::size_t group,
                                     const std::vector<KernelSite>& sites, std::size_t batch) {
  if (group >= tau.groups()) {
    throw ParameterError("kernel group " + std::to_string(group) + " out of range (" +
                         std::to_string(tau.groups()) + " groups)");
  }
  if (batch >= tau.batch()) throw ParameterError("kernel batch index out of range");
  std::vector<KernelGrid> out;
  const std::size_t k = tau.k(), taps = tau.taps(), mid = taps / 2;
  for (const KernelSite& s : sites) {
    if (s.y >= tau.h() || s.x >= tau.w()) {
      throw ParameterError("kernel position (" + std::to_string(s.y) + ", " + std::to_string(s.x) +
                           ") outside the " + std::to_string(tau.h()) + "x" +
                           std::to_string(tau.w()) + " field");
    }
    KernelGrid g;
    g.site = s;
    g.k = k;
    for (std::size_t t = 0; t < taps; ++t) g.taps.push_back(tau.at(batch, group, t, s.y, s.x));
    g.center = g.taps[mid];
    Real sum = 0.0;
    for (std::size_t t = 0; t < taps; ++t)
      if (t != mid) sum += g.taps[t];
    g.neighbor_mean = taps > 1 ? sum / static_cast<Real>(taps - 1) : 0.0;
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<KernelGrid> export_kernels(const CFNet& net, const Tensor4& image, std::size_t stage,
                                       std::size_t block, std::size_t group,
                                       const std::vector<KernelSite>& sites,
                                       const std::string& out_dir, std::size_t scale) {
  if (stage >= kStages) throw ParameterError("stage must be in [0, 6)");
  const std::size_t level = CFNet::kLevel[stage];
  const std::size_t h = image.h() >> level, w = image.w() >> level;
  for (const KernelSite& s : sites) {
    if (s.y >= h || s.x >= w) {
      throw ParameterError("kernel position (" + std::to_string(s.y) + ", " + std::to_string(s.x) +
                           ") outside the " + std::to_string(h) + "x" + std::to_string(w) +
                           " feature grid of stage " + std::to_string(stage + 1));
    }
  }
  const KernelField tau = net.stage_kernels(pad_reflect(image, 4), stage, block);
  std::vector<KernelGrid> grids = kernel_grids(tau, group, sites);

  std::filesystem::create_directories(out_dir);
  for (const KernelGrid& g : grids) {
    const std::string stem =
        out_dir + "/kernel_" + std::to_string(g.site.y) + "_" + std::to_string(g.site.x);
    std::ofstream(stem + ".txt") << g.to_text();
    Tensor4 t(Shape4{1, 1, g.k, g.k}, g.taps);
    write_pnm(stem + ".pgm", upsample_to(normalised(t), g.k * scale, g.k * scale));
  }
  return grids;
}

std::vector<Tensor4> noise_feature_maps(const CFNet& net, const Tensor4& image) {
  const CFNet::Output out = net.forward(pad_reflect(image, 4), nullptr, true);
  std::vector<Tensor4> maps;
  for (std::size_t s = 0; s < out.noise_features.size(); ++s) {
    const Tensor4& f = out.noise_features[s];
    const std::size_t level = CFNet::kLevel[s];
    const std::size_t h = std::max<std::size_t>(1, image.h() >> level);
    const std::size_t w = std::max<std::size_t>(1, image.w() >> level);
    Tensor4 m(1, 1, h, w);
    for (std::size_t c = 0; c < f.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) m(0, 0, y, x) += f(0, c, y, x) / static_cast<Real>(f.c());
    maps.push_back(std::move(m));
  }
  return maps;
}

std::vector<std::string> export_noisemaps(const CFNet& net, const Tensor4& image,
                                          const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  const auto maps = noise_feature_maps(net, image);
  for (std::size_t s = 0; s < maps.size(); ++s) {
    const std::string path = out_dir + "/noisemap_stage" + std::to_string(s + 1) + ".pgm";
    write_pnm(path, upsample_to(normalised(maps[s]), image.h(), image.w()));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace cfnet
