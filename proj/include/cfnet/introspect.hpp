// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cfnet/cond_filter.hpp"
#include "cfnet/network.hpp"

namespace cfnet {

struct KernelSite {
  std::size_t y = 0;
  std::size_t x = 0;
};

struct KernelGrid {
  KernelSite site;
  std::size_t k = 0;
  std::vector<Real> taps;  // k² values, row-major
  Real center = 0.0;
  Real neighbor_mean = 0.0;

  /// "y x" header, then k rows of k values.
  std::string to_text() const;
  /// Centre and mean neighbour weight of opposite sign.
  bool high_pass_like() const { return center * neighbor_mean < 0.0; }
};

/// τ of one group at the requested positions. Throws ParameterError for a
/// position or group outside the field.
std::vector<KernelGrid> kernel_grids(const KernelField& tau, std::size_t group,
                                     const std::vector<KernelSite>& sites, std::size_t batch = 0);

/// Runs the network on `image` (padded to a multiple of 4) and writes, for
/// every site, `kernel_<y>_<x>.txt` and an upsampled `kernel_<y>_<x>.pgm` into
/// `out_dir`. Returns the grids; sites are in unpadded image coordinates.
std::vector<KernelGrid> export_kernels(const CFNet& net, const Tensor4& image, std::size_t stage,
                                       std::size_t block, std::size_t group,
                                       const std::vector<KernelSite>& sites,
                                       const std::string& out_dir, std::size_t scale = 16);

/// Channel mean of each stage's noise features, cropped to the (scaled)
/// image extent.
std::vector<Tensor4> noise_feature_maps(const CFNet& net, const Tensor4& image);

/// Writes `noisemap_stage<i>.pgm` (min-max normalised, nearest-upsampled to
/// the image size) for the six stages. Returns the written paths.
std::vector<std::string> export_noisemaps(const CFNet& net, const Tensor4& image,
                                          const std::string& out_dir);

}  // namespace cfnet
