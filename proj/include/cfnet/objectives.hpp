// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfnet/tensor.hpp"

namespace cfnet {

enum class RecNorm { kL1, kL2 };

RecNorm parse_rec_norm(const std::string& s);

/// A scalar loss and its gradient with respect to the first argument.
struct LossValue {
  Real value = 0.0;
  Tensor4 grad;
};

/// Asymmetric noise-level loss, averaged over elements:
///   mean_i |alpha - [pred_i < gt_i]| * (pred_i - gt_i)^2
/// With alpha < 0.5 under-estimates cost more than over-estimates.
/// `alpha` must lie in (0, 0.5).
LossValue asymm_loss(const Tensor4& sigma_pred, const Tensor4& sigma_gt, Real alpha);

/// Mean absolute (L1) or mean squared (L2) error. The L1 subgradient at a tie
/// is 0.
LossValue rec_loss(const Tensor4& denoised, const Tensor4& clean, RecNorm norm);

/// rec + lambda * asymm; just rec when there is no noise-level supervision.
Real total_loss(Real rec, std::optional<Real> asymm, Real lambda);

inline constexpr Real kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE), capped at kPsnrCap for identical inputs.
Real psnr(const Tensor4& a, const Tensor4& b, Real peak = 1.0);

/// Mean SSIM over all (sample, channel) planes: 11×11 Gaussian window with
/// sigma 1.5 evaluated at every fully-inside position, C1 = (0.01 peak)^2,
/// C2 = (0.03 peak)^2.
Real ssim(const Tensor4& a, const Tensor4& b, Real peak = 1.0);

struct MetricRow {
  std::string id;
  Real psnr = 0.0;
  Real ssim = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  Real mean_psnr() const;
  Real mean_ssim() const;
  /// `<id>\t<psnr>\t<ssim>` per image, then a `MEAN` row.
  std::string to_text() const;
};

}  // namespace cfnet
