// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/objectives.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cfnet/errors.hpp"

namespace cfnet {

RecNorm parse_rec_norm(const std::string& s) {
  if (s == "l1" || s == "L1") return RecNorm::kL1;
  if (s == "l2" || s == "L2") return RecNorm::kL2;
  throw ParameterError("reconstruction norm must be L1 or L2, got '" + s + "'");
}

LossValue asymm_loss(const Tensor4& sigma_pred, const Tensor4& sigma_gt, Real alpha) {
  require_shape(sigma_gt.shape(), sigma_pred.shape(), "asymm_loss ground truth");
  if (!(alpha > 0.0 && alpha < 0.5)) {
    throw ParameterError("asymm_loss: alpha must lie in (0, 0.5)");
  }
  const Real n = static_cast<Real>(sigma_pred.size());
  LossValue out{0.0, Tensor4(sigma_pred.shape())};
  for (std::size_t i = 0; i < sigma_pred.size(); ++i) {
    const Real e = sigma_pred[i] - sigma_gt[i];
    const Real weight = std::abs(alpha - (e < 0.0 ? 1.0 : 0.0));
    out.value += weight * e * e;
    out.grad[i] = 2.0 * weight * e / n;
  }
  out.value /= n;
  return out;
}

LossValue rec_loss(const Tensor4& denoised, const Tensor4& clean, RecNorm norm) {
  require_shape(clean.shape(), denoised.shape(), "rec_loss target");
  const Real n = static_cast<Real>(denoised.size());
  LossValue out{0.0, Tensor4(denoised.shape())};
  for (std::size_t i = 0; i < denoised.size(); ++i) {
    const Real e = denoised[i] - clean[i];
    if (norm == RecNorm::kL1) {
      out.value += std::abs(e);
      out.grad[i] = (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) / n;
    } else {
      out.value += e * e;
      out.grad[i] = 2.0 * e / n;
    }
  }
  out.value /= n;
  return out;
}

Real total_loss(Real rec, std::optional<Real> asymm, Real lambda) {
  return asymm ? rec + lambda * *asymm : rec;
}

Real psnr(const Tensor4& a, const Tensor4& b, Real peak) {
  require_shape(b.shape(), a.shape(), "psnr operand");
  Real mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Real d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<Real>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr std::size_t kWindow = 11;

std::array<Real, kWindow> gaussian_taps() {
  std::array<Real, kWindow> taps{};
  Real total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const Real d = static_cast<Real>(i) - 5.0;
    taps[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Separable "valid" Gaussian filtering of one plane.
std::vector<Real> blur_valid(const std::vector<Real>& img, std::size_t h, std::size_t w,
                             const std::array<Real, kWindow>& taps) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<Real> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      Real acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += taps[k] * img[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<Real> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      Real acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

Real ssim(const Tensor4& a, const Tensor4& b, Real peak) {
  require_shape(b.shape(), a.shape(), "ssim operand");
  if (a.h() < kWindow || a.w() < kWindow) {
    throw ParameterError("ssim: image " + to_string(a.shape()) + " smaller than the 11x11 window");
  }
  const Real c1 = (0.01 * peak) * (0.01 * peak);
  const Real c2 = (0.03 * peak) * (0.03 * peak);
  const auto taps = gaussian_taps();
  const std::size_t h = a.h(), w = a.w(), grid = h * w;
  Real total = 0.0;
  std::size_t planes = 0;
  for (std::size_t n = 0; n < a.n(); ++n) {
    for (std::size_t c = 0; c < a.c(); ++c) {
      std::vector<Real> x(a.plane(n, c), a.plane(n, c) + grid);
      std::vector<Real> y(b.plane(n, c), b.plane(n, c) + grid);
      std::vector<Real> xx(grid), yy(grid), xy(grid);
      for (std::size_t i = 0; i < grid; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
      const auto mx = blur_valid(x, h, w, taps);
      const auto my = blur_valid(y, h, w, taps);
      const auto sxx = blur_valid(xx, h, w, taps);
      const auto syy = blur_valid(yy, h, w, taps);
      const auto sxy = blur_valid(xy, h, w, taps);
      Real acc = 0.0;
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const Real vx = sxx[i] - mx[i] * mx[i];
        const Real vy = syy[i] - my[i] * my[i];
        const Real cov = sxy[i] - mx[i] * my[i];
        acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      }
      total += acc / static_cast<Real>(mx.size());
      ++planes;
    }
  }
  return total / static_cast<Real>(planes);
}

Real MetricReport::mean_psnr() const {
  if (rows.empty()) return 0.0;
  Real s = 0.0;
  for (const auto& r : rows) s += r.psnr;
  return s / static_cast<Real>(rows.size());
}

Real MetricReport::mean_ssim() const {
  if (rows.empty()) return 0.0;
  Real s = 0.0;
  for (const auto& r : rows) s += r.ssim;
  return s / static_cast<Real>(rows.size());
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "\t%.4f\t%.6f\n", r.psnr, r.ssim);
    os << r.id << buf;
  }
  std::snprintf(buf, sizeof buf, "MEAN\t%.4f\t%.6f\n", mean_psnr(), mean_ssim());
  os << buf;
  return os.str();
}

}  // namespace cfnet
