// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit and acceptance tests: random tensors and
// brute-force reference implementations that do not touch library code.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "cfnet/cond_filter.hpp"
#include "cfnet/ops.hpp"
#include "cfnet/random.hpp"
#include "cfnet/tensor.hpp"

namespace cfnet::testing {

inline Tensor4 random_tensor(Shape4 shape, std::uint64_t seed, Real lo = -1.0, Real hi = 1.0) {
  Tensor4 t(shape);
  CounterRng rng(seed, 0x7E57);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Real max_abs_diff(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) return INFINITY;
  Real m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Real mean_abs_diff(const Tensor4& a, const Tensor4& b) {
  Real s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<Real>(a.size());
}

inline Real dot(const Tensor4& a, const Tensor4& b) {
  Real s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool bit_equal(const Tensor4& a, const Tensor4& b) {
  return a.shape() == b.shape() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

/// Six nested loops over (b, o, y, x, i, window), zero padding.
inline Tensor4 naive_conv(const Tensor4& in, const Tensor4& w, const std::vector<Real>& bias,
                          const ConvSpec& s) {
  const std::size_t k = s.kernel_size;
  if (s.transposed) {
    Tensor4 out(in.n(), s.out_channels, 2 * in.h(), 2 * in.w());
    for (std::size_t b = 0; b < in.n(); ++b)
      for (std::size_t o = 0; o < s.out_channels; ++o)
        for (std::size_t i = 0; i < s.in_channels; ++i)
          for (std::size_t y = 0; y < in.h(); ++y)
            for (std::size_t x = 0; x < in.w(); ++x)
              for (std::size_t kh = 0; kh < k; ++kh)
                for (std::size_t kw = 0; kw < k; ++kw) {
                  const long oy = static_cast<long>(2 * y + kh) - 1;
                  const long ox = static_cast<long>(2 * x + kw) - 1;
                  if (oy < 0 || ox < 0 || oy >= static_cast<long>(out.h()) ||
                      ox >= static_cast<long>(out.w()))
                    continue;
                  out(b, o, oy, ox) += w(o, i, kh, kw) * in(b, i, y, x);
                }
    for (std::size_t b = 0; b < out.n(); ++b)
      for (std::size_t o = 0; o < out.c(); ++o)
        for (std::size_t p = 0; p < out.h() * out.w(); ++p)
          out.plane(b, o)[p] += bias.empty() ? 0.0 : bias[o];
    return out;
  }
  const std::size_t oh = (in.h() + 2 * s.padding - k) / s.stride + 1;
  const std::size_t ow = (in.w() + 2 * s.padding - k) / s.stride + 1;
  Tensor4 out(in.n(), s.out_channels, oh, ow);
  for (std::size_t b = 0; b < in.n(); ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          Real acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t i = 0; i < s.in_channels; ++i)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long iy = static_cast<long>(y * s.stride + kh) - static_cast<long>(s.padding);
                const long ix = static_cast<long>(x * s.stride + kw) - static_cast<long>(s.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h()) ||
                    ix >= static_cast<long>(in.w()))
                  continue;
                acc += w(o, i, kh, kw) * in(b, i, iy, ix);
              }
          out(b, o, y, x) = acc;
        }
  return out;
}

/// Content-aware filtering written directly from its definition:
/// out(b,c,y,x) = Σ_{u,v} τ(b, c/r, u·k+v, y, x) · in(b, c, y+u−k/2, x+v−k/2).
inline Tensor4 naive_conditional_conv(const Tensor4& in, const KernelField& tau, std::size_t k,
                                      std::size_t g) {
  const std::size_t r = in.c() / g;
  const long half = static_cast<long>(k / 2);
  Tensor4 out(in.shape());
  for (std::size_t b = 0; b < in.n(); ++b)
    for (std::size_t c = 0; c < in.c(); ++c)
      for (std::size_t y = 0; y < in.h(); ++y)
        for (std::size_t x = 0; x < in.w(); ++x) {
          Real acc = 0.0;
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const long yy = static_cast<long>(y + u) - half;
              const long xx = static_cast<long>(x + v) - half;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(in.h()) ||
                  xx >= static_cast<long>(in.w()))
                continue;
              acc += tau.at(b, c / r, u * k + v, y, x) * in(b, c, yy, xx);
            }
          out(b, c, y, x) = acc;
        }
  return out;
}

/// Central difference of f with respect to t[i].
inline Real central_difference(Tensor4& t, std::size_t i, const std::function<Real()>& f,
                               Real eps = 1e-6) {
  const Real saved = t[i];
  t[i] = saved + eps;
  const Real up = f();
  t[i] = saved - eps;
  const Real down = f();
  t[i] = saved;
  return (up - down) / (2 * eps);
}

/// Fresh per-test scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("cfnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace cfnet::testing
