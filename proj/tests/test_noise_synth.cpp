// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "cfnet/errors.hpp"
#include "cfnet/noise_synth.hpp"
#include "support.hpp"

using namespace cfnet;
using namespace cfnet::testing;

TEST_SUITE("noise_synth") {
  TEST_CASE("awgn: zero sigma is the identity") {
    const Tensor4 clean = random_tensor(Shape4{1, 1, 8, 8}, 1, 0.0, 1.0);
    const NoisyPair p = synth_awgn(clean, 0.0, 5);
    CHECK(bit_equal(p.noisy, clean));
    CHECK(p.sigma.sum() == 0.0);
    CHECK_THROWS_AS(synth_awgn(clean, -1.0, 5), ParameterError);
  }

  TEST_CASE("awgn: seeded, unclipped, constant sigma map") {
    const Tensor4 clean(1, 1, 64, 64, 0.99);
    const NoisyPair a = synth_awgn(clean, 25.0, 11);
    const NoisyPair b = synth_awgn(clean, 25.0, 11);
    const NoisyPair c = synth_awgn(clean, 25.0, 12);
    CHECK(bit_equal(a.noisy, b.noisy));
    CHECK_FALSE(bit_equal(a.noisy, c.noisy));
    bool above_one = false;
    for (Real v : a.noisy.values()) above_one = above_one || v > 1.0;
    CHECK(above_one);
    for (Real v : a.sigma.values()) CHECK(v == 25.0 / 255.0);
  }

  TEST_CASE("awgn: noise is uncorrelated with intensity") {
    // A ramp covering [0, 1], 1024×1024 pixels.
    const std::size_t n = 1024;
    Tensor4 clean(1, 1, n, n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) clean(0, 0, y, x) = static_cast<Real>(x) / (n - 1);
    const NoisyPair p = synth_awgn(clean, 25.0, 3);
    Real sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const Real count = static_cast<Real>(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
      const Real a = clean[i];
      const Real b = std::abs(p.noisy[i] - clean[i]);
      sx += a;
      sy += b;
      sxx += a * a;
      syy += b * b;
      sxy += a * b;
    }
    const Real cov = sxy / count - (sx / count) * (sy / count);
    const Real r = cov / std::sqrt((sxx / count - sx * sx / (count * count)) *
                                   (syy / count - sy * sy / (count * count)));
    CHECK(std::abs(r) < 0.01);
  }

  TEST_CASE("hetero: closed-form sigma maps") {
    const Tensor4 clean = random_tensor(Shape4{1, 1, 16, 16}, 2, 0.0, 1.0);
    NoiseParams p{0.0, 0.03};
    const Tensor4 s = hetero_sigma_map(clean, p, IspConfig{});
    for (Real v : s.values()) CHECK(v == doctest::Approx(0.03).epsilon(1e-14));

    const NoisyPair u = add_hetero_noise(Tensor4(1, 1, 8, 8, 1.0), NoiseParams{0.1, 0.0}, 4);
    for (Real v : u.sigma.values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-14));

    // Variance never drops below the stationary floor.
    const NoiseParams q{0.12, 0.02};
    const Tensor4 floor_map = hetero_sigma_map(clean, q, IspConfig{});
    for (Real v : floor_map.values()) CHECK(v * v >= 0.02 * 0.02);
  }

  TEST_CASE("hetero: zero parameters leave the image alone") {
    const Tensor4 clean = random_tensor(Shape4{1, 3, 8, 8}, 3, 0.0, 1.0);
    const NoisyPair p = synth_hetero(clean, NoiseParams{0.0, 0.0}, IspConfig{}, 9);
    CHECK(max_abs_diff(p.noisy, clean) < 1e-12);
    CHECK(p.sigma.sum() == 0.0);
  }

  TEST_CASE("hetero: sigma map does not depend on the noise seed") {
    const Tensor4 clean = random_tensor(Shape4{1, 1, 16, 16}, 4, 0.0, 1.0);
    const NoiseParams p{0.1, 0.02};
    const NoisyPair a = synth_hetero(clean, p, IspConfig{}, 1);
    const NoisyPair b = synth_hetero(clean, p, IspConfig{}, 2);
    CHECK(bit_equal(a.sigma, b.sigma));
    CHECK_FALSE(bit_equal(a.noisy, b.noisy));
    CHECK(bit_equal(a.sigma, hetero_sigma_map(clean, p, IspConfig{})));
  }

  TEST_CASE("hetero: linear-domain variance follows L·sd² + ss²") {
    const NoiseParams p{0.12, 0.03};
    for (Real L : {0.1, 0.5, 0.9}) {
      const Tensor4 irr(1, 1, 500, 400, L);
      const NoisyPair n = add_hetero_noise(irr, p, 77);
      Real s = 0, ss = 0;
      for (std::size_t i = 0; i < irr.size(); ++i) {
        const Real d = n.noisy[i] - L;
        s += d;
        ss += d * d;
      }
      const Real m = s / irr.size();
      const Real var = ss / irr.size() - m * m;
      const Real want = L * p.sigma_d * p.sigma_d + p.sigma_s * p.sigma_s;
      CHECK(std::abs(var - want) / want < 0.05);
    }
  }

  TEST_CASE("isp: clipping, gamma and quantisation") {
    const Tensor4 clean = random_tensor(Shape4{1, 1, 32, 32}, 5, 0.0, 1.0);
    IspConfig isp;
    isp.quantize_bits = 8;
    const NoisyPair p = synth_hetero(clean, NoiseParams{0.16, 0.06}, isp, 6);
    for (Real v : p.noisy.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(std::abs(v * 255.0 - std::round(v * 255.0)) < 1e-9);
    }
    isp.gamma = 0.5;
    CHECK_THROWS_AS(isp.validate(), ParameterError);
    isp.gamma = 2.2;
    isp.quantize_bits = 12;
    CHECK_THROWS_AS(isp.validate(), ParameterError);
    CHECK_THROWS_AS((NoiseParams{-0.1, 0.0}.validate()), ParameterError);
  }

  TEST_CASE("sigma range sampling") {
    CHECK(sample_sigma_range(25.0, 25.0, 1) == 25.0);
    CHECK(sample_sigma_range(0.0, 55.0, 8) == sample_sigma_range(0.0, 55.0, 8));
    CHECK_THROWS_AS(sample_sigma_range(30.0, 20.0, 1), ParameterError);
    Real sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const Real s = sample_sigma_range(0.0, 55.0, static_cast<std::uint64_t>(i));
      CHECK_MESSAGE((s >= 0.0 && s <= 55.0), "draw out of range");
      sum += s;
    }
    CHECK(std::abs(sum / n - 27.5) / 27.5 < 0.01);
  }
}
