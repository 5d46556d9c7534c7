// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cfnet/data.hpp"
#include "cfnet/errors.hpp"
#include "cfnet/noise_synth.hpp"
#include "cfnet/objectives.hpp"
#include "support.hpp"

using namespace cfnet;
using namespace cfnet::testing;

namespace {

Tensor4 scalar(Real v) { return Tensor4(1, 1, 1, 1, v); }

// Direct SSIM: normalised 11×11 Gaussian (sigma 1.5) weights, statistics
// summed per window without separable filtering.
Real naive_ssim(const Tensor4& a, const Tensor4& b) {
  Real wsum = 0.0;
  Real w[11][11];
  for (int u = 0; u < 11; ++u)
    for (int v = 0; v < 11; ++v) {
      w[u][v] = std::exp(-((u - 5) * (u - 5) + (v - 5) * (v - 5)) / (2 * 1.5 * 1.5));
      wsum += w[u][v];
    }
  const Real c1 = 1e-4, c2 = 9e-4;
  Real total = 0.0;
  int count = 0;
  for (std::size_t y = 0; y + 11 <= a.h(); ++y)
    for (std::size_t x = 0; x + 11 <= a.w(); ++x) {
      Real mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int u = 0; u < 11; ++u)
        for (int v = 0; v < 11; ++v) {
          const Real p = a(0, 0, y + u, x + v), q = b(0, 0, y + u, x + v), k = w[u][v] / wsum;
          mx += k * p;
          my += k * q;
          sxx += k * p * p;
          syy += k * q * q;
          sxy += k * p * q;
        }
      const Real vx = sxx - mx * mx, vy = syy - my * my, cv = sxy - mx * my;
      total += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("asymm_loss hand-computed cases") {
    CHECK(std::abs(asymm_loss(scalar(0.5), scalar(0.4), 0.3).value - 0.003) < 1e-12);
    CHECK(std::abs(asymm_loss(scalar(0.3), scalar(0.4), 0.3).value - 0.007) < 1e-12);
    const Tensor4 s = random_tensor(Shape4{1, 1, 4, 4}, 1, 0.0, 0.2);
    const LossValue z = asymm_loss(s, s, 0.35);
    CHECK(z.value == 0.0);
    CHECK(z.grad.sum() == 0.0);
  }

  TEST_CASE("asymm_loss is a per-pixel mean") {
    Tensor4 pred(Shape4{1, 1, 1, 2}, {0.5, 0.3});
    Tensor4 gt(Shape4{1, 1, 1, 2}, {0.4, 0.4});
    CHECK(std::abs(asymm_loss(pred, gt, 0.3).value - 0.005) < 1e-12);
  }

  TEST_CASE("under-estimation costs more than over-estimation for alpha < 0.5") {
    CounterRng rng(4, 4);
    for (int i = 0; i < 2000; ++i) {
      const Real alpha = rng.uniform(1e-3, 0.499);
      const Real gt = rng.uniform(0.0, 0.3);
      const Real e = rng.uniform(1e-4, 0.1);
      const Real under = asymm_loss(scalar(gt - e), scalar(gt), alpha).value;
      const Real over = asymm_loss(scalar(gt + e), scalar(gt), alpha).value;
      CHECK_MESSAGE(under > over, "alpha=" << alpha << " gt=" << gt << " e=" << e);
    }
  }

  TEST_CASE("asymm_loss: swapping roles trades alpha for 1 - alpha") {
    const Tensor4 a = random_tensor(Shape4{2, 1, 5, 5}, 2, 0.0, 0.3);
    const Tensor4 b = random_tensor(Shape4{2, 1, 5, 5}, 3, 0.0, 0.3);
    // Per pixel one ordering weighs alpha and the other 1 - alpha, so
    // L(a, b) + L(b, a) = mean (a - b)^2.
    const Real sum = asymm_loss(a, b, 0.3).value + asymm_loss(b, a, 0.3).value;
    Real mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(sum == doctest::Approx(mse / a.size()).epsilon(1e-13));
  }

  TEST_CASE("asymm_loss errors and gradient") {
    CHECK_THROWS_AS(asymm_loss(Tensor4(1, 1, 2, 2), Tensor4(1, 1, 2, 3), 0.3), ShapeError);
    CHECK_THROWS_AS(asymm_loss(scalar(0), scalar(0), 0.0), ParameterError);
    CHECK_THROWS_AS(asymm_loss(scalar(0), scalar(0), 0.5), ParameterError);
    CHECK_THROWS_AS(asymm_loss(scalar(0), scalar(0), 0.6), ParameterError);

    Tensor4 pred = random_tensor(Shape4{1, 2, 3, 3}, 5, 0.0, 0.3);
    const Tensor4 gt = random_tensor(Shape4{1, 2, 3, 3}, 6, 0.0, 0.3);
    const Tensor4 g = asymm_loss(pred, gt, 0.35).grad;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const Real n = central_difference(pred, i, [&] { return asymm_loss(pred, gt, 0.35).value; });
      CHECK(g[i] == doctest::Approx(n).epsilon(1e-6));
    }
  }

  TEST_CASE("rec_loss") {
    const Tensor4 c = random_tensor(Shape4{1, 1, 4, 4}, 7, 0.0, 1.0);
    CHECK(rec_loss(c, c, RecNorm::kL1).value == 0.0);
    CHECK(rec_loss(c, c, RecNorm::kL2).value == 0.0);
    CHECK(rec_loss(c, c, RecNorm::kL1).grad.sum() == 0.0);  // subgradient 0 at ties
    Tensor4 off = c;
    for (auto& v : off.values()) v += 0.1;
    CHECK(rec_loss(off, c, RecNorm::kL1).value == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rec_loss(off, c, RecNorm::kL2).value == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS_AS(rec_loss(c, Tensor4(1, 1, 4, 5), RecNorm::kL2), ShapeError);
    CHECK_THROWS_AS(parse_rec_norm("l3"), Error);

    Tensor4 d = random_tensor(Shape4{1, 1, 4, 4}, 8, 0.0, 1.0);
    for (RecNorm norm : {RecNorm::kL1, RecNorm::kL2}) {
      const Tensor4 g = rec_loss(d, c, norm).grad;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (norm == RecNorm::kL1) {
          CHECK(g[i] == (d[i] > c[i] ? 1.0 : -1.0) / 16.0);
        }
        const Real n = central_difference(d, i, [&] { return rec_loss(d, c, norm).value; });
        CHECK(g[i] == doctest::Approx(n).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("total_loss") {
    CHECK(total_loss(0.3, 0.7, 0.0) == 0.3);
    CHECK(total_loss(1.0, 2.0, 0.5) == 2.0);
    CHECK(total_loss(0.3, std::nullopt, 0.5) == 0.3);
    CounterRng rng(9, 9);
    for (int i = 0; i < 200; ++i) {
      const Real r = rng.uniform(), a = rng.uniform(), l = rng.uniform(), d = rng.uniform();
      CHECK(total_loss(r + d, a, l) >= total_loss(r, a, l));
      CHECK(total_loss(r, a + d, l) >= total_loss(r, a, l));
    }
  }

  TEST_CASE("psnr") {
    const Tensor4 a = random_tensor(Shape4{1, 1, 8, 8}, 10, 0.0, 1.0);
    CHECK(psnr(a, a) == kPsnrCap);
    Tensor4 b = a;
    for (auto& v : b.values()) v += 0.1;  // MSE 0.01
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_THROWS_AS(psnr(a, Tensor4(1, 1, 8, 7)), ShapeError);

    const Tensor4 clean = fixture_images(1, 64, 3).front().image;
    Real prev = kPsnrCap;
    for (int level = 1; level <= 20; ++level) {
      const Real p = psnr(clean, synth_awgn(clean, 2.5 * level, 100).noisy);
      CHECK(p < prev);
      prev = p;
    }
  }

  TEST_CASE("ssim") {
    const Tensor4 img = fixture_images(1, 48, 5).front().image;
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
    Tensor4 inverted = img;
    for (auto& v : inverted.values()) v = 1.0 - v;
    CHECK(ssim(img, inverted) < 0.5);
    const Tensor4 noisy = synth_awgn(img, 25.0, 6).noisy;
    CHECK(std::abs(ssim(img, noisy) - ssim(noisy, img)) < 1e-12);
    CHECK(std::abs(ssim(img, noisy) - naive_ssim(img, noisy)) < 1e-12);
    CHECK_THROWS_AS(ssim(Tensor4(1, 1, 10, 20), Tensor4(1, 1, 10, 20)), ParameterError);
  }

  TEST_CASE("metric report text") {
    MetricReport r;
    r.rows = {{"a", 30.0, 0.9}, {"b", 20.0, 0.7}};
    std::istringstream in(r.to_text());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "a\t30.0000\t0.900000");
    CHECK(lines[2] == "MEAN\t25.0000\t0.800000");
  }
}
