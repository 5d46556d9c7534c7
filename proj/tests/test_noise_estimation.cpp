// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "cfnet/errors.hpp"
#include "cfnet/gradcheck.hpp"
#include "cfnet/network.hpp"
#include "cfnet/noise_estimation.hpp"
#include "support.hpp"

using namespace cfnet;
using namespace cfnet::testing;

TEST_SUITE("noise_estimation") {
  TEST_CASE("atb: scale strictly inside (0, 1)") {
    ParamStore store;
    AffineTransformBlock atb(store, "atb", 8, AffineMode::kAffine, 1);
    perturb_zero_params(store, 1, 1.0);
    AffineTransformBlock::Cache cache;
    atb.forward(random_tensor(Shape4{2, 8, 5, 5}, 1, -3.0, 3.0), &cache);
    for (Real v : cache.scale_out.values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  TEST_CASE("atb: constant in, constant out") {
    ParamStore store;
    AffineTransformBlock atb(store, "atb", 8, AffineMode::kAffine, 2);
    perturb_zero_params(store, 2);
    Tensor4 x(1, 8, 4, 4);
    for (std::size_t c = 0; c < 8; ++c) std::fill_n(x.plane(0, c), 16, 0.1 * c - 0.3);
    const Tensor4 y = atb.forward(x, nullptr);
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t p = 1; p < 16; ++p) CHECK(y.plane(0, c)[p] == y.plane(0, c)[0]);
  }

  TEST_CASE("atb: suppressed heads give ~zero output") {
    ParamStore store;
    AffineTransformBlock atb(store, "atb", 8, AffineMode::kAffine, 3);
    for (std::size_t i = 0; i < 2; ++i) {
      atb.translate_head().conv(i).weight().value.fill(0.0);
      atb.translate_head().conv(i).bias().value.fill(0.0);
    }
    atb.scale_head().conv(1).weight().value.fill(0.0);
    atb.scale_head().conv(1).bias().value.fill(-40.0);
    const Tensor4 y = atb.forward(random_tensor(Shape4{1, 8, 4, 4}, 3), nullptr);
    for (Real v : y.values()) CHECK(std::abs(v) < 1e-15);
  }

  TEST_CASE("atb: channel mismatch") {
    ParamStore store;
    AffineTransformBlock atb(store, "atb", 8, AffineMode::kAffine, 4);
    CHECK_THROWS_AS(atb.forward(Tensor4(1, 6, 4, 4), nullptr), ShapeError);
  }

  TEST_CASE("atb gradients") {
    for (AffineMode mode : {AffineMode::kAffine, AffineMode::kConvStack}) {
      ParamStore store;
      AffineTransformBlock atb(store, "atb", 8, mode, 5);
      perturb_zero_params(store, 5);
      Param& x = store.add("input", Shape4{1, 8, 4, 4});
      x.value = random_tensor(x.shape(), 6);
      const Tensor4 probe = random_tensor(x.shape(), 7);
      GradcheckOptions opt;
      opt.tolerance = kBlockTolerance;
      opt.samples = 80;
      const auto r = check_gradients(
          "atb", store, [&] { return dot(atb.forward(x.value, nullptr), probe); },
          [&] {
            AffineTransformBlock::Cache c;
            atb.forward(x.value, &c);
            x.grad += atb.backward(probe, c);
          },
          opt);
      INFO(r.to_text());
      CHECK(r.passed);
    }
  }

  TEST_CASE("nem stage: shapes, softplus sigma, errors") {
    ParamStore store;
    NemStageConfig cfg{1, 16, 8, 1};
    NoiseEstimationStage s1(store, "nem1", cfg, AffineMode::kAffine, nullptr, 1);
    NoiseEstimationStage s2(store, "nem2", NemStageConfig{32, 32, 8, 0}, AffineMode::kAffine,
                            &s1.core(), 1);
    perturb_zero_params(store, 8, 1.0);
    const auto o1 = s1.forward(random_tensor(Shape4{2, 1, 8, 8}, 8, -4.0, 4.0), nullptr);
    CHECK(o1.features.shape() == Shape4{2, 16, 8, 8});
    CHECK(o1.sigma.shape() == Shape4{2, 1, 8, 8});
    for (Real v : o1.sigma.values()) CHECK(v >= 0.0);
    const auto o2 = s2.forward(random_tensor(Shape4{2, 32, 4, 4}, 9), nullptr);
    CHECK(o2.features.shape() == Shape4{2, 32, 4, 4});
    CHECK(o2.sigma.empty());
    CHECK_THROWS_AS(s2.forward(Tensor4(1, 16, 4, 4), nullptr), ShapeError);
  }

  TEST_CASE("nem parameter count: core once plus per-stage ports") {
    ArchConfig arch;
    arch.width_plan = {8, 16, 32, 32, 16, 8};
    arch.g = 8;
    arch.nem_width = 16;
    CFNet net(arch);
    const ParamStore& ps = net.params();

    std::size_t ports = 0;
    for (std::size_t i = 1; i <= kStages; ++i) {
      const std::string p = "nem" + std::to_string(i);
      ports += ps.scalar_count(p + ".in_port") + ps.scalar_count(p + ".out_port") +
               ps.scalar_count(p + ".sigma");
    }
    const std::size_t core = ps.scalar_count("nem1.core");
    CHECK(core > 0);
    for (std::size_t i = 2; i <= kStages; ++i) {
      CHECK(ps.scalar_count("nem" + std::to_string(i) + ".core") == 0);  // aliases only
    }
    CHECK(ps.scalar_count("nem") == core + ports);

    // Every later core entry aliases the stage-1 value.
    std::size_t aliases = 0;
    for (const auto& e : ps.entries()) {
      if (e.name.rfind("nem4.core", 0) == 0) {
        ++aliases;
        CHECK(e.group.rfind("nem1.core", 0) == 0);
        CHECK(&ps.at(e.name) == &ps.at(e.group));
      }
    }
    CHECK(aliases > 0);
  }

  TEST_CASE("nem gradcheck scope passes at 1e-4") {
    for (const auto& r : run_gradcheck(GradScope::kNem, ArchConfig{}, 50, 11)) {
      INFO(r.to_text());
      CHECK(r.passed);
    }
  }
}
