// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <iostream>

#include "cfnet/errors.hpp"
#include "cfnet/gradcheck.hpp"
#include "cfnet/network.hpp"
#include "support.hpp"

using namespace cfnet;
using namespace cfnet::testing;

namespace {

ArchConfig small_arch() {
  ArchConfig a;
  a.width_plan = {8, 16, 32, 32, 16, 8};
  a.g = 8;
  a.nem_width = 16;
  return a;
}

}  // namespace

TEST_SUITE("cfnet") {
  TEST_CASE("arch config validation and text round trip") {
    ArchConfig a = ArchConfig::desk();
    CHECK_NOTHROW(a.validate());
    CHECK(ArchConfig::parse(a.to_text()) == a);
    CHECK(ArchConfig::full_width().width_plan[2] == 256);

    ArchConfig asym = a;
    asym.width_plan = {16, 32, 64, 64, 32, 32};
    CHECK_THROWS_AS(asym.validate(), ConfigError);
    ArchConfig indivisible = a;
    indivisible.g = 12;
    CHECK_THROWS_AS(indivisible.validate(), ConfigError);
    CHECK_THROWS_AS(parse_variant("NO_SUCH"), ParameterError);
    CHECK(parse_variant("no_cfb") == Variant::kNoCfb);
  }

  TEST_CASE("shallow extractor: zero image, zero biases, zero features") {
    ParamStore store;
    ConvStack sfeb(store, "sfeb",
                   {{ConvSpec::conv3x3(1, 8), true},
                    {ConvSpec::conv3x3(8, 8), true},
                    {ConvSpec::conv3x3(8, 8), false}},
                   1);
    const Tensor4 f = sfeb.forward(Tensor4(2, 1, 8, 8), nullptr);
    CHECK(f.shape() == Shape4{2, 8, 8, 8});
    CHECK(f.sum() == 0.0);
    CHECK_THROWS_AS(sfeb.forward(Tensor4(1, 3, 8, 8), nullptr), ShapeError);
  }

  TEST_CASE("denoising module: shapes, skip, degenerate t = 0") {
    ParamStore store;
    const CfbConfig cfb{3, 8, 16};
    DenoisingModule cdm(store, "cdm", 16, 2, cfb, true, 1);
    DenoisingModule frb_only(store, "frb", 16, 0, cfb, true, 2);
    perturb_zero_params(store, 3);
    const Tensor4 x = random_tensor(Shape4{1, 16, 8, 8}, 1);
    const Tensor4 noise = random_tensor(Shape4{1, 16, 8, 8}, 2);
    const Tensor4 skip = random_tensor(Shape4{1, 16, 8, 8}, 3);
    CHECK(cdm.forward(x, noise, nullptr, nullptr).shape() == x.shape());
    CHECK(cdm.blocks() == 2);

    // With t = 0 the module is its refinement block, fed features + skip.
    Tensor4 frb_out;
    const Tensor4 y = frb_only.forward(x, noise, &skip, nullptr, &frb_out);
    CHECK(frb_only.blocks() == 0);
    CHECK(bit_equal(y, frb_out));
    CHECK(bit_equal(y, frb_only.forward(add(x, skip), noise, nullptr, nullptr)));

    const Tensor4 bad_skip(1, 16, 8, 4);
    CHECK_THROWS_AS(cdm.forward(x, noise, &bad_skip, nullptr), ShapeError);
  }

  TEST_CASE("init identity: zero residual head") {
    for (Variant v : {Variant::kFull, Variant::kNoAtb, Variant::kNoCfb, Variant::kNoDne,
                      Variant::kBaseline}) {
      const CFNet net = build_ablation_variant(v, small_arch());
      const Tensor4 noisy = random_tensor(Shape4{2, 1, 12, 16}, 4, 0.0, 1.0);
      CHECK(bit_equal(net.forward(noisy).denoised, noisy));
    }
  }

  TEST_CASE("shape round trip and input errors") {
    CFNet net(small_arch());
    perturb_zero_params(net.params(), 5);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {8, 12}, {20, 16}}) {
      const auto out = net.forward(random_tensor(Shape4{1, 1, h, w}, h * w), nullptr);
      CHECK(out.denoised.shape() == Shape4{1, 1, h, w});
      CHECK(out.sigma.shape() == Shape4{1, 1, h, w});
      for (Real s : out.sigma.values()) CHECK(s >= 0.0);
    }
    CHECK_THROWS_AS(net.forward(Tensor4(1, 1, 10, 8)), ShapeError);
    CHECK_THROWS_AS(net.forward(Tensor4(1, 3, 8, 8)), ShapeError);
  }

  TEST_CASE("colour input produces a three-channel sigma map") {
    ArchConfig a = small_arch();
    a.input_channels = 3;
    const CFNet net(a);
    const auto out = net.forward(random_tensor(Shape4{1, 3, 8, 8}, 6, 0.0, 1.0));
    CHECK(out.sigma.c() == 3);
  }

  TEST_CASE("forward is deterministic and FULL equals the plain network") {
    const ArchConfig a = small_arch();
    CFNet full(a);
    CFNet variant = build_ablation_variant(Variant::kFull, a);
    perturb_zero_params(full.params(), 7);
    perturb_zero_params(variant.params(), 7);
    const Tensor4 x = random_tensor(Shape4{2, 1, 8, 8}, 7, 0.0, 1.0);
    const auto a1 = full.forward(x);
    const auto a2 = full.forward(x);
    const auto b = variant.forward(x);
    CHECK(bit_equal(a1.denoised, a2.denoised));
    CHECK(bit_equal(a1.denoised, b.denoised));
    CHECK(bit_equal(a1.sigma, b.sigma));
  }

  TEST_CASE("variant parameter counts are strictly ordered") {
    std::vector<std::pair<std::size_t, Variant>> counts;
    for (Variant v : {Variant::kFull, Variant::kNoAtb, Variant::kNoCfb, Variant::kNoDne,
                      Variant::kBaseline}) {
      const CFNet net = build_ablation_variant(v, ArchConfig::desk());
      counts.emplace_back(net.params().scalar_count(), v);
    }
    std::sort(counts.begin(), counts.end());
    std::string order;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      order += variant_name(counts[i].second) + "=" + std::to_string(counts[i].first) + " ";
      if (i > 0) CHECK(counts[i].first > counts[i - 1].first);
    }
    MESSAGE("parameter counts: " << order);
    const std::vector<Variant> want{Variant::kNoCfb, Variant::kBaseline, Variant::kNoDne,
                                    Variant::kFull, Variant::kNoAtb};
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(counts[i].second == want[i]);
  }

  TEST_CASE("shared core: stage-1 mutation reaches stage 6") {
    CFNet net(small_arch());
    perturb_zero_params(net.params(), 8);
    const Tensor4 x = random_tensor(Shape4{1, 1, 8, 8}, 8, 0.0, 1.0);
    const auto before = net.forward(x, nullptr, true);
    net.params().at("nem1.core.fuse.conv0.w").value[0] += 0.5;
    const auto after = net.forward(x, nullptr, true);
    CHECK(max_abs_diff(before.noise_features[5], after.noise_features[5]) > 1e-9);
  }

  TEST_CASE("NO_DNE: later noise features depend only on stage 1") {
    for (bool dynamic : {false, true}) {
      ArchConfig a = small_arch();
      a.components.dynamic_estimation = dynamic;
      CFNet net(a);
      perturb_zero_params(net.params(), 9);
      const Tensor4 x = random_tensor(Shape4{1, 1, 8, 8}, 9, 0.0, 1.0);
      const auto before = net.forward(x, nullptr, true);
      // Changing the first module alters every later stage input.
      net.params().at("cdm1.frb.conv0.w").value.fill(0.0);
      const auto after = net.forward(x, nullptr, true);
      for (std::size_t s = 1; s < kStages; ++s) {
        const Real d = max_abs_diff(before.noise_features[s], after.noise_features[s]);
        if (dynamic) {
          CHECK(d > 0.0);
        } else {
          CHECK(d == 0.0);
        }
      }
    }
  }

  TEST_CASE("noise-level loss reaches the shared core through stage 1 only") {
    CFNet net(small_arch());
    perturb_zero_params(net.params(), 10);
    const Tensor4 x = random_tensor(Shape4{1, 1, 8, 8}, 10, 0.0, 1.0);
    const Tensor4 probe = random_tensor(x.shape(), 11);
    auto grad_norm = [&](const std::string& name) {
      Real s = 0.0;
      for (Real v : net.params().at(name).grad.values()) s += v * v;
      return s;
    };

    // Sigma-only gradient.
    net.params().zero_grad();
    CFNet::Cache cache;
    net.forward(x, &cache);
    net.backward(Tensor4(x.shape()), probe, cache);
    CHECK(grad_norm("nem1.in_port.conv0.w") > 0.0);
    CHECK(grad_norm("nem1.core.fuse.conv0.w") > 0.0);
    for (std::size_t s = 2; s <= kStages; ++s) {
      CHECK(grad_norm("nem" + std::to_string(s) + ".in_port.conv0.w") == 0.0);
      CHECK(grad_norm("nem" + std::to_string(s) + ".out_port.conv0.w") == 0.0);
    }

    // Reconstruction-only gradient reaches every stage.
    net.params().zero_grad();
    CFNet::Cache cache2;
    net.forward(x, &cache2);
    net.backward(probe, Tensor4(), cache2);
    for (std::size_t s = 1; s <= kStages; ++s) {
      CHECK(grad_norm("nem" + std::to_string(s) + ".out_port.conv0.w") > 0.0);
    }
    for (std::size_t s = 2; s <= kStages; ++s) {
      CHECK(grad_norm("nem" + std::to_string(s) + ".in_port.conv0.w") > 0.0);
    }
  }

  TEST_CASE("stage kernels have k*k taps per position") {
    CFNet net(small_arch());
    const KernelField tau = net.stage_kernels(random_tensor(Shape4{1, 1, 8, 8}, 12), 1, 0);
    CHECK(tau.taps() == 9);
    CHECK(tau.groups() == 8);
    CHECK(tau.h() == 4);
    ArchConfig plain = small_arch();
    plain.components.conditional_filters = false;
    CHECK_THROWS_AS(CFNet(plain).stage_kernels(Tensor4(1, 1, 8, 8), 0, 0), Error);
  }

  TEST_CASE("full network gradcheck at (8,16,32,32,16,8)") {
    ArchConfig a;
    a.width_plan = {8, 16, 32, 32, 16, 8};
    a.g = 8;
    for (const auto& r : run_gradcheck(GradScope::kFull, a, 50, 7)) {
      INFO(r.to_text());
      CHECK(r.tolerance == kFullTolerance);
      CHECK(r.passed);
    }
  }
}
