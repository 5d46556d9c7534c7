// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "cfnet/errors.hpp"
#include "cfnet/gradcheck.hpp"
#include "cfnet/ops.hpp"
#include "cfnet/params.hpp"
#include "support.hpp"

using namespace cfnet;
using namespace cfnet::testing;

namespace {

// Max relative error between an analytic gradient tensor and central
// differences of loss() with respect to every element of `x`.
Real fd_max_rel(Tensor4& x, const Tensor4& analytic, const std::function<Real()>& loss,
                Real eps = 1e-4) {
  Real worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real n = central_difference(x, i, loss, eps);
    worst = std::max(worst, relative_error(analytic[i], n));
  }
  return worst;
}

Real fd_max_rel(std::vector<Real>& x, const std::vector<Real>& analytic,
                const std::function<Real()>& loss, Real eps = 1e-4) {
  Real worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real saved = x[i];
    x[i] = saved + eps;
    const Real up = loss();
    x[i] = saved - eps;
    const Real down = loss();
    x[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * eps)));
  }
  return worst;
}

}  // namespace

TEST_SUITE("tensor_core") {
  TEST_CASE("tensor storage matches its dims") {
    Tensor4 t(2, 3, 4, 5);
    CHECK(t.size() == 120);
    CHECK(t.index(1, 2, 3, 4) == 119);
    CHECK_THROWS_AS(Tensor4(Shape4{1, 1, 2, 2}, std::vector<Real>(3)), ShapeError);
  }

  TEST_CASE("param store keeps grad dims and aliases shared groups") {
    ParamStore store;
    Param& a = store.add("core.w", Shape4{2, 3, 1, 1});
    CHECK(a.grad.shape() == a.value.shape());
    Param& b = store.share("stage2.core.w", "core.w");
    CHECK(&a == &b);
    b.value[0] = 4.0;
    CHECK(store.at("core.w").value[0] == 4.0);
    store.add("port.w", Shape4{1, 1, 1, 4});
    CHECK(store.scalar_count() == 10);  // shared group counted once
    CHECK(store.unique().size() == 2);
    CHECK_THROWS_AS(store.at("missing"), Error);
    CHECK_THROWS_AS(store.add("core.w", Shape4{1, 1, 1, 1}), Error);
  }

  TEST_CASE("checkpoint round trip and corruption") {
    const std::string dir = scratch_dir("ckpt");
    ParamStore store;
    store.add("a", Shape4{1, 2, 3, 3}).value = random_tensor(Shape4{1, 2, 3, 3}, 1);
    store.add("b", Shape4{1, 1, 1, 5}).value = random_tensor(Shape4{1, 1, 1, 5}, 2);
    checkpoint::write(dir + "/m.ckpt", checkpoint::from_store(store));

    ParamStore other;
    other.add("a", Shape4{1, 2, 3, 3});
    other.add("b", Shape4{1, 1, 1, 5});
    checkpoint::load_into(other, checkpoint::read(dir + "/m.ckpt"));
    CHECK(bit_equal(other.at("a").value, store.at("a").value));
    CHECK(bit_equal(other.at("b").value, store.at("b").value));

    ParamStore wrong;
    wrong.add("a", Shape4{1, 2, 3, 4});
    wrong.add("b", Shape4{1, 1, 1, 5});
    CHECK_THROWS_AS(checkpoint::load_into(wrong, checkpoint::read(dir + "/m.ckpt")),
                    CheckpointError);

    std::ofstream(dir + "/bad.ckpt", std::ios::binary) << "CFN1garbage";
    CHECK_THROWS_AS(checkpoint::read(dir + "/bad.ckpt"), CheckpointError);
    CHECK_THROWS_AS(checkpoint::read(dir + "/absent.ckpt"), CheckpointError);
  }

  TEST_CASE("conv2d: sum of ones in the window") {
    const ConvSpec s = ConvSpec::conv3x3(1, 1);
    const Tensor4 out = conv2d_forward(Tensor4(1, 1, 3, 3, 1.0), Tensor4(1, 1, 3, 3, 1.0), {}, s);
    CHECK(out(0, 0, 1, 1) == 9.0);
    for (auto [y, x] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}}) CHECK(out(0, 0, y, x) == 4.0);
  }

  TEST_CASE("conv2d: identity kernel") {
    const Tensor4 x = random_tensor(Shape4{2, 3, 5, 6}, 3);
    const ConvSpec s = ConvSpec::conv3x3(3, 3);
    Tensor4 w(s.weight_shape());
    for (std::size_t c = 0; c < 3; ++c) w(c, c, 1, 1) = 1.0;
    CHECK(bit_equal(conv2d_forward(x, w, std::vector<Real>(3, 0.0), s), x));
  }

  TEST_CASE("conv2d matches the six-loop oracle") {
    const ConvSpec specs[] = {ConvSpec::conv3x3(3, 4), ConvSpec::conv1x1(3, 2),
                              ConvSpec{3, 2, 3, 2, 1, false}, ConvSpec::up3x3(3, 2)};
    std::uint64_t seed = 10;
    for (const ConvSpec& s : specs) {
      for (Shape4 in : {Shape4{2, 3, 5, 5}, Shape4{1, 3, 1, 7}, Shape4{2, 3, 4, 6}}) {
        const Tensor4 x = random_tensor(in, ++seed);
        const Tensor4 w = random_tensor(s.weight_shape(), ++seed);
        const Tensor4 bt = random_tensor(Shape4{1, 1, 1, s.out_channels}, ++seed);
        const std::vector<Real> bias(bt.values().begin(), bt.values().end());
        CHECK(max_abs_diff(conv2d_forward(x, w, bias, s), naive_conv(x, w, bias, s)) < 1e-12);
      }
    }
  }

  TEST_CASE("conv2d rejects mismatched operands") {
    const ConvSpec s = ConvSpec::conv3x3(2, 3);
    CHECK_THROWS_AS(conv2d_forward(Tensor4(1, 3, 4, 4), Tensor4(s.weight_shape()), {}, s),
                    ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor4(1, 2, 4, 4), Tensor4(1, 2, 3, 3), {}, s), ShapeError);
    CHECK_THROWS_AS((ConvSpec{2, 2, 3, 1, 0, false}.validate()), ConfigError);
    CHECK_THROWS_AS((ConvSpec{2, 2, 1, 1, 1, false}.validate()), ConfigError);
    try {
      conv2d_forward(Tensor4(1, 2, 4, 4), Tensor4(3, 2, 3, 3), std::vector<Real>(2), s);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("bias") != std::string::npos);
    }
  }

  TEST_CASE("conv2d backward agrees with central differences") {
    for (const ConvSpec& s : {ConvSpec::conv3x3(2, 3), ConvSpec{2, 3, 3, 2, 1, false},
                              ConvSpec::up3x3(2, 3), ConvSpec::conv1x1(2, 3)}) {
      Tensor4 x = random_tensor(Shape4{1, 2, 4, 4}, 21);
      Tensor4 w = random_tensor(s.weight_shape(), 22);
      std::vector<Real> b{0.1, -0.2, 0.3};
      const Tensor4 probe = random_tensor(s.output_shape(x.shape()), 23);
      auto loss = [&] { return dot(conv2d_forward(x, w, b, s), probe); };
      const ConvGrads g = conv2d_backward(probe, x, w, s);
      CHECK(fd_max_rel(x, g.input, loss) < 1e-5);
      CHECK(fd_max_rel(w, g.weight, loss) < 1e-5);
      CHECK(fd_max_rel(b, g.bias, loss) < 1e-5);
    }
  }

  TEST_CASE("conv2d backward of zero grad is zero") {
    const ConvSpec s = ConvSpec::conv3x3(2, 2);
    const Tensor4 x = random_tensor(Shape4{1, 2, 4, 4}, 5);
    const ConvGrads g = conv2d_backward(Tensor4(1, 2, 4, 4), x, random_tensor(s.weight_shape(), 6), s);
    CHECK(g.input.sum() == 0.0);
    CHECK(g.weight.sum() == 0.0);
    for (Real v : g.bias) CHECK(v == 0.0);
    CHECK_THROWS_AS(conv2d_backward(Tensor4(1, 2, 3, 4), x, Tensor4(s.weight_shape()), s),
                    ShapeError);
  }

  TEST_CASE("avg_pool2") {
    const Tensor4 c = avg_pool2(Tensor4(1, 2, 4, 6, 0.7));
    for (Real v : c.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
    Tensor4 w(Shape4{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(avg_pool2(w)[0] == 2.5);
    CHECK_THROWS_AS(avg_pool2(Tensor4(1, 1, 3, 4)), ShapeError);

    // Block averages survive pool -> nearest upsample -> pool.
    const Tensor4 x = random_tensor(Shape4{2, 3, 6, 8}, 7);
    CHECK(max_abs_diff(avg_pool2(upsample_nearest2(avg_pool2(x))), avg_pool2(x)) < 1e-15);

    const Tensor4 probe = random_tensor(Shape4{2, 3, 3, 4}, 8);
    Tensor4 xv = x;
    CHECK(fd_max_rel(xv, avg_pool2_backward(probe), [&] { return dot(avg_pool2(xv), probe); }) <
          1e-5);
  }

  TEST_CASE("prelu") {
    const std::vector<Real> slope{0.25};
    CHECK(prelu(Tensor4(1, 1, 1, 1, -2.0), slope)[0] == -0.5);
    const Tensor4 pos = random_tensor(Shape4{1, 1, 3, 3}, 9, 0.0, 2.0);
    CHECK(bit_equal(prelu(pos, slope), pos));
    CHECK_THROWS_AS(prelu(Tensor4(1, 2, 2, 2), slope), ShapeError);

    // Keep inputs away from the kink for finite differences.
    Tensor4 x = random_tensor(Shape4{2, 3, 4, 4}, 10);
    for (auto& v : x.values()) v += v >= 0 ? 0.1 : -0.1;
    std::vector<Real> a{0.1, 0.25, -0.3};
    const Tensor4 probe = random_tensor(x.shape(), 11);
    const PreluGrads g = prelu_backward(probe, x, a);
    auto loss = [&] { return dot(prelu(x, a), probe); };
    CHECK(fd_max_rel(x, g.input, loss) < 1e-5);
    CHECK(fd_max_rel(a, g.slope, loss) < 1e-5);
  }

  TEST_CASE("sigmoid and softplus") {
    CHECK(sigmoid(Tensor4(1, 1, 1, 1, 0.0))[0] == 0.5);
    Real prev = 0.5;
    for (Real x = 1.0; x <= 64.0; x *= 2.0) {
      const Real y = sigmoid(Tensor4(1, 1, 1, 1, x))[0];
      CHECK(y >= prev);
      CHECK(y <= 1.0);
      prev = y;
    }
    CHECK(prev == doctest::Approx(1.0));
    const Tensor4 big(Shape4{1, 1, 1, 3}, {800.0, -800.0, 0.0});
    const Tensor4 sp = softplus(big);
    CHECK(sp.all_finite());
    CHECK(sp[0] == 800.0);
    CHECK(sp[1] >= 0.0);
    CHECK(sp[2] == doctest::Approx(std::log(2.0)));

    Tensor4 x = random_tensor(Shape4{1, 2, 3, 3}, 12, -4.0, 4.0);
    const Tensor4 probe = random_tensor(x.shape(), 13);
    CHECK(fd_max_rel(x, sigmoid_backward(probe, sigmoid(x)),
                     [&] { return dot(sigmoid(x), probe); }) < 1e-5);
    CHECK(fd_max_rel(x, softplus_backward(probe, x), [&] { return dot(softplus(x), probe); }) <
          1e-5);
  }

  TEST_CASE("elementwise ops") {
    Tensor4 a = random_tensor(Shape4{2, 2, 3, 3}, 14);
    Tensor4 b = random_tensor(Shape4{2, 2, 3, 3}, 15);
    CHECK(max_abs_diff(sub(add(a, b), b), a) < 1e-15);
    CHECK_THROWS_AS(add(a, Tensor4(2, 2, 3, 4)), ShapeError);
    CHECK_THROWS_AS(mul(a, Tensor4(1, 2, 3, 3)), ShapeError);
    const Tensor4 probe = random_tensor(a.shape(), 16);
    const auto [ga, gb] = mul_backward(probe, a, b);
    auto loss = [&] { return dot(mul(a, b), probe); };
    CHECK(fd_max_rel(a, ga, loss) < 1e-5);
    CHECK(fd_max_rel(b, gb, loss) < 1e-5);
  }

  TEST_CASE("concat and split") {
    const Tensor4 a = random_tensor(Shape4{2, 3, 4, 4}, 17);
    const Tensor4 b = random_tensor(Shape4{2, 2, 4, 4}, 18);
    CHECK(bit_equal(concat_channels(a, Tensor4(2, 0, 4, 4)), a));
    const Tensor4 ab = concat_channels(a, b);
    CHECK(ab.c() == 5);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < 16; ++p) CHECK(ab.plane(n, c)[p] == a.plane(n, c)[p]);
    const auto [ra, rb] = split_channels(ab, 3);
    CHECK(bit_equal(ra, a));
    CHECK(bit_equal(rb, b));
    CHECK_THROWS_AS(concat_channels(a, Tensor4(2, 2, 4, 5)), ShapeError);
  }

  TEST_CASE("finite in, finite out; deterministic") {
    const Tensor4 x = random_tensor(Shape4{2, 4, 8, 8}, 19, -5.0, 5.0);
    const ConvSpec s = ConvSpec::conv3x3(4, 4);
    const Tensor4 w = random_tensor(s.weight_shape(), 20);
    const std::vector<Real> slope(4, 0.25);
    const Tensor4 y1 = softplus(sigmoid(prelu(conv2d_forward(avg_pool2(x), w, {}, s), slope)));
    const Tensor4 y2 = softplus(sigmoid(prelu(conv2d_forward(avg_pool2(x), w, {}, s), slope)));
    CHECK(y1.all_finite());
    CHECK(bit_equal(y1, y2));
  }

  TEST_CASE("primitive gradcheck scope passes at 1e-5") {
    ArchConfig arch;
    for (const auto& r : run_gradcheck(GradScope::kPrimitive, arch, 50, 7)) {
      INFO(r.to_text());
      CHECK(r.tolerance == kPrimitiveTolerance);
      CHECK(r.passed);
    }
  }
}
