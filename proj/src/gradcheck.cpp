// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/gradcheck.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "cfnet/cond_filter.hpp"
#include "cfnet/errors.hpp"
#include "cfnet/layers.hpp"
#include "cfnet/noise_estimation.hpp"
#include "cfnet/objectives.hpp"
#include "cfnet/ops.hpp"
#include "cfnet/random.hpp"

namespace cfnet {

Real relative_error(Real analytic, Real numeric, Real floor) {
  const Real denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::string GradcheckReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s samples=%-5zu max_rel_err=%.3e tol=%.0e %s", name.c_str(),
                samples.size(), max_rel_error, tolerance, passed ? "PASS" : "FAIL");
  std::string s = buf;
  if (!worst_param.empty()) s += " worst=" + worst_param;
  return s;
}

GradcheckReport check_gradients(const std::string& name, ParamStore& store,
                                const std::function<Real()>& loss,
                                const std::function<void()>& gradient,
                                const GradcheckOptions& opt) {
  const auto params = store.unique();
  if (params.empty()) throw ParameterError("gradient check over an empty parameter store");
  if (opt.steps.empty()) throw ParameterError("gradient check needs at least one step size");

  store.zero_grad();
  gradient();
  std::vector<Tensor4> analytic;
  for (const auto& [n, p] : params) analytic.push_back(p->grad);

  std::vector<std::pair<std::size_t, std::size_t>> picks;
  std::size_t total = 0;
  for (const auto& [n, p] : params) total += p->value.size();
  if (opt.samples >= total) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < params[i].second->value.size(); ++j) picks.emplace_back(i, j);
  } else {
    CounterRng rng(opt.seed, name_hash(name));
    for (std::size_t s = 0; s < opt.samples; ++s) {
      const std::size_t i = rng.below(params.size());
      picks.emplace_back(i, rng.below(params[i].second->value.size()));
    }
  }

  GradcheckReport report;
  report.name = name;
  report.tolerance = opt.tolerance;
  for (const auto& [i, j] : picks) {
    Real& v = params[i].second->value[j];
    const Real saved = v;
    GradcheckSample s;
    s.param = params[i].first;
    s.index = j;
    s.analytic = analytic[i][j];
    for (std::size_t k = 0; k < opt.steps.size(); ++k) {
      const Real h = opt.steps[k];
      v = saved + h;
      const Real plus = loss();
      v = saved - h;
      const Real minus = loss();
      v = saved;
      const Real numeric = (plus - minus) / (2.0 * h);
      const Real err = relative_error(s.analytic, numeric);
      if (k == 0 || err < s.rel_error) {
        s.numeric = numeric;
        s.rel_error = err;
        s.step = h;
      }
    }
    if (!(s.rel_error <= report.max_rel_error) || report.samples.empty()) {
      report.max_rel_error = s.rel_error;
      report.worst_param = s.param;
    }
    report.samples.push_back(std::move(s));
  }
  report.passed = report.max_rel_error < opt.tolerance;
  store.zero_grad();
  return report;
}

GradScope parse_grad_scope(const std::string& s) {
  std::string m = s;
  std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return std::tolower(c); });
  if (m == "primitive") return GradScope::kPrimitive;
  if (m == "cfb") return GradScope::kCfb;
  if (m == "nem") return GradScope::kNem;
  if (m == "full") return GradScope::kFull;
  throw ParameterError("unknown gradcheck scope '" + s + "' (expected primitive, cfb, nem or full)");
}

void perturb_zero_params(ParamStore& store, std::uint64_t seed, Real scale, bool per_fan_in) {
  for (const auto& [name, p] : store.unique()) {
    const auto vals = p->value.values();
    if (std::any_of(vals.begin(), vals.end(), [](Real v) { return v != 0.0; })) continue;
    const Real std_dev =
        per_fan_in ? scale / std::sqrt(static_cast<Real>(p->value.size() / p->shape().n)) : scale;
    CounterRng rng(seed, name_hash(name));
    for (Real& v : p->value.values()) v = std_dev * rng.normal();
  }
}

namespace {

Tensor4 random_tensor(Shape4 shape, std::uint64_t seed, std::uint64_t stream, Real lo = -1.0,
                      Real hi = 1.0) {
  Tensor4 t(shape);
  CounterRng rng(seed, stream);
  for (Real& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values with |v| in [0.1, 1] so finite differences never straddle a kink.
Tensor4 away_from_zero(Shape4 shape, std::uint64_t seed, std::uint64_t stream) {
  Tensor4 t(shape);
  CounterRng rng(seed, stream);
  for (Real& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return t;
}

Real dot(const Tensor4& a, const Tensor4& b) {
  Real s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void add_grad(ParamStore& store, const std::string& name, const Tensor4& g) {
  store.at(name).grad += g;
}

void add_grad(ParamStore& store, const std::string& name, const std::vector<Real>& g) {
  Tensor4& dst = store.at(name).grad;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

/// Checks an operator via L = <forward(), probe> for a fixed random probe.
struct OpCheck {
  std::string name;
  ParamStore store;
  std::uint64_t seed;

  Param& input(const std::string& n, Shape4 shape, Tensor4 values) {
    Param& p = store.add(n, shape);
    p.value = std::move(values);
    return p;
  }
  Param& input(const std::string& n, Shape4 shape) {
    return input(n, shape, random_tensor(shape, seed, name_hash(name + n)));
  }
  const Tensor4& v(const std::string& n) { return store.at(n).value; }

  GradcheckReport run(const std::function<Tensor4()>& fwd,
                      const std::function<void(const Tensor4&)>& bwd, Real tol,
                      std::size_t samples) {
    const Tensor4 probe = random_tensor(fwd().shape(), seed, name_hash(name + "#probe"));
    GradcheckOptions opt;
    opt.samples = samples;
    opt.seed = seed;
    opt.tolerance = tol;
    return check_gradients(
        name, store, [&] { return dot(fwd(), probe); }, [&] { bwd(probe); }, opt);
  }
};

Tensor4 scalar(Real v) { return Tensor4(Shape4{1, 1, 1, 1}, v); }

std::vector<GradcheckReport> primitive_checks(std::uint64_t seed) {
  std::vector<GradcheckReport> out;
  const Real tol = kPrimitiveTolerance;
  constexpr std::size_t kAll = static_cast<std::size_t>(-1);

  auto conv_case = [&](const std::string& name, ConvSpec spec, Shape4 in) {
    OpCheck c{name, {}, seed};
    c.input("x", in);
    c.input("w", spec.weight_shape());
    c.input("b", {1, 1, 1, spec.out_channels});
    out.push_back(c.run(
        [&] { return conv2d_forward(c.v("x"), c.v("w"), c.v("b").values(), spec); },
        [&](const Tensor4& g) {
          ConvGrads cg = conv2d_backward(g, c.v("x"), c.v("w"), spec, true);
          add_grad(c.store, "x", cg.input);
          add_grad(c.store, "w", cg.weight);
          add_grad(c.store, "b", cg.bias);
        },
        tol, kAll));
  };
  conv_case("conv2d 3x3", ConvSpec::conv3x3(3, 4), {2, 3, 6, 5});
  conv_case("conv2d 1x1", ConvSpec::conv1x1(4, 3), {2, 4, 3, 5});
  conv_case("conv2d transposed 3x3/2", ConvSpec::up3x3(3, 2), {2, 3, 4, 3});

  {
    OpCheck c{"avg_pool2", {}, seed};
    c.input("x", {2, 3, 6, 4});
    out.push_back(c.run([&] { return avg_pool2(c.v("x")); },
                        [&](const Tensor4& g) { add_grad(c.store, "x", avg_pool2_backward(g)); },
                        tol, kAll));
  }
  {
    OpCheck c{"prelu", {}, seed};
    c.input("x", {2, 3, 4, 4}, away_from_zero({2, 3, 4, 4}, seed, 11));
    c.input("slope", {1, 1, 1, 3});
    out.push_back(c.run([&] { return prelu(c.v("x"), c.v("slope").values()); },
                        [&](const Tensor4& g) {
                          PreluGrads pg = prelu_backward(g, c.v("x"), c.v("slope").values());
                          add_grad(c.store, "x", pg.input);
                          add_grad(c.store, "slope", pg.slope);
                        },
                        tol, kAll));
  }
  {
    OpCheck c{"sigmoid", {}, seed};
    c.input("x", {2, 2, 3, 3}, random_tensor({2, 2, 3, 3}, seed, 12, -4.0, 4.0));
    out.push_back(c.run([&] { return sigmoid(c.v("x")); },
                        [&](const Tensor4& g) {
                          add_grad(c.store, "x", sigmoid_backward(g, sigmoid(c.v("x"))));
                        },
                        tol, kAll));
  }
  {
    OpCheck c{"softplus", {}, seed};
    c.input("x", {2, 2, 3, 3}, random_tensor({2, 2, 3, 3}, seed, 13, -6.0, 6.0));
    out.push_back(c.run([&] { return softplus(c.v("x")); },
                        [&](const Tensor4& g) {
                          add_grad(c.store, "x", softplus_backward(g, c.v("x")));
                        },
                        tol, kAll));
  }
  {
    OpCheck c{"mul", {}, seed};
    c.input("a", {2, 2, 3, 3});
    c.input("b", {2, 2, 3, 3});
    out.push_back(c.run([&] { return mul(c.v("a"), c.v("b")); },
                        [&](const Tensor4& g) {
                          auto [ga, gb] = mul_backward(g, c.v("a"), c.v("b"));
                          add_grad(c.store, "a", ga);
                          add_grad(c.store, "b", gb);
                        },
                        tol, kAll));
  }
  {
    OpCheck c{"add/sub", {}, seed};
    c.input("a", {1, 2, 3, 3});
    c.input("b", {1, 2, 3, 3});
    out.push_back(c.run([&] { return add(c.v("a"), sub(c.v("a"), c.v("b"))); },
                        [&](const Tensor4& g) {
                          Tensor4 ga = g;
                          ga *= 2.0;
                          Tensor4 gb = g;
                          gb *= -1.0;
                          add_grad(c.store, "a", ga);
                          add_grad(c.store, "b", gb);
                        },
                        tol, kAll));
  }
  {
    OpCheck c{"concat_channels", {}, seed};
    c.input("a", {2, 2, 3, 3});
    c.input("b", {2, 3, 3, 3});
    out.push_back(c.run([&] { return concat_channels(c.v("a"), c.v("b")); },
                        [&](const Tensor4& g) {
                          auto [ga, gb] = split_channels(g, 2);
                          add_grad(c.store, "a", ga);
                          add_grad(c.store, "b", gb);
                        },
                        tol, kAll));
  }
  {
    OpCheck c{"hadamard_kernels", {}, seed};
    const std::size_t g = 2, k = 3;
    c.input("mu", {2, g * k * k, 3, 3});
    c.input("gamma", {2, g * k * k, 3, 3});
    out.push_back(c.run(
        [&] {
          return hadamard_kernels(KernelField(c.v("mu"), k, g), KernelField(c.v("gamma"), k, g))
              .values();
        },
        [&](const Tensor4& grad) {
          auto [gm, gg] = hadamard_kernels_backward(KernelField(grad, k, g),
                                                    KernelField(c.v("mu"), k, g),
                                                    KernelField(c.v("gamma"), k, g));
          add_grad(c.store, "mu", gm.values());
          add_grad(c.store, "gamma", gg.values());
        },
        tol, kAll));
  }
  {
    OpCheck c{"conditional_conv", {}, seed};
    CfbConfig cfg{3, 2, 4};
    c.input("f", {2, 4, 5, 4});
    c.input("tau", {2, cfg.g * cfg.taps(), 5, 4});
    out.push_back(c.run(
        [&] { return conditional_conv(c.v("f"), KernelField(c.v("tau"), cfg.k, cfg.g), cfg); },
        [&](const Tensor4& g) {
          ConditionalConvGrads cg =
              conditional_conv_backward(g, c.v("f"), KernelField(c.v("tau"), cfg.k, cfg.g), cfg);
          add_grad(c.store, "f", cg.features);
          add_grad(c.store, "tau", cg.tau.values());
        },
        tol, kAll));
  }
  {
    // Predictions offset from the target by at least 0.1 so neither branch
    // switch nor L1 tie is crossed.
    const Shape4 s{2, 1, 4, 4};
    const Tensor4 target = random_tensor(s, seed, 21, 0.2, 0.8);
    Tensor4 pred = target;
    const Tensor4 off = away_from_zero(s, seed, 22);
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += 0.3 * off[i];
    for (Real alpha : {0.1, 0.35}) {
      OpCheck c{"asymm_loss alpha=" + std::to_string(alpha).substr(0, 4), {}, seed};
      c.input("pred", s, pred);
      out.push_back(c.run([&] { return scalar(asymm_loss(c.v("pred"), target, alpha).value); },
                          [&](const Tensor4& g) {
                            Tensor4 gr = asymm_loss(c.v("pred"), target, alpha).grad;
                            gr *= g[0];
                            add_grad(c.store, "pred", gr);
                          },
                          tol, kAll));
    }
    for (RecNorm norm : {RecNorm::kL1, RecNorm::kL2}) {
      OpCheck c{norm == RecNorm::kL1 ? "rec_loss L1" : "rec_loss L2", {}, seed};
      c.input("pred", s, pred);
      out.push_back(c.run([&] { return scalar(rec_loss(c.v("pred"), target, norm).value); },
                          [&](const Tensor4& g) {
                            Tensor4 gr = rec_loss(c.v("pred"), target, norm).grad;
                            gr *= g[0];
                            add_grad(c.store, "pred", gr);
                          },
                          tol, kAll));
    }
  }
  return out;
}

std::vector<GradcheckReport> cfb_checks(std::size_t samples, std::uint64_t seed) {
  std::vector<GradcheckReport> out;
  {
    OpCheck c{"cfb", {}, seed};
    CfbConfig cfg{3, 4, 8};
    ConditionalFilterBlock block(c.store, "cfb", cfg, 6, seed);
    perturb_zero_params(c.store, seed);
    c.input("image", {2, 8, 5, 6});
    c.input("noise", {2, 6, 5, 6});
    out.push_back(c.run([&] { return block.forward(c.v("image"), c.v("noise"), nullptr); },
                        [&](const Tensor4& g) {
                          ConditionalFilterBlock::Cache cache;
                          block.forward(c.v("image"), c.v("noise"), &cache);
                          auto gr = block.backward(g, cache);
                          add_grad(c.store, "image", gr.image);
                          add_grad(c.store, "noise", gr.noise);
                        },
                        kBlockTolerance, samples));
  }
  for (bool conditional : {true, false}) {
    OpCheck c{conditional ? "cdm" : "cdm (concat fusion)", {}, seed};
    CfbConfig cfg{3, 16, 16};
    DenoisingModule m(c.store, "cdm", 16, 2, cfg, conditional, seed);
    perturb_zero_params(c.store, seed);
    c.input("features", {1, 16, 8, 8});
    c.input("skip", {1, 16, 8, 8});
    c.input("noise", {1, 16, 8, 8});
    const Tensor4 probe_frb = random_tensor({1, 16, 8, 8}, seed, 31);
    // The refinement output also feeds a skip connection; include it.
    auto fwd = [&] {
      Tensor4 frb;
      Tensor4 y = m.forward(c.v("features"), c.v("noise"), &c.v("skip"), nullptr, &frb);
      Tensor4 both(Shape4{1, 1, 1, 1}, dot(frb, probe_frb));
      return concat_channels(y, Tensor4(Shape4{1, 1, 8, 8}, both[0] / 64.0));
    };
    out.push_back(c.run(fwd,
                        [&](const Tensor4& g) {
                          auto [gy, gs] = split_channels(g, 16);
                          Real gsum = gs.sum() / 64.0;
                          Tensor4 gfrb = probe_frb;
                          gfrb *= gsum;
                          DenoisingModule::Cache cache;
                          Tensor4 frb;
                          m.forward(c.v("features"), c.v("noise"), &c.v("skip"), &cache, &frb);
                          auto gr = m.backward(gy, gfrb, cache);
                          add_grad(c.store, "features", gr.features);
                          add_grad(c.store, "skip", gr.features);
                          add_grad(c.store, "noise", gr.noise);
                        },
                        kBlockTolerance, samples));
  }
  return out;
}

std::vector<GradcheckReport> nem_checks(std::size_t samples, std::uint64_t seed) {
  std::vector<GradcheckReport> out;
  for (AffineMode mode : {AffineMode::kAffine, AffineMode::kConvStack}) {
    OpCheck c{mode == AffineMode::kAffine ? "atb" : "atb (conv stack)", {}, seed};
    AffineTransformBlock atb(c.store, "atb", 8, mode, seed);
    c.input("x", {2, 8, 4, 5});
    out.push_back(c.run([&] { return atb.forward(c.v("x"), nullptr); },
                        [&](const Tensor4& g) {
                          AffineTransformBlock::Cache cache;
                          atb.forward(c.v("x"), &cache);
                          add_grad(c.store, "x", atb.backward(g, cache));
                        },
                        kBlockTolerance, samples));
  }
  {
    // Two stages sharing one core: gradients from both must accumulate.
    OpCheck c{"nem (shared core)", {}, seed};
    NoiseEstimationStage s1(c.store, "nem1", {1, 8, 8, 1}, AffineMode::kAffine, nullptr, seed);
    NoiseEstimationStage s2(c.store, "nem2", {8, 4, 8, 0}, AffineMode::kAffine, &s1.core(), seed);
    c.input("image", {2, 1, 4, 4});
    c.input("features", {2, 8, 4, 4});
    auto fwd = [&] {
      auto o1 = s1.forward(c.v("image"), nullptr);
      auto o2 = s2.forward(c.v("features"), nullptr);
      return concat_channels(concat_channels(o1.features, o1.sigma), o2.features);
    };
    out.push_back(c.run(fwd,
                        [&](const Tensor4& g) {
                          NoiseEstimationStage::Cache c1, c2;
                          s1.forward(c.v("image"), &c1);
                          s2.forward(c.v("features"), &c2);
                          auto [g1, g2] = split_channels(g, 9);
                          auto [gf, gs] = split_channels(g1, 8);
                          add_grad(c.store, "image", s1.backward(gf, gs, c1));
                          add_grad(c.store, "features", s2.backward(g2, Tensor4(), c2));
                        },
                        kBlockTolerance, samples));
  }
  return out;
}

GradcheckReport full_check(const ArchConfig& arch, std::size_t samples, std::uint64_t seed) {
  CFNet net(arch);
  // The conditional filters are bilinear: unscaled noise in every zero-initialised
  // branch compounds stage over stage and overflows at desk widths.
  perturb_zero_params(net.params(), seed, 0.1, true);
  const Tensor4 noisy = random_tensor({2, arch.input_channels, 16, 16}, seed, 41, 0.0, 1.0);
  const Tensor4 probe_d = random_tensor(noisy.shape(), seed, 42);
  const Tensor4 probe_s = random_tensor(noisy.shape(), seed, 43);
  GradcheckOptions opt;
  opt.samples = samples;
  opt.seed = seed;
  opt.tolerance = kFullTolerance;
  // Tens of thousands of PReLU inputs sit downstream of most parameters, so
  // larger steps occasionally straddle a kink, while gradients near 1e-6 lose
  // their digits to round-off at the smallest step.
  opt.steps = {1e-4, 1e-5, 1e-6, 1e-7};
  return check_gradients(
      "full network", net.params(),
      [&] {
        const CFNet::Output o = net.forward(noisy);
        return dot(o.denoised, probe_d) + dot(o.sigma, probe_s);
      },
      [&] {
        CFNet::Cache cache;
        net.forward(noisy, &cache);
        net.backward(probe_d, probe_s, cache);
      },
      opt);
}

}  // namespace

std::vector<GradcheckReport> run_gradcheck(GradScope scope, const ArchConfig& arch,
                                           std::size_t samples, std::uint64_t seed) {
  switch (scope) {
    case GradScope::kPrimitive:
      return primitive_checks(seed);
    case GradScope::kCfb:
      return cfb_checks(samples, seed);
    case GradScope::kNem:
      return nem_checks(samples, seed);
    case GradScope::kFull:
      return {full_check(arch, samples, seed)};
  }
  return {};
}

}  // namespace cfnet
