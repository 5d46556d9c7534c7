// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cfnet/errors.hpp"

namespace cfnet {

AdamState AdamState::for_store(const ParamStore& store) {
  AdamState s;
  for (const auto& [name, p] : store.unique()) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

void adam_step(ParamStore& store, AdamState& state, Real lr) {
  const auto params = store.unique();
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ParameterError("adam state does not match the parameter store");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Param& p = *params[i].second;
    if (state.m[i].shape() != p.shape()) {
      throw ShapeError("adam moment for " + params[i].first + " has dims " +
                       to_string(state.m[i].shape()) + ", parameter has " + to_string(p.shape()));
    }
    if (!p.grad.all_finite()) {
      throw NumericalError("non-finite gradient in parameter " + params[i].first);
    }
  }

  ++state.step;
  const Real t = static_cast<Real>(state.step);
  const Real c1 = 1.0 - std::pow(state.beta1, t);
  const Real c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i].second;
    Real* m = state.m[i].data();
    Real* v = state.v[i].data();
    Real* w = p.value.data();
    const Real* g = p.grad.data();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
  store.zero_grad();
}

ScheduleValue lr_schedule(std::uint64_t iter, Real lr_init, Real lambda_init,
                          std::uint64_t halving_period) {
  if (halving_period == 0) throw ParameterError("halving period must be positive");
  const std::uint64_t k = iter / halving_period;
  const Real envelope = std::ldexp(1.0, -static_cast<int>(std::min<std::uint64_t>(k, 1000)));
  const Real phase =
      static_cast<Real>(iter % halving_period) / static_cast<Real>(halving_period);
  const Real cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
  ScheduleValue out;
  out.base_lr = lr_init * envelope;
  out.lr = out.base_lr * (0.1 + 0.9 * cosine);
  out.lambda = lambda_init * envelope;
  return out;
}

}  // namespace cfnet
