// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "cfnet/params.hpp"

namespace cfnet {

/// Adam moments aligned with ParamStore::unique().
struct AdamState {
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor4> m;
  std::vector<Tensor4> v;

  static AdamState for_store(const ParamStore& store);
};

/// One bias-corrected Adam update over the unique parameters in registration
/// order, then zeroes all gradients. A non-finite gradient aborts the step
/// before anything is modified and throws NumericalError naming the
/// parameter.
void adam_step(ParamStore& store, AdamState& state, Real lr);

struct ScheduleValue {
  Real lr = 0.0;
  Real lambda = 0.0;
  Real base_lr = 0.0;  // halving envelope, before cosine modulation
};

/// base = lr_init · 0.5^(iter / period); inside each period the learning rate
/// follows a cosine from base down to 0.1·base. λ follows the envelope only.
ScheduleValue lr_schedule(std::uint64_t iter, Real lr_init, Real lambda_init,
                          std::uint64_t halving_period);

}  // namespace cfnet
