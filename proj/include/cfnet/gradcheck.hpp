// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfnet/network.hpp"
#include "cfnet/params.hpp"

namespace cfnet {

inline constexpr Real kPrimitiveTolerance = 1e-5;
inline constexpr Real kBlockTolerance = 1e-4;
inline constexpr Real kFullTolerance = 1e-3;

/// |a - n| / max(|a|, |n|, floor). The floor keeps gradients that are zero up
/// to round-off from dominating the report.
inline constexpr Real kRelErrorFloor = 1e-6;
Real relative_error(Real analytic, Real numeric, Real floor = kRelErrorFloor);

struct GradcheckSample {
  std::string param;
  std::size_t index = 0;
  Real analytic = 0.0;
  Real numeric = 0.0;
  Real rel_error = 0.0;
  Real step = 0.0;
};

struct GradcheckReport {
  std::string name;
  Real tolerance = 0.0;
  std::vector<GradcheckSample> samples;
  Real max_rel_error = 0.0;
  std::string worst_param;  // parameter of the worst sample
  bool passed = true;

  std::string to_text() const;
};

struct GradcheckOptions {
  std::size_t samples = 50;  // >= scalar count: every scalar is checked
  std::uint64_t seed = 7;
  /// Central-difference steps. With several, each sample keeps the estimate
  /// closest to the analytic value: large steps may straddle a PReLU kink,
  /// small ones lose digits to round-off, and a wrong gradient matches
  /// neither.
  std::vector<Real> steps{1e-5};
  Real tolerance = kBlockTolerance;
};

/// Central-difference check of every parameter in `store`. `loss` evaluates
/// the scalar objective from the current parameter values; `gradient` fills
/// the parameter gradients (they are zeroed beforehand). Samples are drawn by
/// first picking a parameter uniformly, then an element.
GradcheckReport check_gradients(const std::string& name, ParamStore& store,
                                const std::function<Real()>& loss,
                                const std::function<void()>& gradient,
                                const GradcheckOptions& opt);

enum class GradScope { kPrimitive, kCfb, kNem, kFull };
GradScope parse_grad_scope(const std::string& s);

/// Runs the built-in checks for a scope: every differentiable primitive;
/// CFB and CDM blocks; ATB and NEM blocks; or the full network of `arch`
/// (16×16 input, all parameters perturbed away from their zero inits).
std::vector<GradcheckReport> run_gradcheck(GradScope scope, const ArchConfig& arch,
                                           std::size_t samples, std::uint64_t seed);

/// Replaces every all-zero parameter with random values of std `scale`
/// (divided by sqrt(fan-in) if `per_fan_in`), so that gradients flow through
/// zero-initialised residual branches.
void perturb_zero_params(ParamStore& store, std::uint64_t seed, Real scale = 0.1,
                         bool per_fan_in = false);

}  // namespace cfnet
