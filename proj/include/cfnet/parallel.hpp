// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace cfnet {

/// Worker cap: CFNET_THREADS if set and positive, else the hardware
/// concurrency. Read once per process.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Iterations are independent; results that must
/// be reduced are written to per-index slots by the caller and combined in
/// index order afterwards, so output never depends on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cfnet
