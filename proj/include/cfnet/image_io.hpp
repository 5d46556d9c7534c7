// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "cfnet/tensor.hpp"

namespace cfnet {

/// Reads a binary PGM (P5, one channel) or PPM (P6, three channels), 8- or
/// 16-bit, into a 1×C×H×W tensor scaled to [0, 1].
Tensor4 read_pnm(const std::string& path);

/// Writes sample 0 of a 1- or 3-channel tensor as P5/P6. Values are clamped to
/// [0, 1] and rounded to `bits` (8 or 16) per sample, big-endian for 16.
void write_pnm(const std::string& path, const Tensor4& image, int bits = 8);

}  // namespace cfnet
