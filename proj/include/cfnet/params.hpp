// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cfnet/tensor.hpp"

namespace cfnet {

/// A learnable tensor and its accumulated gradient (always the same dims).
struct Param {
  Tensor4 value;
  Tensor4 grad;

  explicit Param(Shape4 shape) : value(shape), grad(shape) {}
  const Shape4& shape() const { return value.shape(); }
};

struct ParamEntry {
  std::string name;
  std::shared_ptr<Param> param;
  /// Canonical name of the shared value; empty for unshared entries.
  std::string group;
};

/// Ordered name -> Param registry. Entries created by share() alias an
/// existing Param, so every entry of one shared group sees the same value and
/// gradient storage.
class ParamStore {
 public:
  Param& add(const std::string& name, Shape4 shape);
  Param& share(const std::string& name, const std::string& source);

  bool contains(const std::string& name) const;
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  const std::vector<ParamEntry>& entries() const { return entries_; }

  /// Distinct parameters in first-registration order, keyed by the name they
  /// were first registered under.
  std::vector<std::pair<std::string, Param*>> unique() const;

  /// Number of scalar parameters, each shared group counted once.
  std::size_t scalar_count() const;
  /// Scalar count over unique parameters whose canonical name starts with
  /// `prefix`.
  std::size_t scalar_count(const std::string& prefix) const;

  void zero_grad();

 private:
  const ParamEntry* find(const std::string& name) const;

  std::vector<ParamEntry> entries_;
};

/// Fan-in scaled normal init, std = gain / sqrt(fan_in).
void kaiming_init(Param& p, std::size_t fan_in, std::uint64_t seed, double gain = 1.4142135623730951);

/// Binary tensor container: "CFN1", then per entry a u32 LE name length, the
/// name bytes, four u32 LE dims, and the payload as fp64 LE.
namespace checkpoint {

using Entry = std::pair<std::string, Tensor4>;

void write(const std::string& path, const std::vector<Entry>& entries);
std::vector<Entry> read(const std::string& path);

/// Unique parameters of `store` in registration order.
std::vector<Entry> from_store(const ParamStore& store);
/// Copies tensors into matching unique parameters. Every unique parameter must
/// be present with identical dims; unknown names are ignored.
void load_into(ParamStore& store, const std::vector<Entry>& entries);

}  // namespace checkpoint

}  // namespace cfnet
