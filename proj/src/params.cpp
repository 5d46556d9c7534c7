// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "cfnet/errors.hpp"
#include "cfnet/random.hpp"

namespace cfnet {

Param& ParamStore::add(const std::string& name, Shape4 shape) {
  if (find(name)) throw ConfigError("parameter registered twice: " + name);
  entries_.push_back({name, std::make_shared<Param>(shape), {}});
  return *entries_.back().param;
}

Param& ParamStore::share(const std::string& name, const std::string& source) {
  if (find(name)) throw ConfigError("parameter registered twice: " + name);
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const ParamEntry& e) { return e.name == source; });
  if (it == entries_.end()) {
    throw ConfigError("cannot share unknown parameter " + source);
  }
  const std::string group = it->group.empty() ? it->name : it->group;
  it->group = group;
  entries_.push_back({name, it->param, group});
  return *entries_.back().param;
}

const ParamEntry* ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

bool ParamStore::contains(const std::string& name) const {
  return find(name) != nullptr;
}

Param& ParamStore::at(const std::string& name) {
  return const_cast<Param&>(std::as_const(*this).at(name));
}

const Param& ParamStore::at(const std::string& name) const {
  const ParamEntry* e = find(name);
  if (!e) throw ConfigError("unknown parameter " + name);
  return *e->param;
}

std::vector<std::pair<std::string, Param*>> ParamStore::unique() const {
  std::vector<std::pair<std::string, Param*>> out;
  std::unordered_set<const Param*> seen;
  for (const auto& e : entries_) {
    if (seen.insert(e.param.get()).second) out.emplace_back(e.name, e.param.get());
  }
  return out;
}

std::size_t ParamStore::scalar_count() const { return scalar_count(""); }

std::size_t ParamStore::scalar_count(const std::string& prefix) const {
  std::size_t total = 0;
  for (const auto& [name, p] : unique()) {
    if (name.compare(0, prefix.size(), prefix) == 0) total += p->value.size();
  }
  return total;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : unique()) p->grad.fill(0.0);
}

void kaiming_init(Param& p, std::size_t fan_in, std::uint64_t seed, double gain) {
  CounterRng rng(seed);
  const double scale = gain / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : p.value.values()) v = scale * rng.normal();
}

namespace checkpoint {
namespace {

constexpr char kMagic[4] = {'C', 'F', 'N', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
      std::uint32_t(b[3]) << 24;
  return true;
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t u = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

void write(const std::string& path, const std::vector<Entry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  for (const auto& [name, t] : entries) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape4& s = t.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) put_u32(os, static_cast<std::uint32_t>(d));
    for (Real v : t.values()) put_f64(os, v);
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

std::vector<Entry> read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(path + ": bad magic, not a CFN1 checkpoint");
  }
  std::vector<Entry> out;
  std::uint32_t len;
  while (get_u32(is, len)) {
    std::string name(len, '\0');
    std::uint32_t d[4];
    if (!is.read(name.data(), len) || !get_u32(is, d[0]) || !get_u32(is, d[1]) ||
        !get_u32(is, d[2]) || !get_u32(is, d[3])) {
      throw CheckpointError(path + ": truncated entry header");
    }
    Tensor4 t(Shape4{d[0], d[1], d[2], d[3]});
    std::vector<unsigned char> raw(t.size() * 8);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw CheckpointError(path + ": truncated payload for " + name);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::uint64_t u = 0;
      for (int k = 0; k < 8; ++k) u |= std::uint64_t(raw[i * 8 + k]) << (8 * k);
      t[i] = std::bit_cast<double>(u);
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

std::vector<Entry> from_store(const ParamStore& store) {
  std::vector<Entry> out;
  for (const auto& [name, p] : store.unique()) out.emplace_back(name, p->value);
  return out;
}

void load_into(ParamStore& store, const std::vector<Entry>& entries) {
  for (auto& [name, p] : store.unique()) {
    auto it = std::find_if(entries.begin(), entries.end(),
                           [&](const Entry& e) { return e.first == name; });
    if (it == entries.end()) throw CheckpointError("checkpoint lacks parameter " + name);
    if (it->second.shape() != p->shape()) {
      throw CheckpointError("parameter " + name + ": checkpoint dims " +
                            to_string(it->second.shape()) + " vs model dims " +
                            to_string(p->shape()));
    }
    p->value = it->second;
  }
}

}  // namespace checkpoint

}  // namespace cfnet
