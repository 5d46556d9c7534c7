// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/text_config.hpp"

#include <fstream>
#include <sstream>

#include "cfnet/errors.hpp"

namespace cfnet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T, typename Conv>
T convert(const std::string& key, const std::string& value, Conv conv) {
  try {
    std::size_t used = 0;
    T v = conv(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
}

}  // namespace

TextConfig TextConfig::parse(const std::string& text) {
  TextConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

TextConfig TextConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string TextConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double TextConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return convert<double>(key, it->second,
                         [](const std::string& s, std::size_t* n) { return std::stod(s, n); });
}

std::size_t TextConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t TextConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (!it->second.empty() && it->second[0] == '-') {
    throw ConfigError("config key '" + key + "' must be non-negative");
  }
  return convert<std::uint64_t>(
      key, it->second, [](const std::string& s, std::size_t* n) { return std::stoull(s, n); });
}

bool TextConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::size_t> TextConfig::get_size_list(const std::string& key) const {
  std::vector<std::size_t> out;
  std::istringstream is(get(key, ""));
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    out.push_back(static_cast<std::size_t>(convert<std::uint64_t>(
        key, item, [](const std::string& s, std::size_t* n) { return std::stoull(s, n); })));
  }
  return out;
}

}  // namespace cfnet
