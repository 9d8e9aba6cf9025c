// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/util/kv.hpp"

#include <charconv>
#include <cmath>

#include "ctxprompt/errors.hpp"

namespace ctxprompt::kv {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* what) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) {
    throw ConfigError("config key '" + key + "' expects " + what + ", got '" + text + "'");
  }
  return value;
}

}  // namespace

std::size_t get_size(const Map& kv, const std::string& key, std::size_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_number<std::size_t>(key, it->second, "a non-negative integer");
}

std::uint64_t get_u64(const Map& kv, const std::string& key, std::uint64_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_number<std::uint64_t>(key, it->second, "a non-negative integer");
}

double get_double(const Map& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const double v = parse_number<double>(key, it->second, "a number");
  if (!std::isfinite(v)) throw ConfigError("config key '" + key + "' must be finite");
  return v;
}

bool get_bool(const Map& kv, const std::string& key, bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + it->second + "'");
}

std::string get_string(const Map& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace ctxprompt::kv
