// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Typed lookups in flat "section.key" -> value maps. Malformed values raise
// ConfigError naming the key.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

namespace ctxprompt::kv {

using Map = std::map<std::string, std::string>;

std::size_t get_size(const Map& kv, const std::string& key, std::size_t fallback);
std::uint64_t get_u64(const Map& kv, const std::string& key, std::uint64_t fallback);
double get_double(const Map& kv, const std::string& key, double fallback);
bool get_bool(const Map& kv, const std::string& key, bool fallback);
std::string get_string(const Map& kv, const std::string& key, const std::string& fallback);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace ctxprompt::kv
