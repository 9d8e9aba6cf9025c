// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace ctxprompt {

// 64-bit FNV-1a, incremental.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) {
    for (auto b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= kPrime;
    }
  }
  void update(std::string_view text) { update(std::as_bytes(std::span(text.data(), text.size()))); }
  template <typename T>
  void update_pod(const T& value) {
    update(std::as_bytes(std::span(&value, 1)));
  }
  std::uint64_t digest() const { return state_; }

 private:
  static constexpr std::uint64_t kOffset = 14695981039346656037ull;
  static constexpr std::uint64_t kPrime = 1099511628211ull;
  std::uint64_t state_ = kOffset;
};

}  // namespace ctxprompt
