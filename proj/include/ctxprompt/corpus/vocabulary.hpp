// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Word vocabulary with a fixed block of reserved ids:
//
//   0 <pad>   1 <unk>   2 <eos>   3 <sep>   4..35 <p0>..<p31>
//
// <pN> are placeholder ids for virtual prompt positions; they never occur in
// text and are stripped from decoded output together with pad/unk/eos.
//
// File format (UTF-8 text, tab separated):
//
//   ctxprompt-vocab<TAB>1
//   reserved<TAB>36
//   <word><TAB><id>        one line per id, ascending, reserved ids first

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctxprompt/corpus/dialogue.hpp"
#include "ctxprompt/model/transformer.hpp"

namespace ctxprompt {

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kFirstPlaceholderId = 4;
inline constexpr std::size_t kNumPlaceholders = 32;
inline constexpr std::size_t kNumReserved = 4 + kNumPlaceholders;
inline constexpr int kVocabFormatVersion = 1;

class Vocabulary {
 public:
  Vocabulary();  // reserved ids only

  // Words ordered by descending frequency, ties broken lexicographically.
  static Vocabulary build(const std::vector<Dialogue>& dialogues, std::size_t min_count = 1);

  static TokenId placeholder(std::size_t slot);
  static bool is_reserved(TokenId id) { return id >= 0 && static_cast<std::size_t>(id) < kNumReserved; }

  std::size_t size() const { return words_.size(); }
  TokenId id(std::string_view word) const;  // kUnkId when absent
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;

  std::vector<TokenId> encode(const Utterance& words) const;
  // Drops reserved ids except <sep>, which renders as " / ".
  std::string decode(std::span<const TokenId> ids) const;
  Utterance decode_words(std::span<const TokenId> ids) const;

  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  void add(std::string word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace ctxprompt
