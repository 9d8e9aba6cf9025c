// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/corpus/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "ctxprompt/errors.hpp"

namespace ctxprompt {

namespace {

constexpr std::string_view kVocabMagic = "ctxprompt-vocab";

std::vector<std::string> reserved_words() {
  std::vector<std::string> w{"<pad>", "<unk>", "<eos>", "<sep>"};
  for (std::size_t i = 0; i < kNumPlaceholders; ++i) w.push_back("<p" + std::to_string(i) + ">");
  return w;
}

std::pair<std::string, std::string> split_tab(const std::string& line, std::size_t line_no) {
  const auto tab = line.find('\t');
  if (tab == std::string::npos) throw ParseError("vocabulary line " + std::to_string(line_no) + ": missing tab");
  return {line.substr(0, tab), line.substr(tab + 1)};
}

long parse_long(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("vocabulary line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  }
}

}  // namespace

Vocabulary::Vocabulary() {
  for (auto& w : reserved_words()) add(std::move(w));
}

void Vocabulary::add(std::string word) {
  const auto id = static_cast<TokenId>(words_.size());
  if (!index_.emplace(word, id).second) throw ParseError("duplicate vocabulary entry '" + word + "'");
  words_.push_back(std::move(word));
}

Vocabulary Vocabulary::build(const std::vector<Dialogue>& dialogues, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& d : dialogues)
    for (const auto& u : d.utterances)
      for (const auto& w : u) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [w, c] : ordered) {
    if (c < min_count || v.contains(w)) continue;
    v.add(w);
  }
  return v;
}

TokenId Vocabulary::placeholder(std::size_t slot) {
  if (slot >= kNumPlaceholders) throw RangeError("placeholder slot " + std::to_string(slot) + " out of range");
  return kFirstPlaceholderId + static_cast<TokenId>(slot);
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(const Utterance& words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

Utterance Vocabulary::decode_words(std::span<const TokenId> ids) const {
  Utterance out;
  for (TokenId t : ids) {
    const std::string& w = word(t);
    if (t == kSepId) {
      out.emplace_back("/");
    } else if (!is_reserved(t)) {
      out.push_back(w);
    }
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const { return join_words(decode_words(ids)); }

void Vocabulary::write(std::ostream& out) const {
  out << kVocabMagic << '\t' << kVocabFormatVersion << '\n';
  out << "reserved\t" << kNumReserved << '\n';
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) throw ParseError("vocabulary truncated after line " + std::to_string(line_no));
    ++line_no;
    return split_tab(line, line_no);
  };
  auto [magic, version] = next();
  if (magic != kVocabMagic) throw ParseError("not a vocabulary file");
  if (parse_long(version, line_no) != kVocabFormatVersion) throw ParseError("unsupported vocabulary version " + version);
  auto [tag, reserved] = next();
  if (tag != "reserved" || parse_long(reserved, line_no) != static_cast<long>(kNumReserved)) {
    throw ParseError("vocabulary reserved block mismatch");
  }
  Vocabulary v;
  v.words_.clear();
  v.index_.clear();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto [w, id] = split_tab(line, line_no);
    if (parse_long(id, line_no) != static_cast<long>(v.words_.size())) {
      throw ParseError("vocabulary line " + std::to_string(line_no) + ": ids must be dense and ascending");
    }
    v.add(std::move(w));
  }
  const auto expected = reserved_words();
  if (v.words_.size() < kNumReserved || !std::equal(expected.begin(), expected.end(), v.words_.begin())) {
    throw ParseError("vocabulary reserved ids do not match");
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out);
  if (!out) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  return read(in);
}

}  // namespace ctxprompt
