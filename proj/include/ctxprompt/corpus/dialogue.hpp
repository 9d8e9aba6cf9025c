// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dialogue corpora in JSON Lines form. Each line is an object with a required
// "utterances" array of strings and an optional "id". An optional first line
// {"format": "ctxprompt-corpus", "version": 1} identifies the format version.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ctxprompt {

inline constexpr int kCorpusFormatVersion = 1;
inline constexpr std::string_view kCorpusFormatName = "ctxprompt-corpus";

using Utterance = std::vector<std::string>;

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;  // speakers alternate by position

  bool operator==(const Dialogue&) const = default;
};

// Lower-cased whitespace tokenisation.
Utterance tokenize(std::string_view text);
std::string join_words(const Utterance& words);

struct CorpusWarning {
  std::size_t line = 0;
  std::string message;
};

struct LoadOptions {
  // Skip invalid lines (recording a warning) instead of failing.
  bool lenient = false;
};

struct LoadResult {
  std::vector<Dialogue> dialogues;
  std::vector<CorpusWarning> warnings;
};

LoadResult parse_corpus(std::istream& in, const LoadOptions& options = {});
LoadResult load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});
void write_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);

struct WindowConfig {
  std::size_t max_context_utterances = 4;
  std::size_t max_utterance_words = 20;
  bool last_response_only = false;  // one sample per dialogue, its final turn
};

struct TextSample {
  std::vector<Utterance> context;
  Utterance response;
};

// One sample per response position r = 2..n (1-based): the context is the
// preceding utterances, at most max_context_utterances of them, each cut to
// its first max_utterance_words words. Responses are cut the same way.
// With last_response_only only r = n is produced.
std::vector<TextSample> window_samples(const Dialogue& dialogue, const WindowConfig& config = {});

// Deterministic split by dialogue (no context leaks between the halves).
struct CorpusSplit {
  std::vector<Dialogue> train;
  std::vector<Dialogue> valid;
};
CorpusSplit split_by_dialogue(const std::vector<Dialogue>& dialogues, double valid_fraction, std::uint64_t seed);

}  // namespace ctxprompt
