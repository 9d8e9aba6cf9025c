// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/corpus/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctxprompt/errors.hpp"

namespace ctxprompt {

namespace {

using json = nlohmann::json;

bool is_header(const json& obj) { return obj.is_object() && obj.contains("format") && !obj.contains("utterances"); }

Dialogue parse_dialogue(const json& obj) {
  if (!obj.is_object()) throw ParseError("expected a JSON object");
  auto it = obj.find("utterances");
  if (it == obj.end()) throw ParseError("missing field \"utterances\"");
  if (!it->is_array()) throw ParseError("\"utterances\" is not an array");
  Dialogue d;
  if (auto id = obj.find("id"); id != obj.end()) d.id = id->is_string() ? id->get<std::string>() : id->dump();
  for (const auto& u : *it) {
    if (!u.is_string()) throw ParseError("utterance is not a string");
    Utterance words = tokenize(u.get<std::string>());
    if (words.empty()) throw ParseError("empty utterance");
    d.utterances.push_back(std::move(words));
  }
  if (d.utterances.size() < 2) {
    throw ParseError("dialogue needs at least 2 utterances, got " + std::to_string(d.utterances.size()));
  }
  return d;
}

}  // namespace

Utterance tokenize(std::string_view text) {
  Utterance words;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string join_words(const Utterance& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

LoadResult parse_corpus(std::istream& in, const LoadOptions& options) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
      }
      if (first_content && is_header(obj)) {
        first_content = false;
        if (obj.value("format", std::string{}) != kCorpusFormatName) throw ParseError("unknown corpus format");
        if (obj.value("version", 0) != kCorpusFormatVersion) {
          throw ParseError("unsupported corpus version " + obj["version"].dump());
        }
        continue;
      }
      first_content = false;
      result.dialogues.push_back(parse_dialogue(obj));
    } catch (const ParseError& e) {
      std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
      if (!options.lenient) throw ParseError(msg);
      result.warnings.push_back(CorpusWarning{line_no, std::move(msg)});
    }
  }
  if (result.dialogues.empty()) throw EmptyCorpusError("corpus contains no dialogues");
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  try {
    return parse_corpus(in, options);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const EmptyCorpusError& e) {
    throw EmptyCorpusError(path.string() + ": " + e.what());
  }
}

void write_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json{{"format", kCorpusFormatName}, {"version", kCorpusFormatVersion}}.dump() << '\n';
  for (const auto& d : dialogues) {
    json obj;
    if (!d.id.empty()) obj["id"] = d.id;
    json utts = json::array();
    for (const auto& u : d.utterances) utts.push_back(join_words(u));
    obj["utterances"] = std::move(utts);
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<TextSample> window_samples(const Dialogue& dialogue, const WindowConfig& config) {
  auto truncate = [&](const Utterance& u) {
    return Utterance(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(std::min(u.size(), config.max_utterance_words)));
  };
  std::vector<TextSample> samples;
  const std::size_t n = dialogue.utterances.size();
  for (std::size_t r = config.last_response_only && n > 1 ? n - 1 : 1; r < n; ++r) {  // 0-based response index
    const std::size_t first = r > config.max_context_utterances ? r - config.max_context_utterances : 0;
    TextSample s;
    for (std::size_t i = first; i < r; ++i) s.context.push_back(truncate(dialogue.utterances[i]));
    s.response = truncate(dialogue.utterances[r]);
    samples.push_back(std::move(s));
  }
  return samples;
}

CorpusSplit split_by_dialogue(const std::vector<Dialogue>& dialogues, double valid_fraction, std::uint64_t seed) {
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) throw ConfigError("valid_fraction must be in [0, 1)");
  std::vector<std::size_t> order(dialogues.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_valid = static_cast<std::size_t>(static_cast<double>(dialogues.size()) * valid_fraction + 0.5);
  if (valid_fraction > 0.0 && n_valid == 0 && dialogues.size() > 1) n_valid = 1;
  std::vector<bool> is_valid(dialogues.size(), false);
  for (std::size_t i = 0; i < n_valid; ++i) is_valid[order[i]] = true;
  CorpusSplit split;
  for (std::size_t i = 0; i < dialogues.size(); ++i) (is_valid[i] ? split.valid : split.train).push_back(dialogues[i]);
  return split;
}

}  // namespace ctxprompt
