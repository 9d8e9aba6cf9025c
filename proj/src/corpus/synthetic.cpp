// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/corpus/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>
#include <random>
#include <string_view>

#include "ctxprompt/errors.hpp"

namespace ctxprompt {
namespace {

constexpr std::array<std::string_view, 5> kDet{"the", "a", "my", "your", "this"};
constexpr std::array<std::string_view, 16> kAdj{"red",  "small", "old",  "quiet", "bright", "cold", "happy", "long",
                                                "warm", "green", "fast", "heavy", "new",    "dark", "soft",  "tall"};
constexpr std::array<std::string_view, 24> kNoun{"cat",   "dog",  "house", "car",   "book",  "tree",  "river", "city",
                                                 "song",  "door", "bird",  "table", "phone", "train", "movie", "garden",
                                                 "chair", "road", "lamp",  "cup",   "shirt", "cake",  "boat",  "window"};
constexpr std::array<std::string_view, 16> kVerb{"sees",  "likes", "finds",  "needs", "wants", "moves", "opens", "paints",
                                                 "holds", "reads", "cleans", "buys",  "sells", "fixes", "hears", "draws"};
constexpr std::array<std::string_view, 6> kPrep{"near", "under", "behind", "above", "beside", "inside"};
constexpr std::array<std::string_view, 8> kBareVerb{"see", "like", "find", "need", "want", "move", "open", "paint"};

class Picker {
 public:
  explicit Picker(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  template <std::size_t N>
  std::string pick(const std::array<std::string_view, N>& words) {
    return std::string(words[below(N)]);
  }

  Utterance filler() {
    switch (below(5)) {
      case 0:
        return {pick(kDet), pick(kAdj), pick(kNoun), pick(kVerb), pick(kDet), pick(kNoun)};
      case 1:
        return {pick(kDet), pick(kNoun), pick(kVerb), pick(kPrep), pick(kDet), pick(kAdj), pick(kNoun)};
      case 2:
        return {"i", pick(kBareVerb), pick(kDet), pick(kNoun)};
      case 3:
        return {"do", "you", pick(kBareVerb), pick(kDet), pick(kAdj), pick(kNoun)};
      default:
        return {"it", "is", pick(kAdj), "and", pick(kAdj)};
    }
  }

 private:
  std::mt19937_64 rng_;
};

std::string dialogue_id(std::string_view prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*s-%05zu", static_cast<int>(prefix.size()), prefix.data(), i);
  return buf;
}

}  // namespace

std::string code_word(char prefix, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%02zu", prefix, index);
  return buf;
}

std::vector<Dialogue> synth_base_corpus(std::size_t dialogues, std::uint64_t seed) {
  Picker p(seed);
  std::vector<Dialogue> out;
  out.reserve(dialogues);
  for (std::size_t d = 0; d < dialogues; ++d) {
    Dialogue dlg{dialogue_id("base", d), {}};
    const std::size_t turns = 3 + p.below(3);
    for (std::size_t t = 0; t < turns; ++t) dlg.utterances.push_back(p.filler());
    if (p.below(4) == 0) {
      dlg.utterances[p.below(turns)] = {"my", "code", "is", code_word('k', p.below(kLookupClasses))};
    }
    if (p.below(2) == 0) {
      const std::size_t at = p.below(turns - 1);
      const std::size_t answer = at + 1 + p.below(turns - at - 1);
      const std::string v = code_word('v', p.below(kLookupClasses));
      if (p.below(2) == 0) {
        dlg.utterances[at] = {"i", "see", v};
      } else {
        dlg.utterances[at] = {code_word('k', p.below(kLookupClasses)), "and", v, "are", p.pick(kAdj)};
      }
      dlg.utterances[answer] = {"the", "answer", "is", v};
    }
    out.push_back(std::move(dlg));
  }
  return out;
}

std::vector<std::size_t> lookup_permutation(std::size_t classes, std::uint64_t mapping_seed) {
  std::vector<std::size_t> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(mapping_seed ^ 0x6c6f6f6b7570ull);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::vector<Dialogue> synth_lookup_corpus(std::size_t dialogues, std::uint64_t seed, std::size_t classes,
                                          std::uint64_t mapping_seed) {
  if (classes == 0 || classes > 100) throw ConfigError("lookup corpus needs 1..100 classes");
  const auto perm = lookup_permutation(classes, mapping_seed);
  Picker p(seed);
  std::vector<Dialogue> out;
  out.reserve(dialogues);
  for (std::size_t d = 0; d < dialogues; ++d) {
    Dialogue dlg{dialogue_id("lookup", d), {}};
    const std::size_t key = p.below(classes);
    const std::size_t context_turns = 2 + p.below(2);
    const std::size_t key_turn = p.below(context_turns);
    for (std::size_t t = 0; t < context_turns; ++t) {
      if (t == key_turn) {
        dlg.utterances.push_back({"my", "code", "is", code_word('k', key)});
      } else {
        dlg.utterances.push_back(p.filler());
      }
    }
    dlg.utterances.push_back({"the", "answer", "is", code_word('v', perm[key])});
    out.push_back(std::move(dlg));
  }
  return out;
}

}  // namespace ctxprompt
