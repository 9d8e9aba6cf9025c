// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "ctxprompt/corpus/dialogue.hpp"
#include "ctxprompt/corpus/sample.hpp"
#include "ctxprompt/corpus/synthetic.hpp"
#include "ctxprompt/corpus/vocabulary.hpp"
#include "ctxprompt/errors.hpp"
#include "ctxprompt/model/transformer.hpp"
#include "ctxprompt/numerics/ops.hpp"
#include "support/temp_dir.hpp"

namespace ctxprompt {
namespace {

LoadResult parse(const std::string& text, bool lenient = false) {
  std::istringstream in(text);
  return parse_corpus(in, LoadOptions{lenient});
}

Dialogue numbered_dialogue(std::size_t n) {
  Dialogue d;
  for (std::size_t i = 1; i <= n; ++i) d.utterances.push_back({"u" + std::to_string(i)});
  return d;
}

TEST(LoadCorpus, SingleDialogue) {
  auto r = parse(R"({"utterances": ["hi", "hello"]})" "\n");
  ASSERT_EQ(r.dialogues.size(), 1u);
  EXPECT_EQ(r.dialogues[0].utterances.size(), 2u);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(LoadCorpus, NormalisesCaseAndWhitespace) {
  auto r = parse(R"({"id": "d7", "utterances": ["  Hello   World ", "OK\tthen"]})");
  EXPECT_EQ(r.dialogues[0].id, "d7");
  EXPECT_EQ(r.dialogues[0].utterances[0], (Utterance{"hello", "world"}));
  EXPECT_EQ(r.dialogues[0].utterances[1], (Utterance{"ok", "then"}));
}

TEST(LoadCorpus, EmptyUtteranceListCitesLine) {
  try {
    parse("{\"utterances\": [\"a\", \"b\"]}\n{\"utterances\": []}\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, MalformedJsonAndMissingFieldCiteLine) {
  try {
    parse("{\"utterances\": [\"a\", \"b\"]}\n\n{oops\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  try {
    parse("{\"turns\": [\"a\", \"b\"]}\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("utterances"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("{\"utterances\": [\"a\", \"  \"]}"), ParseError);
  EXPECT_THROW(parse("{\"utterances\": [\"only one\"]}"), ParseError);
}

TEST(LoadCorpus, LenientModeSkipsBadLinesWithWarnings) {
  auto r = parse("{\"utterances\": [\"a\", \"b\"]}\n{\"utterances\": []}\n{\"utterances\": [\"c\", \"d\", \"e\"]}\n", true);
  EXPECT_EQ(r.dialogues.size(), 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.warnings[0].line, 2u);
}

TEST(LoadCorpus, EmptyInputIsAnEmptyCorpusError) {
  EXPECT_THROW(parse(""), EmptyCorpusError);
  EXPECT_THROW(parse("\n\n"), EmptyCorpusError);
  EXPECT_THROW(parse("{\"format\": \"ctxprompt-corpus\", \"version\": 1}\n"), EmptyCorpusError);
}

TEST(LoadCorpus, VersionHeader) {
  auto r = parse("{\"format\": \"ctxprompt-corpus\", \"version\": 1}\n{\"utterances\": [\"a\", \"b\"]}\n");
  EXPECT_EQ(r.dialogues.size(), 1u);
  EXPECT_THROW(parse("{\"format\": \"ctxprompt-corpus\", \"version\": 9}\n{\"utterances\": [\"a\", \"b\"]}\n"),
               ParseError);
}

TEST(LoadCorpus, FileRoundTripAndMissingFile) {
  testing::TempDir dir;
  std::vector<Dialogue> ds{numbered_dialogue(3), numbered_dialogue(2)};
  ds[0].id = "first";
  write_corpus(dir.path() / "c.jsonl", ds);
  auto r = load_corpus(dir.path() / "c.jsonl");
  ASSERT_EQ(r.dialogues.size(), 2u);
  EXPECT_EQ(r.dialogues[0].id, "first");
  EXPECT_EQ(r.dialogues[1].utterances, ds[1].utterances);
  EXPECT_THROW(load_corpus(dir.path() / "missing.jsonl"), IoError);
}

TEST(Window, TwoUtterancesGiveOneSample) {
  auto s = window_samples(numbered_dialogue(2));
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].context, (std::vector<Utterance>{{"u1"}}));
  EXPECT_EQ(s[0].response, (Utterance{"u2"}));
}

TEST(Window, ContextKeepsAtMostFourPrecedingUtterances) {
  auto s = window_samples(numbered_dialogue(6));
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[4].context, (std::vector<Utterance>{{"u2"}, {"u3"}, {"u4"}, {"u5"}}));
  EXPECT_EQ(s[4].response, (Utterance{"u6"}));
  EXPECT_EQ(s[2].context.size(), 3u);
}

TEST(Window, LongUtterancesAreCutToTwentyWords) {
  Dialogue d;
  Utterance longer;
  for (int i = 0; i < 25; ++i) longer.push_back("w" + std::to_string(i));
  d.utterances = {longer, longer};
  auto s = window_samples(d);
  ASSERT_EQ(s[0].context[0].size(), 20u);
  EXPECT_EQ(s[0].context[0].back(), "w19");
  EXPECT_EQ(s[0].response.size(), 20u);
}

TEST(Window, ExhaustiveLimitsAndSampleCount) {
  for (std::size_t n = 2; n <= 12; ++n) {
    Dialogue d;
    for (std::size_t i = 0; i < n; ++i) d.utterances.push_back(Utterance(i * 3 + 1, "x"));
    auto s = window_samples(d);
    EXPECT_EQ(s.size(), n - 1);
    for (const auto& sample : s) {
      EXPECT_LE(sample.context.size(), 4u);
      for (const auto& u : sample.context) EXPECT_LE(u.size(), 20u);
    }
  }
}

TEST(Window, LastResponseOnly) {
  WindowConfig w;
  w.last_response_only = true;
  auto s = window_samples(numbered_dialogue(6), w);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].response, (Utterance{"u6"}));
  EXPECT_EQ(s[0].context.size(), 4u);
  EXPECT_EQ(window_samples(numbered_dialogue(2), w).size(), 1u);
}

TEST(Synthetic, BaseCorpusIsDeterministicAndLoadable) {
  const auto a = synth_base_corpus(200, 1);
  EXPECT_EQ(a, synth_base_corpus(200, 1));
  EXPECT_NE(a, synth_base_corpus(200, 2));
  std::size_t words = 0;
  for (const auto& d : a) {
    EXPECT_GE(d.utterances.size(), 3u);
    for (const auto& u : d.utterances) words += u.size();
  }
  EXPECT_GT(words, 200u * 3 * 4);
  testing::TempDir dir;
  write_corpus(dir.path() / "base.jsonl", a);
  EXPECT_EQ(load_corpus(dir.path() / "base.jsonl").dialogues, a);
}

TEST(Synthetic, LookupResponseFollowsContextKey) {
  const auto perm = lookup_permutation(kLookupClasses, 0);
  std::vector<bool> seen(kLookupClasses, false);
  for (std::size_t p : perm) seen[p] = true;
  EXPECT_EQ(std::count(seen.begin(), seen.end(), true), static_cast<long>(kLookupClasses));
  EXPECT_EQ(code_word('k', 7), "k07");

  const auto a = synth_lookup_corpus(300, 4);
  const auto b = synth_lookup_corpus(300, 5);
  std::set<std::string> keys;
  for (const auto* corpus : {&a, &b}) {
    for (const auto& d : *corpus) {
      std::string key;
      for (std::size_t i = 0; i + 1 < d.utterances.size(); ++i) {
        const auto& u = d.utterances[i];
        if (u.size() == 4 && u[0] == "my" && u[1] == "code") key = u[3];
      }
      ASSERT_FALSE(key.empty()) << d.id;
      keys.insert(key);
      const std::size_t k = std::stoul(key.substr(1));
      EXPECT_EQ(d.utterances.back(), (Utterance{"the", "answer", "is", code_word('v', perm[k])}));
    }
  }
  EXPECT_GT(keys.size(), 50u);
}

TEST(Vocabulary, MinCountFiltersRareWords) {
  Dialogue d;
  d.utterances = {{"a", "a", "b"}, {"a"}};
  auto v = Vocabulary::build({d}, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.id("b"), kUnkId);
}

TEST(Vocabulary, OrderIsFrequencyThenLexicographic) {
  Dialogue d;
  d.utterances = {{"zeta", "beta", "alpha", "beta"}, {"zeta", "gamma"}};
  auto v = Vocabulary::build({d});
  const auto base = static_cast<TokenId>(kNumReserved);
  EXPECT_EQ(v.id("beta"), base);
  EXPECT_EQ(v.id("zeta"), base + 1);
  EXPECT_EQ(v.id("alpha"), base + 2);
  EXPECT_EQ(v.id("gamma"), base + 3);
  EXPECT_EQ(Vocabulary::build({d}), v);
}

TEST(Vocabulary, FileRoundTripIsBitExact) {
  testing::TempDir dir;
  Dialogue d;
  d.utterances = {{"hello", "world"}, {"hi", "there", "world"}};
  auto v = Vocabulary::build({d});
  v.save(dir.path() / "vocab.tsv");
  auto loaded = Vocabulary::load(dir.path() / "vocab.tsv");
  EXPECT_EQ(loaded, v);
  std::ostringstream a, b;
  v.write(a);
  loaded.write(b);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream bad("not-a-vocab\t1\n");
  EXPECT_THROW(Vocabulary::read(bad), ParseError);
}

TEST(Vocabulary, EncodeDecode) {
  Dialogue d;
  d.utterances = {{"hello", "world"}, {"hi"}};
  auto v = Vocabulary::build({d});
  const auto ids = v.encode({"hello", "world"});
  EXPECT_EQ(v.decode(ids), "hello world");
  EXPECT_EQ(v.encode({"unseen"}), (std::vector<TokenId>{kUnkId}));
  EXPECT_EQ(v.decode(std::vector<TokenId>{kEosId}), "");
  std::vector<TokenId> with_sep{v.id("hi"), kSepId, v.id("world"), kEosId, kPadId, Vocabulary::placeholder(3)};
  EXPECT_EQ(v.decode(with_sep), "hi / world");
  EXPECT_THROW(v.decode(std::vector<TokenId>{static_cast<TokenId>(v.size())}), RangeError);
  EXPECT_THROW(v.decode(std::vector<TokenId>{-1}), RangeError);
  EXPECT_THROW(Vocabulary::placeholder(kNumPlaceholders), RangeError);
}

TEST(Sample, EncodingAddsSeparatorsAndEos) {
  Dialogue d;
  d.utterances = {{"a", "b"}, {"c"}, {"d", "e"}};
  auto v = Vocabulary::build({d});
  auto samples = encode_dialogues(v, {d});
  ASSERT_EQ(samples.size(), 2u);
  const auto& s = samples[1];
  EXPECT_EQ(s.context, (std::vector<TokenId>{v.id("a"), v.id("b"), kSepId, v.id("c"), kSepId}));
  EXPECT_EQ(s.response, (std::vector<TokenId>{v.id("d"), v.id("e"), kEosId}));
  EXPECT_EQ(s.segments, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(s.response_mask, (std::vector<std::uint8_t>{0, 0, 0, 0, 0, 1, 1, 1}));
}

TEST(Batch, PadsToWidestSample) {
  auto a = make_sample({4, 3}, {5, 6, kEosId}, {2});
  auto b = make_sample({7, 8, 9, 3}, {10, 11, 12, kEosId}, {4});
  std::vector<DialogueSample> samples{a, b};
  auto batches = make_batches(samples, 32);
  ASSERT_EQ(batches.size(), 1u);
  EXPECT_EQ(batches[0].width, 8u);
  EXPECT_EQ(batches[0].pad_count(), 3u);
  EXPECT_EQ(batches[0].tokens[5], kPadId);
  EXPECT_EQ(batches[0].attention_mask[4], 1);
  EXPECT_EQ(batches[0].attention_mask[5], 0);
  for (std::size_t i = 5; i < 8; ++i) EXPECT_EQ(batches[0].loss_mask[i], 0);
  EXPECT_EQ(batches[0].row(0).sequence(), a.sequence());
  EXPECT_EQ(batches[0].row(1).segments, b.segments);
}

TEST(Batch, SplitsIntoFixedSizeChunks) {
  std::vector<DialogueSample> samples;
  for (int i = 0; i < 70; ++i) samples.push_back(make_sample({4, 3}, {5, kEosId}, {2}));
  auto batches = make_batches(samples, 32);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[2].rows, 6u);
}

TEST(Batch, PaddingContributesNothingToTheLoss) {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 8;
  c.vocab_size = 16;
  c.max_positions = 16;
  const Backbone bb = Backbone::init(c, 3);
  auto a = make_sample({4, 3}, {5, 6, kEosId}, {2});
  auto b = make_sample({7, 8, 9, 3}, {10, 11, 12, kEosId}, {4});
  std::vector<DialogueSample> samples{a, b};
  const auto batch = make_batches(samples, 32)[0];
  auto padded_loss = [&](std::size_t r) {
    std::span<const TokenId> row(batch.tokens.data() + r * batch.width, batch.width);
    std::vector<TokenId> targets(row.begin() + 1, row.end());
    targets.push_back(kPadId);
    std::vector<std::uint8_t> mask(batch.loss_mask.begin() + static_cast<std::ptrdiff_t>(r * batch.width + 1),
                                   batch.loss_mask.begin() + static_cast<std::ptrdiff_t>((r + 1) * batch.width));
    mask.push_back(0);
    return ops::masked_nll_sum(forward(bb, row, 0, {}).logits, targets, mask).item();
  };
  auto unpadded_loss = [&](const DialogueSample& s) {
    auto seq = s.sequence();
    std::vector<TokenId> targets(seq.begin() + 1, seq.end());
    targets.push_back(kPadId);
    std::vector<std::uint8_t> mask(s.response_mask.begin() + 1, s.response_mask.end());
    mask.push_back(0);
    return ops::masked_nll_sum(forward(bb, seq, 0, {}).logits, targets, mask).item();
  };
  EXPECT_NEAR(padded_loss(0), unpadded_loss(a), 1e-9);
  EXPECT_NEAR(padded_loss(1), unpadded_loss(b), 1e-9);
}

}  // namespace
}  // namespace ctxprompt
