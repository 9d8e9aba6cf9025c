// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ctxprompt/errors.hpp"
#include "ctxprompt/eval/report.hpp"
#include "ctxprompt/train/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/recompute.hpp"

namespace ctxprompt {
namespace {

Words w(std::string_view s) { return tokenize(s); }

// NIST brevity factor, independent of the library: 0.5 at ratio 2/3.
double nist_bp(double ratio) {
  if (ratio >= 1) return 1;
  const double beta = std::log(0.5) / (std::log(1.5) * std::log(1.5));
  return std::exp(beta * std::log(ratio) * std::log(ratio));
}

TEST(Bleu, IdenticalIsOne) {
  EXPECT_DOUBLE_EQ(bleu_avg(w("the cat sat down"), w("the cat sat down")), 1.0);
  EXPECT_DOUBLE_EQ(bleu_avg(w("a b c d e f"), w("a b c d e f")), 1.0);
}

TEST(Bleu, RepeatedWordModifiedPrecision) {
  EXPECT_EQ(modified_precision(w("the the the the"), w("the cat sat down"), 1).matched, 1u);
  const double e = 1e-9;
  const double b1 = 0.25;
  const double b2 = std::sqrt(0.25 * (e / 3));
  const double b3 = std::cbrt(0.25 * (e / 3) * (e / 2));
  const double b4 = std::pow(0.25 * (e / 3) * (e / 2) * e, 0.25);
  EXPECT_NEAR(bleu_avg(w("the the the the"), w("the cat sat down")), (b1 + b2 + b3 + b4) / 4, 1e-12);
  EXPECT_NEAR(bleu_avg(w("the the the the"), w("the cat sat down")), 0.0625, 1e-3);
}

TEST(Bleu, BrevityPenalty) {
  EXPECT_DOUBLE_EQ(brevity_penalty(2, 4), std::exp(1.0 - 2.0));
  EXPECT_DOUBLE_EQ(brevity_penalty(5, 4), 1.0);
  const double bp = std::exp(-1.0), e = 1e-9;
  const double expect = bp * (1 + 1 + std::cbrt(e) + std::pow(e * e, 0.25)) / 4;
  EXPECT_NEAR(bleu_avg(w("the cat"), w("the cat sat down")), expect, 1e-12);
}

TEST(Bleu, EmptyHypothesisScoresZero) {
  EXPECT_EQ(bleu_avg({}, w("a b")), 0.0);
  EXPECT_THROW(bleu_avg(w("a"), {}), RangeError);
}

TEST(RougeL, HandCases) {
  EXPECT_EQ(lcs_length(w("the cat sat"), w("the cat on mat sat")), 3u);
  EXPECT_NEAR(rouge_l(w("the cat sat"), w("the cat on mat sat")), 0.75, 1e-12);
  EXPECT_DOUBLE_EQ(rouge_l(w("a b c"), w("a b c")), 1.0);
  EXPECT_EQ(rouge_l(w("x y"), w("a b")), 0.0);
  EXPECT_EQ(rouge_l({}, w("a b")), 0.0);
}

TEST(MeteorLite, StemRules) {
  EXPECT_EQ(meteor_stem("running"), "run");
  EXPECT_EQ(meteor_stem("run"), "run");
  EXPECT_EQ(meteor_stem("walked"), "walk");
  EXPECT_EQ(meteor_stem("boxes"), "box");
  EXPECT_EQ(meteor_stem("cats"), "cat");
  EXPECT_EQ(meteor_stem("is"), "is");
  EXPECT_EQ(meteor_stem("sees"), "see");
}

TEST(MeteorLite, HandCases) {
  EXPECT_DOUBLE_EQ(meteor_lite(w("a b c d"), w("a b c d")), 0.9921875);
  EXPECT_EQ(meteor_lite(w("x y"), w("a b")), 0.0);
  // exact stage takes "he is", stem stage pairs running/run
  const auto a = meteor_align(w("he is running"), w("he is run"));
  EXPECT_EQ(a.matches, 3u);
  EXPECT_EQ(a.chunks, 1u);
  EXPECT_NEAR(meteor_lite(w("he is running"), w("he is run")), 1 - 0.5 / 27, 1e-12);
  // two chunks: P = R = 1, penalty 0.5 * (2/4)^3
  EXPECT_NEAR(meteor_lite(w("a b c d"), w("c d a b")), 0.9375, 1e-12);
  // P = 2/3, R = 1/2
  const double p = 2.0 / 3, r = 0.5;
  const double fmean = 10 * p * r / (r + 9 * p);
  EXPECT_NEAR(meteor_lite(w("a b z"), w("a b c d")), fmean * (1 - 0.5 * std::pow(0.5, 3)), 1e-12);
}

TEST(Nist, SelfMatchOfDistinctWords) {
  const std::vector<Words> h{w("a b c d e")};
  // unigram info log2(5/1) on each of 5 words over 5 unigrams; longer n-grams
  // carry log2(1/1) = 0
  EXPECT_NEAR(nist(h, h), std::log2(5.0), 1e-12);
}

TEST(Nist, RepeatedReferenceWordInfo) {
  const std::vector<Words> h{w("a b")}, r{w("a b a c")};
  // info(a) = log2(4/2), info(b) = log2(4/1), info(a b) = log2(2/1)
  const double precision = (1.0 + 2.0) / 2 + 1.0 / 1;
  EXPECT_NEAR(nist(h, r), precision * nist_bp(0.5), 1e-12);
}

TEST(Nist, LongerUnmatchedTailLowersScore) {
  const std::vector<Words> r{w("a b c d e")};
  const std::vector<Words> h1{w("a b c x")}, h2{w("a b c x x")};
  const double i = std::log2(5.0);
  EXPECT_NEAR(nist(h1, r), 3 * i / 4 * nist_bp(0.8), 1e-12);
  EXPECT_NEAR(nist(h2, r), 3 * i / 5, 1e-12);
  EXPECT_LT(nist(h2, r), nist(h1, r));
}

TEST(Nist, EmptyHypothesesScoreZero) {
  const std::vector<Words> r{w("a b c")}, h{Words{}};
  EXPECT_EQ(nist(h, r), 0.0);
  EXPECT_EQ(nist(std::vector<Words>{}, std::vector<Words>{}), 0.0);
}

TEST(Metrics, AppendingUnrelatedWordsLowersScores) {
  const Words ref = w("the cat sat on the mat");
  Words hyp = ref;
  const double b = bleu_avg(hyp, ref), r = rouge_l(hyp, ref);
  hyp.push_back("zebra");
  hyp.push_back("quartz");
  EXPECT_LT(bleu_avg(hyp, ref), b);
  EXPECT_LT(rouge_l(hyp, ref), r);
}

TEST(Metrics, AverageLength) {
  EXPECT_DOUBLE_EQ(avg_length(std::vector<Words>{w("a b"), w("a b c d")}), 3.0);
  EXPECT_DOUBLE_EQ(avg_length(std::vector<Words>{}), 0.0);
  EXPECT_DOUBLE_EQ(avg_length(std::vector<Words>{Words{}, Words{}}), 0.0);
}

TEST(Metrics, CorpusScoresOnPerfectHypotheses) {
  const std::vector<Words> refs{w("a b c d"), w("e f g h i")};
  const Scores s = score_corpus(refs, refs);
  EXPECT_DOUBLE_EQ(s.bleu_avg, 1.0);
  EXPECT_DOUBLE_EQ(s.rouge_l, 1.0);
  EXPECT_NEAR(s.meteor_lite, ((1 - 0.5 / 64) + (1 - 0.5 / 125)) / 2, 1e-12);
  EXPECT_NEAR(s.nist, std::log2(9.0), 1e-12);
  EXPECT_DOUBLE_EQ(s.avg_length, 4.5);
}

ModelConfig gen_model(std::size_t vocab = 64) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.vocab_size = vocab;
  c.max_positions = 40;
  return c;
}

TEST(Generate, ArgmaxTiesGoToLowestId) {
  const Tensor t = Tensor::from_data({2, 4}, {0, 3, 3, 1, 5, 5, 5, 5});
  EXPECT_EQ(argmax_row(t, 0), 1);
  EXPECT_EQ(argmax_row(t, 1), 0);
}

TEST(Generate, IncrementalMatchesRecompute) {
  Backbone bb = Backbone::init(gen_model(), 31);
  testing::jitter(bb.parameters(), 0.3, 7);
  std::mt19937_64 rng(3);
  for (auto kind : kAllStrategies) {
    AdapterConfig ac;
    ac.kind = kind;
    ac.prompt_length = 2;
    ac.seed = 2;
    Adapter a = Adapter::create(ac, bb);
    testing::jitter(a.parameters(), 0.3, 8);
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<TokenId> ctx{static_cast<TokenId>(36 + rng() % 28), static_cast<TokenId>(36 + rng() % 28), kSepId,
                               static_cast<TokenId>(36 + rng() % 28), kSepId};
      const std::vector<std::size_t> seg{3, 2};
      GenerationConfig g;
      g.max_new_tokens = 12;
      const auto fast = generate(bb, a, ctx, seg, g);
      EXPECT_EQ(fast, testing::generate_by_recompute(bb, a, ctx, seg, 12)) << strategy_name(kind);
      EXPECT_EQ(fast, generate(bb, a, ctx, seg, g));
    }
  }
}

TEST(Generate, BudgetCapsOutput) {
  Backbone bb = Backbone::init(gen_model(), 5);
  testing::jitter(bb.parameters(), 0.3, 9);
  AdapterConfig ac;
  ac.kind = StrategyKind::FineTune;
  const Adapter a = Adapter::create(ac, bb);
  int checked = 0;
  for (TokenId first = 36; first < 64 && checked < 3; ++first) {
    const std::vector<TokenId> ctx{first, kSepId};
    const std::vector<std::size_t> seg{2};
    if (testing::generate_by_recompute(bb, a, ctx, seg, 3).size() < 3) continue;
    GenerationConfig g;
    g.max_new_tokens = 3;
    EXPECT_EQ(generate(bb, a, ctx, seg, g).size(), 3u);
    ++checked;
  }
  EXPECT_EQ(checked, 3);
}

TEST(Generate, StopsAtMaxPositions) {
  ModelConfig mc = gen_model();
  mc.max_positions = 8;
  Backbone bb = Backbone::init(mc, 5);
  testing::jitter(bb.parameters(), 0.3, 9);
  AdapterConfig ac;
  ac.kind = StrategyKind::FineTune;
  const Adapter a = Adapter::create(ac, bb);
  const std::vector<TokenId> ctx{40, 41, 42, 43, kSepId};
  const std::vector<std::size_t> seg{5};
  const auto out = generate(bb, a, ctx, seg, {});
  EXPECT_LE(out.size(), 4u);
  EXPECT_EQ(out, testing::generate_by_recompute(bb, a, ctx, seg, 40));
}

TEST(Generate, LearnsOneTokenMapping) {
  const ModelConfig mc = gen_model();
  const Backbone bb = Backbone::init(mc, 17);
  std::vector<DialogueSample> pairs;
  for (TokenId i = 0; i < 10; ++i) pairs.push_back(make_sample({static_cast<TokenId>(36 + i), kSepId}, {static_cast<TokenId>(50 + i), kEosId}, {2}));
  AdapterConfig ac;
  ac.kind = StrategyKind::FineTune;
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.warmup_steps = 0;
  tc.weight_decay = 0;
  tc.max_steps = 300;
  Trainer tr(bb, Adapter::create(ac, bb), tc, pairs.size());
  for (int s = 0; s < 300; ++s) tr.train_step(pairs);
  for (TokenId i = 0; i < 10; ++i) {
    const std::vector<TokenId> ctx{static_cast<TokenId>(36 + i), kSepId};
    const std::vector<std::size_t> seg{2};
    EXPECT_EQ(generate(tr.backbone(), tr.adapter(), ctx, seg), std::vector<TokenId>{static_cast<TokenId>(50 + i)});
  }
}

TEST(Report, JsonCarriesScoresAndSamples) {
  Vocabulary vocab = Vocabulary::build({{"d", {w("hello there"), w("general kenobi")}}}, 1);
  Backbone bb = Backbone::init(gen_model(vocab.size()), 3);
  AdapterConfig ac;
  ac.kind = StrategyKind::SoftPrompt;
  ac.prompt_length = 2;
  const Adapter a = Adapter::create(ac, bb);
  const auto samples = encode_dialogues(vocab, {{"d", {w("hello there"), w("general kenobi")}}}, {});
  GenerationConfig g;
  g.max_new_tokens = 4;
  const EvalReport r = evaluate_generation(bb, a, vocab, samples, g);
  ASSERT_EQ(r.samples.size(), 1u);
  EXPECT_EQ(r.samples[0].reference, "general kenobi");
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["config"]["gen.max_new_tokens"], "4");
  EXPECT_EQ(j["samples"].size(), 1u);
  EXPECT_TRUE(j["scores"].contains("nist"));
  EXPECT_EQ(report_json(r), report_json(evaluate_generation(bb, a, vocab, samples, g)));
  EXPECT_THROW(evaluate_generation(bb, a, vocab, {}, g), EmptyCorpusError);
  const std::vector<std::pair<std::string, Scores>> rows{{"dynamic", r.scores}};
  EXPECT_NE(scores_table(rows).find("ROUGE-L"), std::string::npos);
}

}  // namespace
}  // namespace ctxprompt
