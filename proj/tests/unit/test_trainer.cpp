// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "ctxprompt/errors.hpp"
#include "ctxprompt/numerics/ops.hpp"
#include "ctxprompt/train/trainer.hpp"

namespace ctxprompt {
namespace {

ModelConfig tiny_model(std::size_t vocab = 64) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.vocab_size = vocab;
  c.max_positions = 48;
  return c;
}

// "key <sep> filler <sep>" -> "value <eos>", value a function of key.
std::vector<DialogueSample> lookup_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DialogueSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto key = static_cast<TokenId>(40 + rng() % 8);
    const auto filler = static_cast<TokenId>(50 + rng() % 8);
    out.push_back(make_sample({key, kSepId, filler, filler, kSepId}, {static_cast<TokenId>(key + 16), kEosId}, {2, 3}));
  }
  return out;
}

AdapterConfig adapter_of(StrategyKind kind) {
  AdapterConfig a;
  a.kind = kind;
  a.prompt_length = 2;
  a.seed = 3;
  return a;
}

TrainConfig small_train() {
  TrainConfig t;
  t.batch_size = 4;
  t.max_epochs = 3;
  t.seed = 11;
  return t;
}

std::vector<Real> values(const ParamSet& ps) {
  std::vector<Real> out;
  for (const auto& [name, t] : ps.entries()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

TEST(LearningRate, WarmupThenLinearDecay) {
  EXPECT_DOUBLE_EQ(lr_at(1e-3, 100, 1000, 0), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(1e-3, 100, 1000, 50), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(1e-3, 100, 1000, 100), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(1e-3, 100, 1000, 550), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(1e-3, 100, 1000, 1000), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(1e-3, 0, 10, 0), 1e-3);
}

TEST(AdamW, ZeroGradientNoDecayLeavesParams) {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  p.zero_grad();
  ParamSet ps;
  ps.add("p", p);
  AdamW opt(ps, AdamWOptions{});
  for (int i = 0; i < 5; ++i) opt.step(0.1);
  EXPECT_EQ(values(ps), (std::vector<Real>{1.0, -2.0, 0.5}));
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(AdamW, FirstStepClosedForm) {
  Tensor p = Tensor::from_data({1}, {1.0}, true);
  p.zero_grad();
  p.mutable_grad()[0] = 1.0;
  ParamSet ps;
  ps.add("p", p);
  AdamW opt(ps, AdamWOptions{0.9, 0.999, 1e-8, 0.0});
  opt.step(0.1);
  // m_hat = g, v_hat = g^2
  EXPECT_NEAR(p.data()[0], 1.0 - 0.1 * (1.0 / (1.0 + 1e-8)), 1e-15);
}

TEST(AdamW, DecoupledDecayTerm) {
  Tensor p = Tensor::from_data({1}, {2.0}, true);
  p.zero_grad();
  p.mutable_grad()[0] = 0.5;
  ParamSet ps;
  ps.add("p", p);
  AdamW opt(ps, AdamWOptions{0.9, 0.999, 1e-8, 0.01});
  opt.step(0.1);
  const double adam = 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(p.data()[0], 2.0 - 0.1 * (adam + 0.01 * 2.0), 1e-15);
}

TEST(AdamW, SecondStepMatchesRecurrence) {
  Tensor p = Tensor::from_data({1}, {0.0}, true);
  ParamSet ps;
  ps.add("p", p);
  AdamW opt(ps, AdamWOptions{0.9, 0.999, 1e-8, 0.0});
  double m = 0, v = 0, ref = 0;
  const double grads[] = {0.3, -1.2};
  for (int t = 1; t <= 2; ++t) {
    p.zero_grad();
    p.mutable_grad()[0] = grads[t - 1];
    opt.step(0.05);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    ref -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p.data()[0], ref, 1e-15);
}

TEST(AdamW, NanGradientNamesGroup) {
  Tensor p = Tensor::from_data({2}, {1.0, 1.0}, true);
  p.zero_grad();
  p.mutable_grad()[1] = std::numeric_limits<Real>::quiet_NaN();
  ParamSet ps;
  ps.add("prompt_embeddings", p);
  AdamW opt(ps, AdamWOptions{});
  try {
    opt.step(0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("prompt_embeddings"), std::string::npos);
  }
  EXPECT_EQ(p.data()[0], 1.0);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  Tensor a = Tensor::from_data({2}, {0, 0}, true);
  a.zero_grad();
  a.mutable_grad()[0] = 3;
  a.mutable_grad()[1] = 4;
  ParamSet ps;
  ps.add("a", a);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(ps, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
}

TEST(EarlyStopper, PatienceTwo) {
  EarlyStopper s(2);
  const double losses[] = {3.0, 2.5, 2.6, 2.7};
  std::size_t stopped_at = 0;
  for (std::size_t e = 0; e < 4; ++e) {
    s.update(losses[e]);
    if (s.should_stop()) {
      stopped_at = e + 1;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 4u);
  EXPECT_EQ(s.best_epoch(), 2u);
  EXPECT_DOUBLE_EQ(s.best_loss(), 2.5);
}

TEST(EarlyStopper, EqualLossIsNotImprovement) {
  EarlyStopper s(1);
  EXPECT_TRUE(s.update(1.0));
  EXPECT_FALSE(s.update(1.0));
  EXPECT_TRUE(s.should_stop());
}

TEST(TrainConfig, KeyValueRoundTripAndValidation) {
  TrainConfig t = small_train();
  t.learning_rate = 2.5e-4;
  t.record_elapsed = true;
  const TrainConfig back = TrainConfig::from_kv(t.to_kv());
  EXPECT_EQ(back.to_kv(), t.to_kv());
  EXPECT_DOUBLE_EQ(TrainConfig{}.peak_lr(StrategyKind::FineTune), 5e-5);
  EXPECT_DOUBLE_EQ(TrainConfig{}.peak_lr(StrategyKind::DynamicPrompt), 1e-3);
  auto kv = t.to_kv();
  kv["train.patience"] = "0";
  EXPECT_THROW(TrainConfig::from_kv(kv), ConfigError);
  kv = t.to_kv();
  kv["train.batch_size"] = "many";
  EXPECT_THROW(TrainConfig::from_kv(kv), ConfigError);
}

TEST(Trainer, WarmupScalesWithRunLength) {
  TrainConfig t = small_train();
  t.max_epochs = 10;
  Trainer tr(Backbone::init(tiny_model(), 1), Adapter::create(adapter_of(StrategyKind::SoftPrompt), Backbone::init(tiny_model(), 1)), t, 40);
  EXPECT_EQ(tr.total_steps(), 100u);
  EXPECT_EQ(tr.warmup_steps(), 10u);
}

TEST(Trainer, UntrainedLossNearLogVocab) {
  const ModelConfig mc = tiny_model(500);
  const Backbone bb = Backbone::init(mc, 4);
  Trainer tr(bb, Adapter::create(adapter_of(StrategyKind::FineTune), bb), small_train(), 8);
  std::vector<DialogueSample> samples;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 8; ++i) {
    std::vector<TokenId> ctx, resp;
    for (int j = 0; j < 6; ++j) ctx.push_back(static_cast<TokenId>(kNumReserved + rng() % 400));
    ctx.push_back(kSepId);
    for (int j = 0; j < 5; ++j) resp.push_back(static_cast<TokenId>(kNumReserved + rng() % 400));
    resp.push_back(kEosId);
    samples.push_back(make_sample(ctx, resp, {7}));
  }
  EXPECT_NEAR(tr.evaluate(samples).mean(), std::log(500.0), 0.1);
}

TEST(Trainer, EmptyResponseBatchRejected) {
  const Backbone bb = Backbone::init(tiny_model(), 1);
  Trainer tr(bb, Adapter::create(adapter_of(StrategyKind::SoftPrompt), bb), small_train(), 1);
  std::vector<DialogueSample> none;
  EXPECT_THROW(tr.batch_loss(none), EmptyLossError);
  EXPECT_THROW(LossSum{}.mean(), EmptyLossError);
}

TEST(Trainer, ContextTargetsDoNotAffectLoss) {
  const Backbone bb = Backbone::init(tiny_model(), 2);
  for (auto kind : kAllStrategies) {
    const Adapter a = Adapter::create(adapter_of(kind), bb);
    const auto s = lookup_samples(1, 5).front();
    const Composition c = a.compose(bb, s);
    const Tensor logits = a.run(bb, c).logits;
    Composition mutated = c;
    for (std::size_t i = 0; i < mutated.layout.size(); ++i) {
      if (!c.loss_mask[i]) mutated.layout[i] = static_cast<TokenId>((mutated.layout[i] * 13 + 7) % 64);
    }
    EXPECT_EQ(response_nll_sum(logits, c).item(), response_nll_sum(logits, mutated).item()) << strategy_name(kind);
  }
}

TEST(Trainer, GradientsReachOnlyTrainableSet) {
  const Backbone bb = Backbone::init(tiny_model(), 2);
  const auto samples = lookup_samples(4, 1);
  for (auto kind : kAllStrategies) {
    if (kind == StrategyKind::FineTune) continue;
    Trainer tr(bb, Adapter::create(adapter_of(kind), bb), small_train(), samples.size());
    tr.train_step(samples);
    for (const auto& [name, t] : bb.parameters().entries()) {
      EXPECT_FALSE(t.requires_grad()) << name;
      if (t.has_grad()) {
        for (Real g : t.grad()) ASSERT_EQ(g, 0.0) << strategy_name(kind) << " " << name;
      }
    }
    bool any = false;
    for (const auto& [name, t] : tr.adapter().parameters().entries()) {
      for (Real g : t.grad()) any = any || g != 0.0;
    }
    EXPECT_TRUE(any) << strategy_name(kind);
  }
}

TEST(Trainer, PromptStrategiesKeepBackboneBitIdentical) {
  const auto samples = lookup_samples(8, 2);
  for (auto kind : {StrategyKind::SoftPrompt, StrategyKind::DynamicPrompt}) {
    const Backbone bb = Backbone::init(tiny_model(), 6);
    const std::uint64_t before = checksum(bb);
    TrainConfig t = small_train();
    t.learning_rate = 1e-2;
    t.warmup_steps = 0;
    t.max_steps = 100;
    Trainer tr(bb, Adapter::create(adapter_of(kind), bb), t, samples.size());
    const auto adapter_before = values(tr.adapter().parameters());
    for (int i = 0; i < 100; ++i) tr.train_step(std::span(samples).subspan((i % 2) * 4, 4));
    EXPECT_EQ(checksum(tr.backbone()), before) << strategy_name(kind);
    EXPECT_NE(values(tr.adapter().parameters()), adapter_before) << strategy_name(kind);
  }
}

TEST(Trainer, FineTuneChangesBackbone) {
  const Backbone bb = Backbone::init(tiny_model(), 6);
  const std::uint64_t before = checksum(bb);
  const auto samples = lookup_samples(4, 2);
  TrainConfig t = small_train();
  t.warmup_steps = 0;
  Trainer tr(Backbone::init(tiny_model(), 6), Adapter::create(adapter_of(StrategyKind::FineTune), bb), t, 4);
  tr.train_step(samples);
  EXPECT_NE(checksum(tr.backbone()), before);
  EXPECT_EQ(checksum(bb), before);
}

TEST(Trainer, OverfitsSingleMapping) {
  const Backbone bb = Backbone::init(tiny_model(), 8);
  const std::vector<DialogueSample> one{make_sample({45, kSepId}, {60, kEosId}, {2})};
  TrainConfig t = small_train();
  t.learning_rate = 1e-2;
  t.warmup_steps = 0;
  t.max_steps = 150;
  t.weight_decay = 0;
  Trainer tr(bb, Adapter::create(adapter_of(StrategyKind::FineTune), bb), t, 1);
  for (int i = 0; i < 150; ++i) tr.train_step(one);
  EXPECT_LT(tr.evaluate(one).mean(), 0.05);
}

TEST(Trainer, RestoredStateContinuesBitExactly) {
  const auto samples = lookup_samples(8, 3);
  auto make = [&] {
    const Backbone bb = Backbone::init(tiny_model(), 12);
    TrainConfig t = small_train();
    t.warmup_steps = 2;
    return Trainer(bb, Adapter::create(adapter_of(StrategyKind::PrefixTuning), bb), t, samples.size());
  };
  Trainer a = make();
  EarlyStopper sa(2);
  for (int i = 0; i < 3; ++i) a.train_step(std::span(samples).subspan(i % 2 * 4, 4));
  sa.update(1.5);
  const TrainState snap = a.state(sa);
  a.rng().discard(3);

  Trainer b = make();
  EarlyStopper sb(2);
  b.restore(snap, sb);
  a.restore(snap, sa);
  EXPECT_EQ(b.step(), 3u);
  EXPECT_EQ(sb.best_epoch(), 1u);
  for (int i = 3; i < 7; ++i) {
    const double la = a.train_step(std::span(samples).subspan(i % 2 * 4, 4));
    const double lb = b.train_step(std::span(samples).subspan(i % 2 * 4, 4));
    ASSERT_EQ(la, lb) << i;
  }
  EXPECT_EQ(values(a.adapter().parameters()), values(b.adapter().parameters()));
  EXPECT_EQ(a.rng()(), b.rng()());
}

TEST(Trainer, RestoreRejectsForeignState) {
  const Backbone bb = Backbone::init(tiny_model(), 12);
  Trainer soft(bb, Adapter::create(adapter_of(StrategyKind::SoftPrompt), bb), small_train(), 4);
  Trainer prefix(bb, Adapter::create(adapter_of(StrategyKind::PrefixTuning), bb), small_train(), 4);
  EarlyStopper s(2);
  EXPECT_THROW(prefix.restore(soft.state(s), s), StateError);
}

std::string run_fit(StrategyKind kind, TrainResult* out = nullptr) {
  const auto all = lookup_samples(24, 4);
  const std::span<const DialogueSample> train(all.data(), 20), valid(all.data() + 20, 4);
  const Backbone bb = Backbone::init(tiny_model(), 21);
  TrainConfig t = small_train();
  t.max_epochs = 4;
  t.patience = 4;
  t.learning_rate = 5e-3;
  Trainer tr(bb, Adapter::create(adapter_of(kind), bb), t, train.size());
  std::ostringstream log;
  TrainResult r = fit(tr, train, valid, &log);
  // returned parameters are those of the best epoch
  EXPECT_DOUBLE_EQ(tr.evaluate(valid).mean(), r.best_valid_loss);
  if (out) *out = r;
  return log.str();
}

TEST(Fit, LogIsDeterministicAndBackboneConstant) {
  TrainResult r;
  const std::string first = run_fit(StrategyKind::DynamicPrompt, &r);
  EXPECT_EQ(first, run_fit(StrategyKind::DynamicPrompt));
  ASSERT_EQ(r.log.size(), 4u);
  std::istringstream lines(first);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, kTrainLogHeader);
  while (std::getline(lines, line)) {
    EXPECT_NE(line.find("," + checksum_hex(r.initial_backbone_checksum) + ","), std::string::npos) << line;
    EXPECT_EQ(line.substr(line.size() - 3), ",NA");
  }
  for (const auto& rec : r.log) EXPECT_LE(r.best_valid_loss, rec.valid_loss);
  EXPECT_EQ(r.steps, 20u);
}

TEST(Fit, FineTuneLogShowsChangingChecksum) {
  TrainResult r;
  run_fit(StrategyKind::FineTune, &r);
  ASSERT_GE(r.log.size(), 2u);
  EXPECT_NE(r.log[0].backbone_checksum, r.initial_backbone_checksum);
  EXPECT_NE(r.log[0].backbone_checksum, r.log[1].backbone_checksum);
}

TEST(Fit, EmptySplitsRejected) {
  const auto all = lookup_samples(4, 4);
  const Backbone bb = Backbone::init(tiny_model(), 21);
  Trainer tr(bb, Adapter::create(adapter_of(StrategyKind::SoftPrompt), bb), small_train(), 4);
  EXPECT_THROW(fit(tr, all, {}), EmptyCorpusError);
  EXPECT_THROW(fit(tr, {}, all), EmptyCorpusError);
}

}  // namespace
}  // namespace ctxprompt
