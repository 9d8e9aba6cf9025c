// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#include "ctxprompt/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ctxprompt/errors.hpp"
#include "ctxprompt/numerics/ops.hpp"
#include "ctxprompt/util/kv.hpp"

namespace ctxprompt {

double TrainConfig::peak_lr(StrategyKind kind) const {
  if (learning_rate > 0) return learning_rate;
  return kind == StrategyKind::FineTune ? 5e-5 : 1e-3;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0)) throw ConfigError("train.learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (patience == 0) throw ConfigError("train.patience must be at least 1");
  if (max_epochs == 0 && max_steps == 0) throw ConfigError("train.max_epochs or train.max_steps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("train.beta1/beta2 must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("train.adam_eps must be positive");
  if (!(clip_norm >= 0)) throw ConfigError("train.clip_norm must be non-negative");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {
      {"train.learning_rate", kv::format_double(learning_rate)},
      {"train.warmup_steps", std::to_string(warmup_steps)},
      {"train.scale_warmup", scale_warmup ? "true" : "false"},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.max_epochs", std::to_string(max_epochs)},
      {"train.max_steps", std::to_string(max_steps)},
      {"train.patience", std::to_string(patience)},
      {"train.weight_decay", kv::format_double(weight_decay)},
      {"train.beta1", kv::format_double(beta1)},
      {"train.beta2", kv::format_double(beta2)},
      {"train.adam_eps", kv::format_double(adam_eps)},
      {"train.clip_norm", kv::format_double(clip_norm)},
      {"train.seed", std::to_string(seed)},
      {"train.record_elapsed", record_elapsed ? "true" : "false"},
  };
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& m) {
  TrainConfig c;
  c.learning_rate = kv::get_double(m, "train.learning_rate", c.learning_rate);
  c.warmup_steps = kv::get_size(m, "train.warmup_steps", c.warmup_steps);
  c.scale_warmup = kv::get_bool(m, "train.scale_warmup", c.scale_warmup);
  c.batch_size = kv::get_size(m, "train.batch_size", c.batch_size);
  c.max_epochs = kv::get_size(m, "train.max_epochs", c.max_epochs);
  c.max_steps = kv::get_size(m, "train.max_steps", c.max_steps);
  c.patience = kv::get_size(m, "train.patience", c.patience);
  c.weight_decay = kv::get_double(m, "train.weight_decay", c.weight_decay);
  c.beta1 = kv::get_double(m, "train.beta1", c.beta1);
  c.beta2 = kv::get_double(m, "train.beta2", c.beta2);
  c.adam_eps = kv::get_double(m, "train.adam_eps", c.adam_eps);
  c.clip_norm = kv::get_double(m, "train.clip_norm", c.clip_norm);
  c.seed = kv::get_u64(m, "train.seed", c.seed);
  c.record_elapsed = kv::get_bool(m, "train.record_elapsed", c.record_elapsed);
  c.validate();
  return c;
}

double lr_at(double peak, std::size_t warmup, std::size_t total, std::size_t step) {
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total <= warmup) return peak;
  if (step >= total) return 0.0;
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

AdamW::AdamW(ParamSet params, AdamWOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& [name, t] : params_.entries()) {
    m_.emplace_back(t.numel(), Real{0});
    v_.emplace_back(t.numel(), Real{0});
  }
}

void AdamW::step(double lr) {
  const auto& entries = params_.entries();
  for (const auto& [name, t] : entries) {
    if (!t.has_grad()) continue;
    for (Real g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter group '" + name + "'");
    }
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor p = entries[i].second;
    auto data = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has_grad = p.has_grad();
    const auto grad = has_grad ? p.grad() : std::span<const Real>{};
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = has_grad ? grad[j] : 0.0;
      m[j] = static_cast<Real>(b1 * m[j] + (1 - b1) * g);
      v[j] = static_cast<Real>(b2 * v[j] + (1 - b2) * g * g);
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps);
      data[j] = static_cast<Real>(data[j] - lr * (update + options_.weight_decay * data[j]));
    }
  }
}

void AdamW::set_moments(const Moments& moments) {
  if (moments.m.size() != m_.size() || moments.v.size() != v_.size()) {
    throw StateError("optimizer moments do not match the parameter set");
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (moments.m[i].size() != m_[i].size() || moments.v[i].size() != v_[i].size()) {
      throw StateError("optimizer moments for '" + params_.entries()[i].first + "' have the wrong size");
    }
  }
  t_ = moments.t;
  m_ = moments.m;
  v_ = moments.v;
}

double clip_grad_norm(const ParamSet& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, t] : params.entries()) {
    if (!t.has_grad()) continue;
    for (Real g : t.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto factor = static_cast<Real>(max_norm / (norm + 1e-12));
    for (const auto& [name, t] : params.entries()) {
      if (!t.has_grad()) continue;
      Tensor p = t;
      for (auto& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

bool EarlyStopper::update(double valid_loss) {
  ++epochs_;
  if (valid_loss < best_) {
    best_ = valid_loss;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

void EarlyStopper::restore(std::size_t epochs, std::size_t best_epoch, double best, std::size_t since_best) {
  epochs_ = epochs;
  best_epoch_ = best_epoch;
  best_ = best;
  since_best_ = since_best;
}

std::string format_log_line(const EpochRecord& r, bool with_elapsed) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%.6f,%.6f,%.6e,%s,", r.epoch, r.step, r.train_loss, r.valid_loss, r.lr,
                checksum_hex(r.backbone_checksum).c_str());
  std::string line = buf;
  if (with_elapsed) {
    std::snprintf(buf, sizeof(buf), "%.3f", r.elapsed_s);
    line += buf;
  } else {
    line += "NA";
  }
  return line;
}

double LossSum::mean() const {
  if (tokens == 0) throw EmptyLossError("no response tokens to average over");
  return nll / static_cast<double>(tokens);
}

namespace {

std::size_t schedule_length(const TrainConfig& c, std::size_t train_samples) {
  if (c.max_steps > 0) return c.max_steps;
  const std::size_t per_epoch = (train_samples + c.batch_size - 1) / c.batch_size;
  return std::max<std::size_t>(1, c.max_epochs * per_epoch);
}

}  // namespace

Trainer::Trainer(Backbone backbone, Adapter adapter, TrainConfig config, std::size_t train_samples)
    : backbone_(std::move(backbone)),
      adapter_(std::move(adapter)),
      config_(config),
      trainable_(adapter_.trainable(backbone_)),
      optimizer_(trainable_, AdamWOptions{config.beta1, config.beta2, config.adam_eps, config.weight_decay}),
      total_steps_(schedule_length(config, train_samples)),
      warmup_(config.scale_warmup ? std::min(config.warmup_steps, total_steps_ / 10) : config.warmup_steps),
      rng_(config.seed) {
  config_.validate();
  adapter_.prepare(backbone_);
}

// lr of the most recent update; update n (1-based) uses lr_at(.., n).
double Trainer::lr() const { return lr_at(config_.peak_lr(adapter_.kind()), warmup_, total_steps_, step()); }

Tensor Trainer::batch_loss(std::span<const DialogueSample> batch) const {
  std::vector<Tensor> sums;
  std::size_t tokens = 0;
  for (const auto& s : batch) {
    const Composition c = adapter_.compose(backbone_, s);
    const std::size_t n = response_count(c);
    if (n == 0) continue;
    sums.push_back(response_nll_sum(adapter_.run(backbone_, c).logits, c));
    tokens += n;
  }
  if (tokens == 0) throw EmptyLossError("batch has no response tokens");
  return ops::scale(ops::add_n(sums), Real(1) / static_cast<Real>(tokens));
}

double Trainer::train_step(std::span<const DialogueSample> batch) {
  trainable_.zero_grad();
  Tape tape;
  double value = 0;
  {
    TapeScope scope(tape);
    Tensor loss = batch_loss(batch);
    value = loss.item();
    tape.backward(loss);
  }
  if (config_.clip_norm > 0) clip_grad_norm(trainable_, config_.clip_norm);
  optimizer_.step(lr_at(config_.peak_lr(adapter_.kind()), warmup_, total_steps_, step() + 1));
  return value;
}

LossSum Trainer::evaluate(std::span<const DialogueSample> samples) const {
  NoGradScope no_grad;
  LossSum total;
  for (const auto& s : samples) {
    const Composition c = adapter_.compose(backbone_, s);
    total.nll += response_nll_sum(adapter_.run(backbone_, c).logits, c).item();
    total.tokens += response_count(c);
  }
  return total;
}

TrainState Trainer::state(const EarlyStopper& stopper) const {
  TrainState s;
  for (const auto& [name, t] : trainable_.entries()) s.params.emplace_back(name, std::vector<Real>(t.data().begin(), t.data().end()));
  s.moments = optimizer_.moments();
  s.step = step();
  s.epoch = stopper.epochs();
  s.best_epoch = stopper.best_epoch();
  s.best_valid_loss = stopper.best_loss();
  s.epochs_since_best = stopper.epochs_since_best();
  std::ostringstream os;
  os << rng_;
  s.rng = os.str();
  return s;
}

void Trainer::restore(const TrainState& s, EarlyStopper& stopper) {
  const auto& entries = trainable_.entries();
  if (s.params.size() != entries.size()) throw StateError("train state does not match the trainable parameters");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (s.params[i].first != entries[i].first || s.params[i].second.size() != entries[i].second.numel()) {
      throw StateError("train state entry '" + s.params[i].first + "' does not match '" + entries[i].first + "'");
    }
    Tensor p = entries[i].second;
    std::copy(s.params[i].second.begin(), s.params[i].second.end(), p.mutable_data().begin());
  }
  optimizer_.set_moments(s.moments);
  stopper.restore(s.epoch, s.best_epoch, s.best_valid_loss, s.epochs_since_best);
  std::istringstream is(s.rng);
  is >> rng_;
  if (!is) throw StateError("train state has a malformed generator state");
}

TrainResult fit(Trainer& trainer, std::span<const DialogueSample> train, std::span<const DialogueSample> valid,
                std::ostream* log) {
  if (train.empty()) throw EmptyCorpusError("no training samples");
  if (valid.empty()) throw EmptyCorpusError("no validation samples");
  const TrainConfig& cfg = trainer.config();
  const bool frozen = trainer.adapter().kind() != StrategyKind::FineTune;
  const auto started = std::chrono::steady_clock::now();

  TrainResult result;
  result.initial_backbone_checksum = checksum(trainer.backbone());
  EarlyStopper stopper(cfg.patience);
  const ParamSet trainable = trainer.adapter().trainable(trainer.backbone());
  std::vector<std::vector<Real>> best;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  if (log) *log << kTrainLogHeader << '\n' << std::flush;

  const std::size_t epoch_limit = cfg.max_epochs > 0 ? cfg.max_epochs : std::numeric_limits<std::size_t>::max();
  for (std::size_t epoch = 1; epoch <= epoch_limit && trainer.step() < trainer.total_steps(); ++epoch) {
    std::shuffle(order.begin(), order.end(), trainer.rng());
    double train_nll = 0;
    std::size_t batches = 0;
    std::vector<DialogueSample> batch;
    for (std::size_t start = 0; start < order.size() && trainer.step() < trainer.total_steps();
         start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(train[order[i]]);
      train_nll += trainer.train_step(batch);
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = trainer.step();
    rec.train_loss = train_nll / static_cast<double>(std::max<std::size_t>(1, batches));
    rec.valid_loss = trainer.evaluate(valid).mean();
    rec.lr = trainer.lr();
    rec.backbone_checksum = checksum(trainer.backbone());
    rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(rec);
    if (log) *log << format_log_line(rec, cfg.record_elapsed) << '\n' << std::flush;

    if (!std::isfinite(rec.valid_loss)) {
      throw NumericError("validation loss is not finite at epoch " + std::to_string(epoch));
    }
    if (frozen && rec.backbone_checksum != result.initial_backbone_checksum) {
      throw InvariantError("backbone checksum changed from " + checksum_hex(result.initial_backbone_checksum) + " to " +
                           checksum_hex(rec.backbone_checksum) + " under " +
                           std::string(strategy_name(trainer.adapter().kind())));
    }
    if (stopper.update(rec.valid_loss)) {
      best.clear();
      for (const auto& [name, t] : trainable.entries()) best.emplace_back(t.data().begin(), t.data().end());
    }
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }

  const auto& entries = trainable.entries();
  for (std::size_t i = 0; i < best.size(); ++i) {
    Tensor p = entries[i].second;
    std::copy(best[i].begin(), best[i].end(), p.mutable_data().begin());
  }
  result.best_epoch = stopper.best_epoch();
  result.best_valid_loss = stopper.best_loss();
  result.steps = trainer.step();
  return result;
}

}  // namespace ctxprompt
