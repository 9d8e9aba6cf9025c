// Copyright 2026 The ctxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ctxprompt/adapters/adapter.hpp"
#include "ctxprompt/corpus/sample.hpp"
#include "ctxprompt/model/transformer.hpp"

namespace ctxprompt {

struct TrainConfig {
  double learning_rate = 0;  // 0 -> 1e-3 for prompt strategies, 5e-5 for finetune
  std::size_t warmup_steps = 5000;
  bool scale_warmup = true;  // warmup = min(warmup_steps, total_steps / 10)
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t max_steps = 0;  // 0 -> max_epochs * batches per epoch
  std::size_t patience = 2;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm, 0 disables
  std::uint64_t seed = 0;
  bool record_elapsed = false;  // wall-clock column; off keeps logs reproducible

  double peak_lr(StrategyKind kind) const;
  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Linear warmup 0 -> peak over `warmup` steps, then linear decay to 0 at `total`.
double lr_at(double peak, std::size_t warmup, std::size_t total, std::size_t step);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
 public:
  AdamW(ParamSet params, AdamWOptions options);

  // Throws NumericError naming the parameter when a gradient is not finite.
  void step(double lr);
  std::size_t steps() const { return t_; }
  const ParamSet& params() const { return params_; }

  struct Moments {
    std::size_t t = 0;
    std::vector<std::vector<Real>> m, v;
  };
  Moments moments() const { return {t_, m_, v_}; }
  void set_moments(const Moments& moments);

 private:
  ParamSet params_;
  AdamWOptions options_;
  std::size_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

// Scales gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(const ParamSet& params, double max_norm);

// Stops after `patience` consecutive epochs without a strictly lower loss.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  bool update(double valid_loss);  // true when this epoch is the new best
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_loss() const { return best_; }
  std::size_t epochs_since_best() const { return since_best_; }
  std::size_t epochs() const { return epochs_; }
  void restore(std::size_t epochs, std::size_t best_epoch, double best, std::size_t since_best);

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t since_best_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double train_loss = 0;
  double valid_loss = 0;
  double lr = 0;
  std::uint64_t backbone_checksum = 0;
  double elapsed_s = 0;
};

inline constexpr const char* kTrainLogHeader = "epoch,step,train_loss,valid_loss,lr,backbone_checksum,elapsed_s";
std::string format_log_line(const EpochRecord& record, bool with_elapsed);

// Everything needed to continue a run bit-exactly.
struct TrainState {
  std::vector<std::pair<std::string, std::vector<Real>>> params;  // trainable values
  AdamW::Moments moments;
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t best_epoch = 0;
  double best_valid_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_best = 0;
  std::string rng;
};

// Mean response cross-entropy over a set of samples.
struct LossSum {
  double nll = 0;
  std::size_t tokens = 0;
  double mean() const;
};

class Trainer {
 public:
  // The schedule length comes from max_steps, or max_epochs times the
  // number of batches in train_samples.
  Trainer(Backbone backbone, Adapter adapter, TrainConfig config, std::size_t train_samples);

  // One optimizer step on a batch; returns the batch mean loss.
  double train_step(std::span<const DialogueSample> batch);
  // Loss with gradients, no update.
  Tensor batch_loss(std::span<const DialogueSample> batch) const;
  LossSum evaluate(std::span<const DialogueSample> samples) const;

  std::size_t step() const { return optimizer_.steps(); }
  std::size_t total_steps() const { return total_steps_; }
  std::size_t warmup_steps() const { return warmup_; }
  double lr() const;
  const TrainConfig& config() const { return config_; }
  const Backbone& backbone() const { return backbone_; }
  const Adapter& adapter() const { return adapter_; }
  std::mt19937_64& rng() { return rng_; }

  TrainState state(const EarlyStopper& stopper) const;
  void restore(const TrainState& state, EarlyStopper& stopper);

 private:
  Backbone backbone_;
  Adapter adapter_;
  TrainConfig config_;
  ParamSet trainable_;
  AdamW optimizer_;
  std::size_t total_steps_;
  std::size_t warmup_;
  std::mt19937_64 rng_;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_valid_loss = 0;
  bool stopped_early = false;
  std::size_t steps = 0;
  std::uint64_t initial_backbone_checksum = 0;
};

// Trains until early stopping, max_epochs or max_steps, then restores the
// trainable parameters of the best validation epoch. Writes one CSV line per
// epoch to `log` when given. Under prompt strategies a changed backbone
// checksum raises InvariantError; a non-finite validation loss NumericError.
TrainResult fit(Trainer& trainer, std::span<const DialogueSample> train, std::span<const DialogueSample> valid,
                std::ostream* log = nullptr);

}  // namespace ctxprompt
