#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "smt/model.hpp"

namespace smt {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double lr_peak = 5e-4;
  double lr_warmup_start = 5e-5;
  double warmup_epochs = 2;
  double cosine_final_ratio = 0.5;  // final lr = ratio * peak
  std::size_t early_stop_patience = 20;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  void write(KeyValues& kv) const;
  static TrainConfig read(const KeyValues& kv);

  bool operator==(const TrainConfig&) const = default;
};

/// Learning rate at `epoch` (fractional epochs allowed): linear warm-up from
/// `lr_warmup_start` to `lr_peak` over `warmup_epochs`, then cosine decay from
/// the peak to `cosine_final_ratio * lr_peak` at `epochs`.
double lr_schedule(double epoch, const TrainConfig& cfg);

/// AdamW moments, one pair of arrays per parameter.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;

  /// Zero moments shaped like `params`.
  static OptimizerState zeros_like(const std::vector<Parameter>& params);
};

/// One AdamW update using each parameter's `value.grad` (missing grads count
/// as zero). Weight decay is decoupled and only hits parameters flagged for it.
/// Throws NumericError naming the parameter on a non-finite gradient.
void adamw_step(std::vector<Parameter>& params, OptimizerState& state, double lr,
                const TrainConfig& cfg);

/// A training pair on the normalized scale.
struct Example {
  ModelInput input;
  Real target = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
};

/// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  std::vector<Parameter> params;
  OptimizerState optimizer;
  std::size_t next_epoch = 0;
  double best_val_loss = 0;
  std::size_t best_epoch = 0;
};

struct TrainResult {
  /// Parameters at the epoch with the lowest validation loss. Empty when a
  /// resumed run never improved on the loss it was resumed with.
  std::vector<Parameter> best_params;
  double best_val_loss = 0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  bool early_stopped = false;
  /// State after the last completed epoch.
  TrainState final_state;
};

struct TrainOptions {
  /// Stop (without early-stopping semantics) once this epoch index is reached.
  std::optional<std::size_t> stop_before_epoch;
  const TrainState* resume = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mean squared error of `model` over `examples` (forward passes only).
double evaluate_mse(SmtModel& model, const std::vector<Example>& examples);

/// Mini-batch AdamW training with per-epoch validation and early stopping.
/// Batches are shuffled with a generator seeded from (seed, epoch), so a
/// resumed run replays the same order. Throws ConfigError on empty splits.
TrainResult train(SmtModel& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainConfig& cfg,
                  const TrainOptions& options = {});

}  // namespace smt
