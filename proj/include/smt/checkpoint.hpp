#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smt/error.hpp"
#include "smt/model.hpp"
#include "smt/train.hpp"

namespace smt {

enum class CheckpointErrorKind { bad_magic, version_skew, truncated, malformed };

class CheckpointError : public FormatError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Width of stored parameter and moment values. 32 is the standard format;
/// 64 keeps resumable training states bit-exact.
enum class ValueBits : std::uint32_t { f32 = 32, f64 = 64 };

/// Serialized model + training state. Values held here are exactly the
/// values written to disk (already rounded when `bits` is f32).
struct Checkpoint {
  SmtConfig model_config;
  TrainConfig train_config;
  /// Run settings that are neither model nor optimizer keys (site, data
  /// pipeline, split dates, ...).
  KeyValues run_settings;
  ValueBits bits = ValueBits::f32;
  std::vector<Parameter> params;
  std::optional<OptimizerState> optimizer;
  double best_val_loss = 0;
  std::uint32_t epoch = 0;
  std::uint32_t best_epoch = 0;

  /// Model built from the stored parameters.
  SmtModel to_model() const { return SmtModel(model_config, params); }
};

/// Builds a checkpoint, rounding parameter (and moment) values to `bits`.
Checkpoint make_checkpoint(const SmtConfig& model_config, const TrainConfig& train_config,
                           const KeyValues& run_settings, const std::vector<Parameter>& params,
                           ValueBits bits = ValueBits::f32,
                           const OptimizerState* optimizer = nullptr);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError with a kind naming the failure.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace smt
