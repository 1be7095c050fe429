#pragma once

#include <optional>
#include <string>
#include <vector>

#include "smt/checkpoint.hpp"
#include "smt/data.hpp"
#include "smt/metrics.hpp"
#include "smt/train.hpp"

namespace smt {

/// How samples are divided into train / validation / test.
struct SplitSettings {
  std::optional<Date> train_end;
  std::optional<Date> val_end;
  /// Used when the dates are not given: fractions of sample days.
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  /// Days kept out of every split (e.g. a period reserved for comparison).
  std::vector<Date> held_out;
};

/// Everything one experiment needs, read from a single key-value file.
struct RunConfig {
  SmtConfig model;
  TrainConfig train;
  PipelineConfig pipeline;
  std::optional<SiteConfig> site;
  SplitSettings split;
  ValueBits checkpoint_bits = ValueBits::f32;

  /// Cross-checks sub-configs (window length and frame count are shared by
  /// the model and the pipeline).
  void validate() const;
  KeyValues to_kv() const;
  static RunConfig from_kv(const KeyValues& kv);
};

/// Parses `2023-03-28..2023-04-11,2023-05-01` into a list of days.
std::vector<Date> parse_date_list(const std::string& text);
std::string format_date_list(const std::vector<Date>& dates);

struct Dataset {
  SiteConfig site;
  std::vector<SampleRecord> samples;
  DropReport dropped;
  Date train_end, val_end;
  DataSplit split;
};

/// Site from the config, or `site.cfg` next to the manifest.
SiteConfig resolve_site(const RunConfig& cfg, const std::string& manifest_path);

/// Parses, assembles, optionally loads images at the model's input size,
/// and splits.
Dataset load_dataset(const std::string& manifest_path, const RunConfig& cfg, bool load_images);

struct TrainingRun {
  TrainResult result;
  Checkpoint checkpoint;  // best-validation parameters
};

/// Trains a fresh model (seeded by cfg.train.seed) on the dataset's train
/// split with validation-based early stopping.
TrainingRun run_training(const Dataset& data, const RunConfig& cfg, const TrainOptions& options = {});

/// Forecasts for a set of samples, in W/m^2.
struct Forecasts {
  std::vector<Instant> times;
  std::vector<Date> days;
  std::vector<double> observed;
  std::vector<double> predicted;
  double horizon_min = 0;

  MetricsReport metrics() const;
  std::vector<DailyRmse> daily() const;
};

Forecasts forecast_model(SmtModel& model, const std::vector<SampleRecord>& samples, double horizon_min);
/// Smart persistence from each sample's issue time to its target time.
Forecasts forecast_persistence(const std::vector<SampleRecord>& samples, const SiteConfig& site,
                               double horizon_min);

/// `timestamp,observed,predicted` with target timestamps.
void write_forecasts_csv(const std::string& path, const Forecasts& f, int utc_offset_min);
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

/// Samples of a named split ("train", "val", "test", "held_out" or "all").
const std::vector<SampleRecord>& split_named(const Dataset& data, const std::string& name);

}  // namespace smt
