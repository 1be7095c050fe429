#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smt/config.hpp"
#include "smt/image.hpp"
#include "smt/solar.hpp"
#include "smt/train.hpp"

namespace smt {

/// Grid spacing of every manifest.
inline constexpr int kSlotSeconds = 600;

struct ManifestRow {
  Instant timestamp;
  int utc_offset_min = 0;     // offset written in the timestamp
  std::string image_path;     // empty when no image was captured
  std::optional<double> ghi;  // W/m^2, empty when missing
  std::size_t line = 0;       // 1-based line in the source file
};

/// Parses a `timestamp,image_path,ghi` CSV. Timestamps must sit on the
/// 10-minute grid and increase strictly. Throws ParseError (line, column) on
/// bad rows and IoError when the file cannot be read.
std::vector<ManifestRow> parse_manifest(const std::string& path);
std::vector<ManifestRow> parse_manifest_text(std::string_view text);

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

/// Site files hold `latitude`, `longitude`, `altitude_m`, `utc_offset_min`.
SiteConfig read_site(const KeyValues& kv);
void write_site(KeyValues& kv, const SiteConfig& site);
SiteConfig load_site(const std::string& path);

enum class Normalization { daily_max, global };
const char* to_string(Normalization mode);
Normalization parse_normalization(const std::string& text);

struct PipelineConfig {
  int horizon_min = 120;
  std::size_t window_len = 144;   // S, in 10-minute slots
  std::size_t max_gap_slots = 3;  // longest daytime gap that is interpolated
  std::size_t frames = 1;         // F images per sample, oldest first
  int frame_step_min = 10;        // spacing between consecutive frames
  Normalization normalization = Normalization::daily_max;
  double global_scale = 1000.0;   // W/m^2 divisor when normalization is global

  void validate() const;
  void write(KeyValues& kv) const;
  static PipelineConfig read(const KeyValues& kv);
};

/// One forecasting example: inputs up to t, target at t + horizon.
struct SampleRecord {
  Instant t;
  Instant target_time;
  int utc_offset_min = 0;
  std::vector<std::string> frame_paths;                // oldest first, as in the manifest
  std::vector<std::shared_ptr<const Image>> frames;    // filled by attach_images
  std::vector<double> window;                          // S normalized values ending at t
  double target = 0;                                   // normalized GHI at target_time
  double ghi_t = 0;                                    // W/m^2 at t
  double target_ghi = 0;                               // W/m^2 at target_time
  double day_max_t = 0;                                // clear-sky day maximum of t's day
  double day_max_target = 0;                           // same for the target's day
  double target_scale = 0;                             // divisor that produced `target`

  double denormalize(double y) const { return y * target_scale; }
  Date local_day() const { return local_date(t, utc_offset_min); }
};

/// Why candidate samples were rejected.
struct DropReport {
  std::size_t candidates = 0;
  std::size_t night = 0;           // t itself is night
  std::size_t missing_image = 0;
  std::size_t missing_target = 0;  // no GHI (or no row) at the target instant
  std::size_t night_target = 0;
  std::size_t window_gap = 0;      // uninterpolable gap in the history window
  std::size_t total() const { return night + missing_image + missing_target + night_target + window_gap; }
};

/// Assembles samples from grid-aligned rows. The window is wall-clock: night
/// slots are zero, short daytime gaps are interpolated and every slot is
/// divided by its own day's clear-sky maximum. Images are not loaded.
std::vector<SampleRecord> build_samples(const std::vector<ManifestRow>& rows, const SiteConfig& site,
                                        const PipelineConfig& cfg, DropReport* report = nullptr);

/// Loads each distinct frame once (paths relative to `base_dir`) and shares
/// it between samples.
void attach_images(std::vector<SampleRecord>& samples, const std::string& base_dir, std::size_t height,
                   std::size_t width);

/// Model input for a sample; `with_images` false leaves the frames empty.
Example to_example(const SampleRecord& sample, bool with_images = true);
std::vector<Example> to_examples(const std::vector<SampleRecord>& samples, bool with_images = true);

struct DataSplit {
  std::vector<SampleRecord> train, val, test, held_out;
};

/// train: local date <= train_end, val: train_end < date <= val_end, test:
/// later. Samples on `held_out_dates` go to `held_out` whatever their split.
/// Throws ConfigError when train_end >= val_end or train_end precedes the data.
DataSplit split_chronological(const std::vector<SampleRecord>& samples, Date train_end, Date val_end,
                              const std::vector<Date>& held_out_dates = {});

/// Split dates giving roughly the requested fractions of days (remaining days
/// go to test). Returns {train_end, val_end}.
std::pair<Date, Date> split_dates_by_fraction(const std::vector<SampleRecord>& samples, double train_fraction,
                                              double val_fraction);

/// Inclusive date range `first..last`.
std::vector<Date> date_range(Date first, Date last);

/// Directory part of a path ("" for a bare file name).
std::string parent_dir(const std::string& path);

}  // namespace smt
