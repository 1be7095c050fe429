#include "smt/run.hpp"

#include <filesystem>
#include <fstream>

#include "smt/error.hpp"

namespace smt {

void RunConfig::validate() const {
  model.validate();
  train.validate();
  pipeline.validate();
  if (site) site->validate();
  if (model.ts_len != pipeline.window_len) {
    throw ConfigError("model window length " + std::to_string(model.ts_len) + " differs from pipeline window " +
                      std::to_string(pipeline.window_len));
  }
  if (model.frames != pipeline.frames) throw ConfigError("model and pipeline disagree on the frame count");
  if (model.ts_count != 1 && model.uses_series()) {
    throw ConfigError("the manifest pipeline provides a single series (ts_count must be 1)");
  }
  if (!(split.train_fraction > 0) || !(split.val_fraction > 0) || split.train_fraction + split.val_fraction >= 1) {
    throw ConfigError("train_fraction and val_fraction must be positive and sum below 1");
  }
  if (split.train_end.has_value() != split.val_end.has_value()) {
    throw ConfigError("train_end and val_end must be given together");
  }
}

KeyValues RunConfig::to_kv() const {
  KeyValues kv;
  model.write(kv);
  train.write(kv);
  pipeline.write(kv);
  if (site) write_site(kv, *site);
  if (split.train_end) kv.set("train_end", format_date(*split.train_end));
  if (split.val_end) kv.set("val_end", format_date(*split.val_end));
  kv.set("train_fraction", split.train_fraction);
  kv.set("val_fraction", split.val_fraction);
  if (!split.held_out.empty()) kv.set("held_out", format_date_list(split.held_out));
  kv.set("checkpoint_bits", static_cast<long long>(checkpoint_bits));
  return kv;
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
  RunConfig c;
  c.model = SmtConfig::read(kv);
  c.train = TrainConfig::read(kv);
  c.pipeline = PipelineConfig::read(kv);
  if (kv.has("latitude")) c.site = read_site(kv);
  if (kv.has("train_end")) c.split.train_end = parse_date(kv.get_string("train_end"));
  if (kv.has("val_end")) c.split.val_end = parse_date(kv.get_string("val_end"));
  c.split.train_fraction = kv.get_double("train_fraction", c.split.train_fraction);
  c.split.val_fraction = kv.get_double("val_fraction", c.split.val_fraction);
  if (kv.has("held_out")) c.split.held_out = parse_date_list(kv.get_string("held_out"));
  const long long bits = kv.get_int("checkpoint_bits", 32);
  if (bits != 32 && bits != 64) throw ConfigError("checkpoint_bits must be 32 or 64");
  c.checkpoint_bits = static_cast<ValueBits>(bits);
  c.validate();
  return c;
}

std::vector<Date> parse_date_list(const std::string& text) {
  std::vector<Date> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    std::string item = text.substr(pos, comma - pos);
    pos = comma + 1;
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_date(item));
    } else {
      const auto range = date_range(parse_date(item.substr(0, dots)), parse_date(item.substr(dots + 2)));
      if (range.empty()) throw ConfigError("empty date range '" + item + "'");
      out.insert(out.end(), range.begin(), range.end());
    }
  }
  return out;
}

std::string format_date_list(const std::vector<Date>& dates) {
  std::string out;
  for (const auto& d : dates) {
    if (!out.empty()) out += ',';
    out += format_date(d);
  }
  return out;
}

SiteConfig resolve_site(const RunConfig& cfg, const std::string& manifest_path) {
  if (cfg.site) return *cfg.site;
  const auto beside = std::filesystem::path(parent_dir(manifest_path)) / "site.cfg";
  if (std::filesystem::exists(beside)) return load_site(beside.string());
  throw ConfigError("no site given: set latitude/longitude in the config, pass --site, or place site.cfg next to "
                    "the manifest");
}

Dataset load_dataset(const std::string& manifest_path, const RunConfig& cfg, bool load_images) {
  cfg.validate();
  Dataset d;
  d.site = resolve_site(cfg, manifest_path);
  const auto rows = parse_manifest(manifest_path);
  d.samples = build_samples(rows, d.site, cfg.pipeline, &d.dropped);
  if (d.samples.empty()) throw ConfigError("manifest '" + manifest_path + "' yields no usable samples");
  if (load_images) {
    attach_images(d.samples, parent_dir(manifest_path), cfg.model.image_height, cfg.model.image_width);
  }
  if (cfg.split.train_end) {
    d.train_end = *cfg.split.train_end;
    d.val_end = *cfg.split.val_end;
  } else {
    std::tie(d.train_end, d.val_end) =
        split_dates_by_fraction(d.samples, cfg.split.train_fraction, cfg.split.val_fraction);
  }
  d.split = split_chronological(d.samples, d.train_end, d.val_end, cfg.split.held_out);
  return d;
}

TrainingRun run_training(const Dataset& data, const RunConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  const bool images = cfg.model.uses_image();
  const auto train_set = to_examples(data.split.train, images);
  const auto val_set = to_examples(data.split.val, images);
  SmtModel model(cfg.model, cfg.train.seed);
  TrainingRun run;
  run.result = train(model, train_set, val_set, cfg.train, options);

  KeyValues settings = cfg.to_kv();
  write_site(settings, data.site);
  settings.set("train_end", format_date(data.train_end));
  settings.set("val_end", format_date(data.val_end));
  const auto& best = run.result.best_params.empty() ? model.parameters() : run.result.best_params;
  run.checkpoint = make_checkpoint(cfg.model, cfg.train, settings, best, cfg.checkpoint_bits);
  run.checkpoint.best_val_loss = run.result.best_val_loss;
  run.checkpoint.best_epoch = static_cast<std::uint32_t>(run.result.best_epoch);
  run.checkpoint.epoch = static_cast<std::uint32_t>(run.result.final_state.next_epoch);
  return run;
}

MetricsReport Forecasts::metrics() const { return compute_metrics(observed, predicted, horizon_min); }

std::vector<DailyRmse> Forecasts::daily() const {
  std::vector<DatedPair> pairs;
  pairs.reserve(observed.size());
  for (std::size_t i = 0; i < observed.size(); ++i) pairs.push_back({days[i], observed[i], predicted[i]});
  return daily_rmse(pairs);
}

Forecasts forecast_model(SmtModel& model, const std::vector<SampleRecord>& samples, double horizon_min) {
  Forecasts f;
  f.horizon_min = horizon_min;
  const bool images = model.config().uses_image();
  for (const auto& s : samples) {
    const Real y = model.predict(to_example(s, images).input);
    f.times.push_back(s.target_time);
    f.days.push_back(local_date(s.target_time, s.utc_offset_min));
    f.observed.push_back(s.target_ghi);
    f.predicted.push_back(s.denormalize(y));
  }
  return f;
}

Forecasts forecast_persistence(const std::vector<SampleRecord>& samples, const SiteConfig& site,
                               double horizon_min) {
  Forecasts f;
  f.horizon_min = horizon_min;
  for (const auto& s : samples) {
    const auto now = solar_context(site, s.t);
    const auto later = solar_context(site, s.target_time);
    f.times.push_back(s.target_time);
    f.days.push_back(local_date(s.target_time, s.utc_offset_min));
    f.observed.push_back(s.target_ghi);
    f.predicted.push_back(smart_persistence(s.ghi_t, now, later).value);
  }
  return f;
}

void write_forecasts_csv(const std::string& path, const Forecasts& f, int utc_offset_min) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "timestamp,observed,predicted\n";
  for (std::size_t i = 0; i < f.observed.size(); ++i) {
    out << format_iso8601(f.times[i], utc_offset_min) << ',' << format_real(f.observed[i]) << ','
        << format_real(f.predicted[i]) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "epoch,lr,train_loss,val_loss\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_real(r.lr) << ',' << format_real(r.train_loss) << ','
        << format_real(r.val_loss) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

const std::vector<SampleRecord>& split_named(const Dataset& data, const std::string& name) {
  if (name == "train") return data.split.train;
  if (name == "val") return data.split.val;
  if (name == "test") return data.split.test;
  if (name == "held_out") return data.split.held_out;
  if (name == "all") return data.samples;
  throw ConfigError("unknown split '" + name + "' (expected train, val, test, held_out or all)");
}

}  // namespace smt
