#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "smt/attention.hpp"
#include "smt/error.hpp"
#include "smt/run.hpp"
#include "smt/synthetic.hpp"

namespace smt::cli {
namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void apply(KeyValues& kv, const std::string& key, const std::string& value) {
  const auto old = kv.find(key);
  if (old && *old == value) return;
  std::cerr << "override: " << key << " = " << value << (old ? " (was " + *old + ")" : std::string()) << '\n';
  kv.set(key, value);
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
  KeyValues kv;
  ckpt.model_config.write(kv);
  ckpt.train_config.write(kv);
  kv.merge(ckpt.run_settings);
  return RunConfig::from_kv(kv);
}

void check_horizon(const Overrides& o, const RunConfig& cfg) {
  if (o.horizon_min && *o.horizon_min != cfg.pipeline.horizon_min) {
    throw ConfigError("checkpoint was trained for a " + std::to_string(cfg.pipeline.horizon_min) +
                      "-minute horizon, not " + std::to_string(*o.horizon_min));
  }
}

void write_reports(const std::string& out, const Forecasts& f, int utc_offset_min) {
  write_metrics_csv(join(out, "report.csv"), f.metrics());
  write_daily_csv(join(out, "daily.csv"), f.daily());
  write_forecasts_csv(join(out, "forecasts.csv"), f, utc_offset_min);
}

void print_metrics(const char* label, const MetricsReport& m) {
  std::printf("%s: n=%zu rmse=%.4f rse=%s corr=%s (W/m^2, horizon %g min)\n", label, m.n, m.rmse,
              m.rse ? format_real(*m.rse).c_str() : "n/a", m.corr ? format_real(*m.corr).c_str() : "n/a",
              m.horizon_min);
}

}  // namespace

KeyValues effective_settings(const Overrides& o) {
  KeyValues kv;
  if (o.config) kv = KeyValues::load(*o.config);
  if (o.site) {
    const KeyValues site = KeyValues::load(*o.site);
    for (const auto& [k, v] : site.entries()) apply(kv, k, v);
  }
  if (o.seed) apply(kv, "seed", std::to_string(*o.seed));
  if (o.horizon_min) apply(kv, "horizon_min", std::to_string(*o.horizon_min));
  if (o.pillars) apply(kv, "pillars", *o.pillars);
  if (o.patch_shape) apply(kv, "patch_shape", *o.patch_shape);
  if (o.frames) apply(kv, "frames", std::to_string(*o.frames));
  if (o.window_len) apply(kv, "window_len", std::to_string(*o.window_len));
  if (o.epochs) apply(kv, "epochs", std::to_string(*o.epochs));
  for (const auto& item : o.set) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + item + "'");
    apply(kv, item.substr(0, eq), item.substr(eq + 1));
  }
  return kv;
}

int cmd_synth(const SynthArgs& a) {
  KeyValues kv = effective_settings(a.overrides);
  if (a.days) apply(kv, "days", std::to_string(*a.days));
  if (a.regime) apply(kv, "regime", *a.regime);
  const SynthConfig cfg = SynthConfig::read(kv);
  const auto summary = generate_synthetic(cfg, a.out);
  std::printf("wrote %zu daytime rows over %zu days to %s\n", summary.rows, summary.days, a.out.c_str());
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = RunConfig::from_kv(effective_settings(a.overrides));
  ensure_dir(a.out);
  // Echo before any work so a failed run still records what it tried.
  cfg.to_kv().save(join(a.out, "effective.cfg"));

  const Dataset data = load_dataset(a.manifest, cfg, cfg.model.uses_image());
  std::printf("samples: %zu (train %zu, val %zu, test %zu, held out %zu); dropped %zu of %zu candidates\n",
              data.samples.size(), data.split.train.size(), data.split.val.size(), data.split.test.size(),
              data.split.held_out.size(), data.dropped.total(), data.dropped.candidates);
  std::printf("split: train <= %s < val <= %s < test\n", format_date(data.train_end).c_str(),
              format_date(data.val_end).c_str());

  TrainOptions opts;
  opts.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %3zu  lr %.3e  train %.6f  val %.6f\n", r.epoch, r.lr, r.train_loss, r.val_loss);
    std::fflush(stdout);
  };
  const TrainingRun run = run_training(data, cfg, opts);

  KeyValues echo = cfg.to_kv();
  write_site(echo, data.site);
  echo.set("train_end", format_date(data.train_end));
  echo.set("val_end", format_date(data.val_end));
  echo.save(join(a.out, "effective.cfg"));
  write_history_csv(join(a.out, "loss_history.csv"), run.result.history);
  save_checkpoint(join(a.out, "model.ckpt"), run.checkpoint);
  std::printf("best val loss %.6f at epoch %zu%s; checkpoint %s\n", run.result.best_val_loss,
              run.result.best_epoch, run.result.early_stopped ? " (early stop)" : "",
              join(a.out, "model.ckpt").c_str());
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  RunConfig cfg = config_from_checkpoint(ckpt);
  check_horizon(a.overrides, cfg);
  if (a.overrides.site) cfg.site = load_site(*a.overrides.site);
  SmtModel model = ckpt.to_model();
  const Dataset data = load_dataset(a.manifest, cfg, cfg.model.uses_image());
  const auto& samples = split_named(data, a.split);
  if (samples.size() < 2) throw ConfigError("split '" + a.split + "' has fewer than two samples");
  ensure_dir(a.out);
  const Forecasts f = forecast_model(model, samples, cfg.pipeline.horizon_min);
  write_reports(a.out, f, data.site.utc_offset_min);
  print_metrics(("smt " + a.split).c_str(), f.metrics());
  if (!data.split.val.empty()) {
    const double val = evaluate_mse(model, to_examples(data.split.val, cfg.model.uses_image()));
    std::printf("sanity: stored best val loss %.6f (epoch %u), recomputed val loss %.6f\n", ckpt.best_val_loss,
                ckpt.best_epoch, val);
  }
  return 0;
}

int cmd_baseline(const BaselineArgs& a) {
  RunConfig cfg;
  if (a.ckpt) {
    cfg = config_from_checkpoint(load_checkpoint(*a.ckpt));
    check_horizon(a.overrides, cfg);
    if (a.overrides.site) cfg.site = load_site(*a.overrides.site);
  } else {
    cfg = RunConfig::from_kv(effective_settings(a.overrides));
  }
  const Dataset data = load_dataset(a.manifest, cfg, false);
  const auto& samples = split_named(data, a.split);
  if (samples.size() < 2) throw ConfigError("split '" + a.split + "' has fewer than two samples");
  ensure_dir(a.out);
  const Forecasts f = forecast_persistence(samples, data.site, cfg.pipeline.horizon_min);
  write_reports(a.out, f, data.site.utc_offset_min);
  print_metrics(("persistence " + a.split).c_str(), f.metrics());
  return 0;
}

int cmd_predict(const PredictArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const RunConfig cfg = config_from_checkpoint(ckpt);
  if (!cfg.site) throw ConfigError("checkpoint carries no site settings");
  const SiteConfig& site = *cfg.site;

  std::ifstream in(a.window);
  if (!in) throw IoError("cannot read window '" + a.window + "'");
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "timestamp,ghi") throw FormatError("window CSV header must be 'timestamp,ghi'");
  std::vector<Instant> times;
  std::vector<double> ghi;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected 'timestamp,ghi'", line_no, 1);
    try {
      times.push_back(parse_iso8601(line.substr(0, comma)));
      std::size_t used = 0;
      const std::string v = line.substr(comma + 1);
      ghi.push_back(std::stod(v, &used));
      if (used != v.size() || !(ghi.back() >= 0)) throw std::invalid_argument(v);
    } catch (const std::exception& e) {
      throw ParseError(std::string("bad window row: ") + e.what(), line_no, 1);
    }
  }
  if (ghi.size() != cfg.pipeline.window_len) {
    throw DimensionError("window has " + std::to_string(ghi.size()) + " values but the model expects " +
                         std::to_string(cfg.pipeline.window_len));
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] - times[i - 1] != std::chrono::seconds{kSlotSeconds}) {
      throw FormatError("window timestamps must be consecutive 10-minute slots (line " + std::to_string(i + 2) +
                        ")");
    }
  }

  const bool daily = cfg.pipeline.normalization == Normalization::daily_max;
  ModelInput input;
  input.series = Tensor({1, ghi.size()});
  for (std::size_t i = 0; i < ghi.size(); ++i) {
    if (ghi[i] == 0.0) continue;
    const double scale =
        daily ? day_max_clear_sky(site, local_date(times[i], site.utc_offset_min)) : cfg.pipeline.global_scale;
    input.series.values[i] = normalize_ghi(ghi[i], scale);
  }
  if (cfg.model.uses_image()) {
    if (a.images.size() != cfg.model.frames) {
      throw DimensionError("model expects " + std::to_string(cfg.model.frames) + " image(s), got " +
                           std::to_string(a.images.size()));
    }
    for (const auto& p : a.images) {
      input.frames.push_back(
          std::make_shared<const Image>(load_image(p, cfg.model.image_height, cfg.model.image_width)));
    }
  }
  SmtModel model = ckpt.to_model();
  const double y = model.predict(input);
  const Instant target = times.back() + std::chrono::minutes{cfg.pipeline.horizon_min};
  const double scale =
      daily ? day_max_clear_sky(site, local_date(target, site.utc_offset_min)) : cfg.pipeline.global_scale;
  std::printf("target=%s ghi_wm2=%s y_star=%s\n", format_iso8601(target, site.utc_offset_min).c_str(),
              format_real(denormalize_ghi(y, scale)).c_str(), format_real(y).c_str());
  return 0;
}

int cmd_attn(const AttnArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  RunConfig cfg = config_from_checkpoint(ckpt);
  if (a.overrides.site) cfg.site = load_site(*a.overrides.site);
  const Instant when = parse_iso8601(a.time);
  Dataset data = load_dataset(a.manifest, cfg, false);

  auto it = std::find_if(data.samples.begin(), data.samples.end(), [&](const SampleRecord& s) { return s.t == when; });
  if (it == data.samples.end()) {
    std::vector<const SampleRecord*> near;
    for (const auto& s : data.samples) near.push_back(&s);
    auto gap = [&](const SampleRecord* s) { return s->t > when ? s->t - when : when - s->t; };
    std::sort(near.begin(), near.end(), [&](auto* x, auto* y) { return gap(x) < gap(y); });
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, near.size()); ++i) {
      list += (i ? ", " : "") + format_iso8601(near[i]->t, data.site.utc_offset_min);
    }
    throw ConfigError("no sample at " + a.time + "; nearest available: " + list);
  }
  std::vector<SampleRecord> one{*it};
  attach_images(one, parent_dir(a.manifest), cfg.model.image_height, cfg.model.image_width);

  SmtModel model = ckpt.to_model();
  AttentionTrace trace;
  const double y = model.predict_with_trace(to_example(one[0], cfg.model.uses_image()).input, trace);
  ensure_dir(a.out);
  const Attribution last = last_layer_attention(trace);
  const Attribution roll = weighted_rollout(trace);
  export_heatmap(last, cfg.model, join(a.out, "last_layer.pgm"), join(a.out, "last_layer.csv"));
  export_heatmap(roll, cfg.model, join(a.out, "rollout.pgm"), join(a.out, "rollout.csv"));

  std::ofstream bars(join(a.out, "modality.csv"));
  if (!bars) throw IoError("cannot write modality.csv under '" + a.out + "'");
  bars << "method,image,series\n";
  const auto s_last = modality_shares(last, cfg.model);
  const auto s_roll = modality_shares(roll, cfg.model);
  bars << "last_layer," << format_real(s_last.image) << ',' << format_real(s_last.series) << '\n';
  bars << "rollout," << format_real(s_roll.image) << ',' << format_real(s_roll.series) << '\n';

  std::printf("sample %s: predicted %.2f W/m^2 (y*=%.4f), observed %.2f W/m^2\n", a.time.c_str(),
              one[0].denormalize(y), y, one[0].target_ghi);
  std::printf("tokens %zu; rollout share image %.4f series %.4f%s\n", roll.weights.size(), s_roll.image,
              s_roll.series, roll.degenerate ? " (degenerate: all mass on the prediction token)" : "");
  return 0;
}

}  // namespace smt::cli
