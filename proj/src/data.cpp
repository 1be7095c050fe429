#include "smt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "smt/error.hpp"

namespace smt {
namespace {

constexpr std::string_view kManifestHeader = "timestamp,image_path,ghi";

std::int64_t slot_of(Instant t) { return t.time_since_epoch().count() / kSlotSeconds; }
Instant instant_of(std::int64_t slot) { return Instant{std::chrono::seconds{slot * kSlotSeconds}}; }

int offset_of(std::string_view ts) {
  if (ts.size() == 25 && (ts[19] == '+' || ts[19] == '-')) {
    const int h = (ts[20] - '0') * 10 + (ts[21] - '0');
    const int m = (ts[23] - '0') * 10 + (ts[24] - '0');
    return (ts[19] == '-' ? -1 : 1) * (h * 60 + m);
  }
  return 0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

std::vector<ManifestRow> parse_manifest_text(std::string_view text) {
  std::vector<ManifestRow> rows;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    if (!header_seen) {
      if (trim(line) != kManifestHeader) {
        throw ParseError("manifest header must be '" + std::string(kManifestHeader) + "'", line_no, 1);
      }
      header_seen = true;
      continue;
    }

    std::vector<std::string_view> fields;
    std::vector<std::size_t> columns;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      columns.push_back(start + 1);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 3) {
      throw ParseError("expected 3 fields, found " + std::to_string(fields.size()), line_no, 1);
    }

    ManifestRow row;
    row.line = line_no;
    const std::string_view ts = trim(fields[0]);
    try {
      row.timestamp = parse_iso8601(ts);
    } catch (const DomainError& e) {
      throw ParseError(e.what(), line_no, columns[0]);
    }
    row.utc_offset_min = offset_of(ts);
    if (row.timestamp.time_since_epoch().count() % kSlotSeconds != 0) {
      throw ParseError("timestamp " + std::string(ts) + " is not on the 10-minute grid", line_no, columns[0]);
    }
    if (!rows.empty() && row.timestamp <= rows.back().timestamp) {
      throw ParseError("timestamp " + std::string(ts) + " does not increase (previous row on line " +
                           std::to_string(rows.back().line) + ")",
                       line_no, columns[0]);
    }
    row.image_path = std::string(trim(fields[1]));
    const std::string_view ghi = trim(fields[2]);
    if (!ghi.empty()) {
      double v = 0;
      const auto [p, ec] = std::from_chars(ghi.data(), ghi.data() + ghi.size(), v);
      if (ec != std::errc{} || p != ghi.data() + ghi.size() || !std::isfinite(v)) {
        throw ParseError("bad GHI value '" + std::string(ghi) + "'", line_no, columns[2]);
      }
      if (v < 0) throw ParseError("negative GHI value " + std::string(ghi), line_no, columns[2]);
      row.ghi = v;
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw ParseError("manifest is empty (missing header)", 1, 1);
  return rows;
}

std::vector<ManifestRow> parse_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest_text(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line(), e.column());
  }
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    out << format_iso8601(r.timestamp, r.utc_offset_min) << ',' << r.image_path << ',';
    if (r.ghi) out << format_real(*r.ghi);
    out << '\n';
  }
  if (!out) throw IoError("failed writing manifest '" + path + "'");
}

// ---------------------------------------------------------------------------
// Site and pipeline settings

SiteConfig read_site(const KeyValues& kv) {
  SiteConfig s;
  s.latitude = kv.get_double("latitude");
  s.longitude = kv.get_double("longitude");
  s.altitude_m = kv.get_double("altitude_m", 0.0);
  s.utc_offset_min = static_cast<int>(kv.get_int("utc_offset_min", 0));
  s.validate();
  return s;
}

void write_site(KeyValues& kv, const SiteConfig& site) {
  kv.set("latitude", site.latitude);
  kv.set("longitude", site.longitude);
  kv.set("altitude_m", site.altitude_m);
  kv.set("utc_offset_min", site.utc_offset_min);
}

SiteConfig load_site(const std::string& path) { return read_site(KeyValues::load(path)); }

const char* to_string(Normalization mode) { return mode == Normalization::daily_max ? "daily_max" : "global"; }

Normalization parse_normalization(const std::string& text) {
  if (text == "daily_max") return Normalization::daily_max;
  if (text == "global") return Normalization::global;
  throw ConfigError("unknown normalization '" + text + "' (expected daily_max or global)");
}

void PipelineConfig::validate() const {
  if (horizon_min <= 0 || horizon_min % 10 != 0) {
    throw ConfigError("horizon_min must be a positive multiple of 10, got " + std::to_string(horizon_min));
  }
  if (window_len == 0) throw ConfigError("window_len must be positive");
  if (frames < 1 || frames > 3) throw ConfigError("frames must be 1, 2 or 3");
  if (frame_step_min <= 0 || frame_step_min % 10 != 0) {
    throw ConfigError("frame_step_min must be a positive multiple of 10");
  }
  if (!(global_scale > 0)) throw ConfigError("global_scale must be positive");
}

void PipelineConfig::write(KeyValues& kv) const {
  kv.set("horizon_min", horizon_min);
  kv.set("window_len", window_len);
  kv.set("max_gap_slots", max_gap_slots);
  kv.set("frames", frames);
  kv.set("frame_step_min", frame_step_min);
  kv.set("normalization", to_string(normalization));
  kv.set("global_scale", global_scale);
}

PipelineConfig PipelineConfig::read(const KeyValues& kv) {
  PipelineConfig c;
  c.horizon_min = static_cast<int>(kv.get_int("horizon_min", c.horizon_min));
  c.window_len = static_cast<std::size_t>(kv.get_int("window_len", static_cast<long long>(c.window_len)));
  c.max_gap_slots = static_cast<std::size_t>(kv.get_int("max_gap_slots", static_cast<long long>(c.max_gap_slots)));
  c.frames = static_cast<std::size_t>(kv.get_int("frames", static_cast<long long>(c.frames)));
  c.frame_step_min = static_cast<int>(kv.get_int("frame_step_min", c.frame_step_min));
  c.normalization = parse_normalization(kv.get_string("normalization", to_string(c.normalization)));
  c.global_scale = kv.get_double("global_scale", c.global_scale);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Samples

namespace {

class SlotIndex {
 public:
  SlotIndex(const std::vector<ManifestRow>& rows, const SiteConfig& site) : rows_(rows), site_(site) {
    for (std::size_t i = 0; i < rows.size(); ++i) by_slot_.emplace(slot_of(rows[i].timestamp), i);
  }

  const ManifestRow* row(std::int64_t slot) const {
    auto it = by_slot_.find(slot);
    return it == by_slot_.end() ? nullptr : &rows_[it->second];
  }

  double clear_sky(std::int64_t slot) {
    auto it = clear_.find(slot);
    if (it != clear_.end()) return it->second;
    const double c = clear_sky_ghi(site_, instant_of(slot));
    clear_.emplace(slot, c);
    return c;
  }

  bool daytime(std::int64_t slot) { return clear_sky(slot) > kNightThreshold; }

  double day_max(std::int64_t slot) {
    const Date d = local_date(instant_of(slot), site_.utc_offset_min);
    const auto key = std::chrono::sys_days{d}.time_since_epoch().count();
    auto it = day_max_.find(key);
    if (it != day_max_.end()) return it->second;
    const double m = day_max_clear_sky(site_, d);
    day_max_.emplace(key, m);
    return m;
  }

  /// Observed or implied (night) GHI at a slot.
  std::optional<double> known(std::int64_t slot) {
    if (!daytime(slot)) return 0.0;
    const ManifestRow* r = row(slot);
    if (r && r->ghi) return *r->ghi;
    return std::nullopt;
  }

 private:
  const std::vector<ManifestRow>& rows_;
  const SiteConfig& site_;
  std::unordered_map<std::int64_t, std::size_t> by_slot_;
  std::unordered_map<std::int64_t, double> clear_;
  std::unordered_map<long long, double> day_max_;
};

}  // namespace

std::vector<SampleRecord> build_samples(const std::vector<ManifestRow>& rows, const SiteConfig& site,
                                        const PipelineConfig& cfg, DropReport* report) {
  cfg.validate();
  site.validate();
  DropReport local;
  DropReport& rep = report ? *report : local;
  rep = DropReport{};

  SlotIndex idx(rows, site);
  const std::int64_t horizon_slots = cfg.horizon_min / 10;
  const std::int64_t frame_step = cfg.frame_step_min / 10;
  const auto s_len = static_cast<std::int64_t>(cfg.window_len);
  const auto max_gap = static_cast<std::int64_t>(cfg.max_gap_slots);

  std::vector<SampleRecord> out;
  for (const auto& row : rows) {
    ++rep.candidates;
    const std::int64_t t = slot_of(row.timestamp);
    if (!idx.daytime(t)) {
      ++rep.night;
      continue;
    }

    std::vector<std::string> frames;
    for (std::size_t f = 0; f < cfg.frames; ++f) {
      const auto back = static_cast<std::int64_t>(cfg.frames - 1 - f) * frame_step;
      const ManifestRow* r = idx.row(t - back);
      if (!r || r->image_path.empty()) break;
      frames.push_back(r->image_path);
    }
    if (frames.size() != cfg.frames) {
      ++rep.missing_image;
      continue;
    }

    const std::int64_t target = t + horizon_slots;
    if (!idx.daytime(target)) {
      ++rep.night_target;
      continue;
    }
    const ManifestRow* target_row = idx.row(target);
    if (!target_row || !target_row->ghi) {
      ++rep.missing_target;
      continue;
    }

    // Window in W/m^2, with gaps filled from the nearest known neighbours at
    // or before t.
    std::vector<double> w(static_cast<std::size_t>(s_len));
    bool ok = true;
    for (std::int64_t i = 0; i < s_len && ok; ++i) {
      const std::int64_t s = t - s_len + 1 + i;
      if (auto v = idx.known(s)) {
        w[static_cast<std::size_t>(i)] = *v;
        continue;
      }
      std::int64_t left = s - 1;
      while (s - left <= max_gap && !idx.known(left)) --left;
      std::int64_t right = s + 1;
      while (right <= t && right - s <= max_gap && !idx.known(right)) ++right;
      if (right > t || right - left - 1 > max_gap || !idx.known(left) || !idx.known(right)) {
        ok = false;
        break;
      }
      const double a = *idx.known(left), b = *idx.known(right);
      const double frac = static_cast<double>(s - left) / static_cast<double>(right - left);
      w[static_cast<std::size_t>(i)] = a + (b - a) * frac;
    }
    if (!ok) {
      ++rep.window_gap;
      continue;
    }

    SampleRecord rec;
    rec.t = row.timestamp;
    rec.target_time = instant_of(target);
    rec.utc_offset_min = site.utc_offset_min;
    rec.frame_paths = std::move(frames);
    rec.ghi_t = w.back();
    rec.target_ghi = *target_row->ghi;
    rec.day_max_t = idx.day_max(t);
    rec.day_max_target = idx.day_max(target);
    rec.window.resize(w.size());
    for (std::int64_t i = 0; i < s_len; ++i) {
      if (w[static_cast<std::size_t>(i)] == 0.0) continue;  // night, also on polar-night days
      const double scale =
          cfg.normalization == Normalization::daily_max ? idx.day_max(t - s_len + 1 + i) : cfg.global_scale;
      rec.window[static_cast<std::size_t>(i)] = normalize_ghi(w[static_cast<std::size_t>(i)], scale);
    }
    rec.target_scale = cfg.normalization == Normalization::daily_max ? rec.day_max_target : cfg.global_scale;
    rec.target = normalize_ghi(rec.target_ghi, rec.target_scale);
    out.push_back(std::move(rec));
  }
  return out;
}

std::string parent_dir(const std::string& path) {
  return std::filesystem::path(path).parent_path().string();
}

void attach_images(std::vector<SampleRecord>& samples, const std::string& base_dir, std::size_t height,
                   std::size_t width) {
  std::map<std::string, std::shared_ptr<const Image>> cache;
  for (auto& s : samples) {
    s.frames.clear();
    for (const auto& p : s.frame_paths) {
      auto it = cache.find(p);
      if (it == cache.end()) {
        const std::filesystem::path full =
            std::filesystem::path(p).is_absolute() || base_dir.empty() ? std::filesystem::path(p)
                                                                       : std::filesystem::path(base_dir) / p;
        it = cache.emplace(p, std::make_shared<const Image>(load_image(full.string(), height, width))).first;
      }
      s.frames.push_back(it->second);
    }
  }
}

Example to_example(const SampleRecord& sample, bool with_images) {
  Example ex;
  if (with_images) {
    if (sample.frames.size() != sample.frame_paths.size()) {
      throw ContractError("sample images have not been loaded");
    }
    ex.input.frames = sample.frames;
  }
  ex.input.series = Tensor({1, sample.window.size()});
  std::copy(sample.window.begin(), sample.window.end(), ex.input.series.values.begin());
  ex.target = sample.target;
  return ex;
}

std::vector<Example> to_examples(const std::vector<SampleRecord>& samples, bool with_images) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(to_example(s, with_images));
  return out;
}

// ---------------------------------------------------------------------------
// Splits

DataSplit split_chronological(const std::vector<SampleRecord>& samples, Date train_end, Date val_end,
                              const std::vector<Date>& held_out_dates) {
  using std::chrono::sys_days;
  if (sys_days{train_end} >= sys_days{val_end}) {
    throw ConfigError("train_end " + format_date(train_end) + " must precede val_end " + format_date(val_end));
  }
  DataSplit split;
  if (samples.empty()) return split;
  Date first = samples.front().local_day();
  for (const auto& s : samples) first = std::min(sys_days{first}, sys_days{s.local_day()});
  if (sys_days{train_end} < sys_days{first}) {
    throw ConfigError("train_end " + format_date(train_end) + " precedes the first sample day " +
                      format_date(first));
  }
  std::set<sys_days> held;
  for (auto d : held_out_dates) held.insert(sys_days{d});
  for (const auto& s : samples) {
    const sys_days d{s.local_day()};
    if (held.count(d)) {
      split.held_out.push_back(s);
    } else if (d <= sys_days{train_end}) {
      split.train.push_back(s);
    } else if (d <= sys_days{val_end}) {
      split.val.push_back(s);
    } else {
      split.test.push_back(s);
    }
  }
  return split;
}

std::pair<Date, Date> split_dates_by_fraction(const std::vector<SampleRecord>& samples, double train_fraction,
                                              double val_fraction) {
  using std::chrono::sys_days;
  std::set<sys_days> days;
  for (const auto& s : samples) days.insert(sys_days{s.local_day()});
  if (days.size() < 3) throw ConfigError("need samples on at least 3 days to split train/val/test");
  const std::vector<sys_days> v(days.begin(), days.end());
  const auto n = v.size();
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1 - n_train);
  return {Date{v[n_train - 1]}, Date{v[n_train + n_val - 1]}};
}

std::vector<Date> date_range(Date first, Date last) {
  std::vector<Date> out;
  for (auto d = std::chrono::sys_days{first}; d <= std::chrono::sys_days{last}; d += std::chrono::days{1}) {
    out.emplace_back(d);
  }
  return out;
}

}  // namespace smt
