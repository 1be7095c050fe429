#include "smt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "smt/data.hpp"
#include "smt/error.hpp"
#include "smt/random.hpp"

namespace smt {
namespace {

constexpr double kSunRadius = 5.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Blob {
  double centre, sigma, opacity;
};

/// Gaussian cloud blobs laid out along a 1-D tape that slides past the camera.
class CloudTape {
 public:
  CloudTape(double lo, double hi, const SynthConfig& cfg, Rng& rng) {
    double u = lo;
    while (u < hi) {
      u += -std::log(1.0 - rng.uniform()) * cfg.cloud_gap;
      const double sigma = cfg.cloud_width * rng.uniform(0.5, 1.5);
      const double opacity = rng.uniform(0.5, 1.0);
      blobs_.push_back({u, sigma, opacity});
      max_sigma_ = std::max(max_sigma_, sigma);
    }
  }

  double opacity(double u) const {
    const double reach = 4.0 * max_sigma_;
    auto it = std::lower_bound(blobs_.begin(), blobs_.end(), u - reach,
                               [](const Blob& b, double v) { return b.centre < v; });
    double total = 0;
    for (; it != blobs_.end() && it->centre <= u + reach; ++it) {
      const double d = (u - it->centre) / it->sigma;
      total += it->opacity * std::exp(-0.5 * d * d);
    }
    return std::min(1.0, total);
  }

 private:
  std::vector<Blob> blobs_;
  double max_sigma_ = 0;
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

RawImage render(const SynthConfig& cfg, double zenith, double azimuth, const CloudTape* tape, double shift) {
  const std::size_t h = cfg.image_height, w = cfg.image_width;
  RawImage img;
  img.height = h;
  img.width = w;
  img.channels = 3;
  img.data.resize(h * w * 3);
  const double xs = sun_x(azimuth, w), ys = sun_y(zenith, h);
  const double light = 0.45 + 0.55 * std::sqrt(std::max(0.0, std::cos(zenith * std::numbers::pi / 180.0)));
  for (std::size_t x = 0; x < w; ++x) {
    const double cx = static_cast<double>(x) + 0.5;
    const double cloud = tape ? tape->opacity(cx - shift) : 0.0;
    for (std::size_t y = 0; y < h; ++y) {
      const double cy = static_cast<double>(y) + 0.5;
      const double fy = cy / static_cast<double>(h);
      double r = (60 + 70 * fy) * light, g = (110 + 60 * fy) * light, b = 225 * light;
      const double dist = std::hypot(cx - xs, cy - ys);
      if (dist <= kSunRadius) {
        r = 255, g = 245, b = 210;
      } else if (dist <= 3 * kSunRadius) {
        const double glow = 1.0 - (dist - kSunRadius) / (2 * kSunRadius);
        r += (255 - r) * 0.6 * glow, g += (245 - g) * 0.6 * glow, b += (210 - b) * 0.6 * glow;
      }
      const double grey = 215 * light;
      r += (grey - r) * cloud, g += (grey - g) * cloud, b += (grey + 5 - b) * cloud;
      std::uint8_t* px = &img.data[(y * w + x) * 3];
      px[0] = to_byte(r), px[1] = to_byte(g), px[2] = to_byte(b);
    }
  }
  return img;
}

std::string stamp_name(Instant t, int offset_min) {
  // 2023-06-01T10:20:00-07:00 -> 20230601_1020
  const std::string s = format_iso8601(t, offset_min);
  return s.substr(0, 4) + s.substr(5, 2) + s.substr(8, 2) + "_" + s.substr(11, 2) + s.substr(14, 2);
}

}  // namespace

const char* to_string(CloudRegime regime) {
  switch (regime) {
    case CloudRegime::clear: return "clear";
    case CloudRegime::persistent: return "persistent";
    case CloudRegime::advecting: return "advecting";
  }
  return "?";
}

CloudRegime parse_cloud_regime(const std::string& text) {
  if (text == "clear") return CloudRegime::clear;
  if (text == "persistent") return CloudRegime::persistent;
  if (text == "advecting") return CloudRegime::advecting;
  throw ConfigError("unknown cloud regime '" + text + "' (expected clear, persistent or advecting)");
}

void SynthConfig::validate() const {
  site.validate();
  if (site.utc_offset_min % 10 != 0) throw ConfigError("utc_offset_min must be a multiple of 10 minutes");
  if (days < 1) throw ConfigError("days must be at least 1");
  if (!start_date.ok()) throw ConfigError("invalid start_date");
  if (!(clear_index >= 0 && clear_index <= 1)) throw ConfigError("clear_index must lie in [0, 1]");
  if (!(cloud_speed >= 0)) throw ConfigError("cloud_speed must be non-negative");
  if (cloud_direction != 1 && cloud_direction != -1) throw ConfigError("cloud_direction must be 1 or -1");
  if (!(cloud_gap > 0) || !(cloud_width > 0)) throw ConfigError("cloud_gap and cloud_width must be positive");
  if (image_height < 8 || image_width < 8) throw ConfigError("synthetic images must be at least 8x8");
}

void SynthConfig::write(KeyValues& kv) const {
  write_site(kv, site);
  kv.set("start_date", format_date(start_date));
  kv.set("days", days);
  kv.set("seed", static_cast<long long>(seed));
  kv.set("regime", to_string(regime));
  kv.set("clear_index", clear_index);
  kv.set("cloud_speed", cloud_speed);
  kv.set("cloud_direction", cloud_direction);
  kv.set("cloud_gap", cloud_gap);
  kv.set("cloud_width", cloud_width);
  kv.set("synth_image_height", image_height);
  kv.set("synth_image_width", image_width);
}

SynthConfig SynthConfig::read(const KeyValues& kv) {
  SynthConfig c;
  if (kv.has("latitude")) c.site = read_site(kv);
  if (kv.has("start_date")) c.start_date = parse_date(kv.get_string("start_date"));
  c.days = static_cast<std::size_t>(kv.get_int("days", static_cast<long long>(c.days)));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  c.regime = parse_cloud_regime(kv.get_string("regime", to_string(c.regime)));
  c.clear_index = kv.get_double("clear_index", c.clear_index);
  c.cloud_speed = kv.get_double("cloud_speed", c.cloud_speed);
  c.cloud_direction = static_cast<int>(kv.get_int("cloud_direction", c.cloud_direction));
  c.cloud_gap = kv.get_double("cloud_gap", c.cloud_gap);
  c.cloud_width = kv.get_double("cloud_width", c.cloud_width);
  c.image_height = static_cast<std::size_t>(kv.get_int("synth_image_height", static_cast<long long>(c.image_height)));
  c.image_width = static_cast<std::size_t>(kv.get_int("synth_image_width", static_cast<long long>(c.image_width)));
  c.validate();
  return c;
}

double sun_x(double azimuth_deg, std::size_t image_width) {
  return static_cast<double>(image_width) * (azimuth_deg - 45.0) / 270.0;
}

double sun_y(double zenith_deg, std::size_t image_height) {
  return static_cast<double>(image_height) * (0.1 + 0.8 * std::clamp(zenith_deg, 0.0, 90.0) / 90.0);
}

SynthSummary generate_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());

  const std::size_t slots = cfg.days * 144;
  const double dir = cfg.cloud_direction;

  // Cloud drift: speed follows a bounded random walk, one value per slot.
  Rng walk(splitmix64(cfg.seed ^ 0x5753ULL));
  std::vector<double> shift(slots);
  double v = cfg.cloud_speed, offset = 0;
  for (std::size_t n = 0; n < slots; ++n) {
    shift[n] = dir * offset;
    v = std::clamp(v + 0.05 * cfg.cloud_speed * walk.normal(), 0.5 * cfg.cloud_speed, 1.5 * cfg.cloud_speed);
    offset += v;
  }
  const double w = static_cast<double>(cfg.image_width);
  const double lo = dir > 0 ? -offset - w : -w;
  const double hi = dir > 0 ? 2 * w : offset + 2 * w;
  Rng blobs(splitmix64(cfg.seed ^ 0xB10BULL));
  const CloudTape tape(lo, hi, cfg, blobs);

  std::vector<ManifestRow> rows;
  std::ofstream truth(fs::path(out_dir) / "truth.csv", std::ios::binary);
  if (!truth) throw IoError("cannot write truth log under '" + out_dir + "'");
  truth << "timestamp,k,clear_sky_ghi\n";

  const int off = cfg.site.utc_offset_min;
  for (std::size_t d = 0; d < cfg.days; ++d) {
    const Date date{std::chrono::sys_days{cfg.start_date} + std::chrono::days{d}};
    const Instant midnight = local_midnight(date, off);
    for (std::size_t s = 0; s < 144; ++s) {
      const std::size_t n = d * 144 + s;
      const Instant t = midnight + std::chrono::seconds{static_cast<long long>(s) * kSlotSeconds};
      const double zenith = solar_zenith(cfg.site, t);
      const double clear = haurwitz_ghi(zenith);
      if (!(clear > kNightThreshold)) continue;
      const double azimuth = solar_azimuth(cfg.site, t);

      double k = 1.0;
      if (cfg.regime == CloudRegime::persistent) {
        k = cfg.clear_index;
      } else if (cfg.regime == CloudRegime::advecting) {
        const double xs = sun_x(azimuth, cfg.image_width);
        double cover = 0;
        int taps = 0;
        for (double dx = -kSunRadius; dx <= kSunRadius; dx += 1.0, ++taps) cover += tape.opacity(xs + dx - shift[n]);
        k = 1.0 - 0.8 * cover / taps;
      }

      const std::string name = "images/" + stamp_name(t, off) + ".ppm";
      const RawImage img =
          render(cfg, zenith, azimuth, cfg.regime == CloudRegime::advecting ? &tape : nullptr, shift[n]);
      write_ppm((fs::path(out_dir) / name).string(), img);

      ManifestRow row;
      row.timestamp = t;
      row.utc_offset_min = off;
      row.image_path = name;
      row.ghi = k * clear;
      rows.push_back(std::move(row));
      truth << format_iso8601(t, off) << ',' << format_real(k) << ',' << format_real(clear) << '\n';
    }
  }
  if (!truth) throw IoError("failed writing truth log under '" + out_dir + "'");
  truth.close();

  write_manifest((fs::path(out_dir) / "manifest.csv").string(), rows);
  KeyValues site_kv;
  write_site(site_kv, cfg.site);
  site_kv.save((fs::path(out_dir) / "site.cfg").string());
  KeyValues echo;
  cfg.write(echo);
  echo.save((fs::path(out_dir) / "synth.cfg").string());
  return {rows.size(), cfg.days};
}

}  // namespace smt
