#pragma once

#include <cstdint>
#include <string>

#include "smt/config.hpp"
#include "smt/image.hpp"
#include "smt/solar.hpp"

namespace smt {

enum class CloudRegime { clear, persistent, advecting };
const char* to_string(CloudRegime regime);
CloudRegime parse_cloud_regime(const std::string& text);

/// Settings of a synthetic sky-camera dataset.
struct SynthConfig {
  SiteConfig site{40.0, -105.0, 1650.0, -420};
  Date start_date{std::chrono::year{2023}, std::chrono::month{6}, std::chrono::day{1}};
  std::size_t days = 30;
  std::uint64_t seed = 0;
  CloudRegime regime = CloudRegime::advecting;
  double clear_index = 0.8;       // k of the persistent regime
  double cloud_speed = 2.5;       // advecting regime, pixels per 10-minute step
  int cloud_direction = 1;        // +1 drifts toward larger x, -1 toward smaller x
  double cloud_gap = 45.0;        // mean spacing between cloud centres, pixels
  double cloud_width = 7.0;       // typical Gaussian half-width, pixels
  std::size_t image_height = 64;
  std::size_t image_width = 112;

  void validate() const;
  void write(KeyValues& kv) const;
  static SynthConfig read(const KeyValues& kv);
};

/// Horizontal pixel of the sun disk for a solar azimuth (affine, increasing).
double sun_x(double azimuth_deg, std::size_t image_width);
/// Vertical pixel of the sun disk for a zenith angle (0 at the top edge).
double sun_y(double zenith_deg, std::size_t image_height);

struct SynthSummary {
  std::size_t rows = 0;  // daytime manifest rows (one image each)
  std::size_t days = 0;
};

/// Writes `manifest.csv`, `images/*.ppm`, `truth.csv`
/// (`timestamp,k,clear_sky_ghi`), `site.cfg` and `synth.cfg` under `out_dir`.
/// Only daytime slots are emitted. GHI = k(t) * clear_sky_ghi(t) where k is 1
/// (clear), the fixed clear index (persistent) or 1 - 0.8 * sun-disk cloud
/// coverage (advecting). Output is byte-identical for identical settings.
SynthSummary generate_synthetic(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace smt
