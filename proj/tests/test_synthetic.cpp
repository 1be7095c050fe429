#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "smt/data.hpp"
#include "smt/error.hpp"
#include "smt/metrics.hpp"
#include "smt/synthetic.hpp"
#include "test_util.hpp"

using namespace smt;
using namespace std::chrono;

namespace {

SynthConfig small(CloudRegime regime, std::size_t days = 3) {
  SynthConfig c;
  c.days = days;
  c.regime = regime;
  c.seed = 17;
  c.image_height = 16;
  c.image_width = 32;
  return c;
}

struct Truth {
  Instant t;
  double k, clear;
};

std::vector<Truth> read_truth(const std::string& path) {
  std::istringstream in(testutil::slurp(path));
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "timestamp,k,clear_sky_ghi");
  std::vector<Truth> out;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    out.push_back({parse_iso8601(line.substr(0, a)), std::stod(line.substr(a + 1, b - a - 1)),
                   std::stod(line.substr(b + 1))});
  }
  return out;
}

}  // namespace

TEST_CASE("clear regime reproduces the clear-sky model") {
  const std::string dir = testutil::temp_dir("synth_clear");
  const auto cfg = small(CloudRegime::clear);
  generate_synthetic(cfg, dir);
  const auto rows = parse_manifest(dir + "/manifest.csv");
  REQUIRE_FALSE(rows.empty());
  for (const auto& r : rows) CHECK(*r.ghi == haurwitz_ghi(solar_zenith(cfg.site, r.timestamp)));
  const auto truth = read_truth(dir + "/truth.csv");
  REQUIRE(truth.size() == rows.size());
  for (const auto& t : truth) CHECK(t.k == 1.0);
  CHECK(load_site(dir + "/site.cfg").latitude == cfg.site.latitude);
  const auto back = SynthConfig::read(KeyValues::load(dir + "/synth.cfg"));
  CHECK(back.days == cfg.days);
  CHECK(back.regime == cfg.regime);
  CHECK(back.image_width == cfg.image_width);
}

TEST_CASE("persistent regime makes smart persistence exact") {
  const std::string dir = testutil::temp_dir("synth_persistent");
  auto cfg = small(CloudRegime::persistent, 4);
  cfg.clear_index = 0.8;
  generate_synthetic(cfg, dir);
  const auto rows = parse_manifest(dir + "/manifest.csv");
  std::map<Instant, double> ghi;
  for (const auto& r : rows) ghi[r.timestamp] = *r.ghi;
  for (int horizon : {10, 60, 120, 240}) {
    std::vector<double> obs, pred;
    for (const auto& r : rows) {
      const auto it = ghi.find(r.timestamp + minutes{horizon});
      if (it == ghi.end()) continue;
      const auto now = solar_context(cfg.site, r.timestamp);
      const auto later = solar_context(cfg.site, it->first);
      obs.push_back(it->second);
      pred.push_back(smart_persistence(*r.ghi, now, later).value);
    }
    REQUIRE(obs.size() > 50);
    CHECK(compute_metrics(obs, pred).rmse < 1e-6);
  }
}

TEST_CASE("generated ghi never exceeds clear sky") {
  const std::string dir = testutil::temp_dir("synth_bound");
  const auto cfg = small(CloudRegime::advecting, 6);
  generate_synthetic(cfg, dir);
  const auto truth = read_truth(dir + "/truth.csv");
  const auto rows = parse_manifest(dir + "/manifest.csv");
  REQUIRE(truth.size() == rows.size());
  double kmin = 1, kmax = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(*rows[i].ghi <= truth[i].clear);
    CHECK(truth[i].k >= 0.2 - 1e-12);
    kmin = std::min(kmin, truth[i].k), kmax = std::max(kmax, truth[i].k);
  }
  // Clouds do pass the sun, and it is clear at other times.
  CHECK(kmin < 0.7);
  CHECK(kmax > 0.95);
}

TEST_CASE("regeneration is byte-identical") {
  const std::string a = testutil::temp_dir("synth_a"), b = testutil::temp_dir("synth_b");
  const auto cfg = small(CloudRegime::advecting, 2);
  generate_synthetic(cfg, a);
  generate_synthetic(cfg, b);
  namespace fs = std::filesystem;
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    CHECK(testutil::slurp(e.path().string()) == testutil::slurp((fs::path(b) / rel).string()));
    ++files;
  }
  CHECK(files > 100);

  auto other = cfg;
  other.seed = 18;
  const std::string c = testutil::temp_dir("synth_c");
  generate_synthetic(other, c);
  CHECK(testutil::slurp(a + "/manifest.csv") != testutil::slurp(c + "/manifest.csv"));
}

TEST_CASE("sun position mapping") {
  for (double az = 45; az < 315; az += 1) CHECK(sun_x(az, 112) < sun_x(az + 1, 112));
  CHECK(sun_x(45, 112) == 0);
  CHECK(sun_x(315, 112) == 112);
  CHECK(sun_y(0, 64) < sun_y(60, 64));

  // Within a day the generated frames move the sun steadily across the image.
  const SiteConfig site{40, -105, 1650, -420};
  const Instant m = local_midnight(Date{year{2023} / 6 / 1}, -420);
  double prev = -1e9;
  for (int s = 0; s < 144; ++s) {
    const Instant t = m + seconds{s * kSlotSeconds};
    if (clear_sky_ghi(site, t) <= kNightThreshold) continue;
    const double x = sun_x(solar_azimuth(site, t), 112);
    CHECK(x > prev);
    prev = x;
  }
}

TEST_CASE("synth settings validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  c.days = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  c.clear_index = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  c.site.utc_offset_min = 45;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_cloud_regime("stormy"), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(small(CloudRegime::clear), "/proc/forbidden/out"), IoError);
}

TEST_CASE("images carry the sun and the clouds") {
  const std::string dir = testutil::temp_dir("synth_images");
  const auto cfg = small(CloudRegime::advecting, 1);
  generate_synthetic(cfg, dir);
  const auto rows = parse_manifest(dir + "/manifest.csv");
  const auto first = read_ppm(dir + "/" + rows[rows.size() / 2].image_path);
  CHECK(first.width == cfg.image_width);
  CHECK(first.height == cfg.image_height);
  CHECK(first.channels == 3);
  const auto next = read_ppm(dir + "/" + rows[rows.size() / 2 + 1].image_path);
  CHECK(first.data != next.data);
}
