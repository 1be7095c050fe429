#include "smt/solar.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "smt/error.hpp"

namespace smt {
namespace {

using namespace std::chrono;

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

struct SunAngles {
  double declination;  // radians
  double hour_angle;   // radians, negative before solar noon
};

SunAngles sun_angles(const SiteConfig& site, Instant t) {
  const auto day_start = floor<days>(t);
  const Date date{day_start};
  const double minutes_utc = static_cast<double>((t - day_start).count()) / 60.0;
  // Fractional day angle, evaluated at the UTC instant.
  const double gamma =
      2.0 * kPi / 365.0 * (day_of_year(date) - 1 + (minutes_utc / 60.0 - 12.0) / 24.0);

  const double decl = 0.006918 - 0.399912 * std::cos(gamma) + 0.070257 * std::sin(gamma) -
                      0.006758 * std::cos(2 * gamma) + 0.000907 * std::sin(2 * gamma) -
                      0.002697 * std::cos(3 * gamma) + 0.00148 * std::sin(3 * gamma);
  const double eot_min = 229.18 * (0.000075 + 0.001868 * std::cos(gamma) -
                                   0.032077 * std::sin(gamma) - 0.014615 * std::cos(2 * gamma) -
                                   0.040849 * std::sin(2 * gamma));
  const double true_solar_min = minutes_utc + 4.0 * site.longitude + eot_min;
  const double hour_angle_deg = true_solar_min / 4.0 - 180.0;
  return {decl, hour_angle_deg * kDeg};
}

double cos_zenith(const SiteConfig& site, const SunAngles& a) {
  const double phi = site.latitude * kDeg;
  const double c = std::sin(phi) * std::sin(a.declination) +
                   std::cos(phi) * std::cos(a.declination) * std::cos(a.hour_angle);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

void SiteConfig::validate() const {
  if (!(latitude >= -90.0 && latitude <= 90.0)) {
    throw ConfigError("latitude " + std::to_string(latitude) + " outside [-90, 90]");
  }
  if (!(longitude >= -180.0 && longitude <= 180.0)) {
    throw ConfigError("longitude " + std::to_string(longitude) + " outside [-180, 180]");
  }
  if (!std::isfinite(altitude_m)) throw ConfigError("altitude must be finite");
  if (utc_offset_min < -18 * 60 || utc_offset_min > 18 * 60) {
    throw ConfigError("utc offset " + std::to_string(utc_offset_min) + " min out of range");
  }
}

double solar_zenith(const SiteConfig& site, Instant t) {
  const SunAngles a = sun_angles(site, t);
  return std::acos(cos_zenith(site, a)) / kDeg;
}

double solar_azimuth(const SiteConfig& site, Instant t) {
  const SunAngles a = sun_angles(site, t);
  const double phi = site.latitude * kDeg;
  const double cz = cos_zenith(site, a);
  const double sz = std::sqrt(std::max(0.0, 1.0 - cz * cz));
  const double denom = std::cos(phi) * sz;
  double az;
  if (std::abs(denom) < 1e-12) {
    az = 180.0;
  } else {
    const double c = std::clamp((std::sin(a.declination) - std::sin(phi) * cz) / denom, -1.0, 1.0);
    az = std::acos(c) / kDeg;
  }
  // Wrap the hour angle into (-pi, pi] to decide morning vs afternoon.
  const double h = std::remainder(a.hour_angle, 2.0 * kPi);
  if (h > 0) az = 360.0 - az;
  return az >= 360.0 ? az - 360.0 : az;
}

double haurwitz_ghi(double zenith_deg) {
  if (!(zenith_deg < 90.0)) return 0.0;
  const double cz = std::cos(zenith_deg * kDeg);
  if (cz <= 0.0) return 0.0;
  return 1098.0 * cz * std::exp(-0.059 / cz);
}

double day_max_clear_sky(const SiteConfig& site, Date local_date, int step_seconds) {
  if (step_seconds <= 0) throw DomainError("day_max_clear_sky: step must be positive");
  const Instant start = local_midnight(local_date, site.utc_offset_min);
  double best = 0.0;
  for (int s = 0; s < 86400; s += step_seconds) {
    best = std::max(best, clear_sky_ghi(site, start + seconds{s}));
  }
  if (!(best > 0.0)) {
    throw DomainError("no daylight on " + format_date(local_date) + " (polar night)");
  }
  return best;
}

SolarContext solar_context(const SiteConfig& site, Instant t) {
  SolarContext ctx;
  ctx.timestamp = t;
  ctx.zenith = solar_zenith(site, t);
  ctx.clear_sky_ghi = haurwitz_ghi(ctx.zenith);
  ctx.day_max_clear_sky = day_max_clear_sky(site, local_date(t, site.utc_offset_min));
  return ctx;
}

double normalize_ghi(double ghi, double day_max) {
  if (!(day_max > 0.0)) throw DomainError("normalize_ghi: day_max must be positive");
  return ghi / day_max;
}

double denormalize_ghi(double y_star, double day_max) {
  if (!(day_max > 0.0)) throw DomainError("denormalize_ghi: day_max must be positive");
  return y_star * day_max;
}

PersistenceForecast smart_persistence(double ghi_t, const SolarContext& at_t,
                                      const SolarContext& at_target) {
  if (!(at_t.clear_sky_ghi > kNightThreshold)) return {ghi_t, true};
  const double value = at_target.clear_sky_ghi * ghi_t / at_t.clear_sky_ghi;
  return {std::max(0.0, value), false};
}

}  // namespace smt
