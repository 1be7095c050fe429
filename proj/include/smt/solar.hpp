#pragma once

#include "smt/timeutil.hpp"

namespace smt {

struct SiteConfig {
  double latitude = 0;       // degrees, north positive
  double longitude = 0;      // degrees, east positive
  double altitude_m = 0;
  int utc_offset_min = 0;    // local civil time minus UTC

  /// Throws ConfigError when latitude/longitude are out of range.
  void validate() const;
};

/// Clear-sky state of a site at one instant.
struct SolarContext {
  Instant timestamp;
  double zenith = 0;             // degrees
  double clear_sky_ghi = 0;      // W/m^2
  double day_max_clear_sky = 0;  // W/m^2, maximum over the local civil day
};

/// Irradiance below this clear-sky level counts as night.
inline constexpr double kNightThreshold = 1.0;

/// Solar zenith angle in degrees, from the Spencer declination series and
/// equation of time. Result lies in [0, 180].
double solar_zenith(const SiteConfig& site, Instant t);

/// Solar azimuth in degrees clockwise from north, in [0, 360).
double solar_azimuth(const SiteConfig& site, Instant t);

/// Haurwitz clear-sky GHI: 1098 cos z exp(-0.059 / cos z), zero at or below the horizon.
double haurwitz_ghi(double zenith_deg);

inline double clear_sky_ghi(const SiteConfig& site, Instant t) {
  return haurwitz_ghi(solar_zenith(site, t));
}

/// Maximum clear-sky GHI over the local civil day, scanned every
/// `step_seconds`. Throws DomainError when the sun never rises (polar night).
double day_max_clear_sky(const SiteConfig& site, Date local_date, int step_seconds = 60);

/// Context for `t`; throws DomainError on polar-night days.
SolarContext solar_context(const SiteConfig& site, Instant t);

/// y / day_max, deliberately not clamped above 1.
double normalize_ghi(double ghi, double day_max);
double denormalize_ghi(double y_star, double day_max);

struct PersistenceForecast {
  double value = 0;
  /// Set when the clear-sky value at the issue time is too small to form a
  /// ratio; `value` then repeats the observation.
  bool degenerate = false;
};

/// Smart persistence: the clear-sky index observed at t is held until t+h.
PersistenceForecast smart_persistence(double ghi_t, const SolarContext& at_t,
                                      const SolarContext& at_target);

}  // namespace smt
