#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace smt {

/// UTC instant with one-second resolution.
using Instant = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

/// Calendar date of `t` in a zone `utc_offset_min` minutes east of UTC.
Date local_date(Instant t, int utc_offset_min);

/// UTC instant of local midnight starting `date`.
Instant local_midnight(Date date, int utc_offset_min);

/// 1-based day of year of a calendar date.
int day_of_year(Date date);

/// Parses `YYYY-MM-DDTHH:MM:SS` followed by `Z` or `+HH:MM` / `-HH:MM`.
/// Throws DomainError on malformed text.
Instant parse_iso8601(std::string_view text);

/// Formats `t` as `YYYY-MM-DDTHH:MM:SS+HH:MM` in the given offset.
std::string format_iso8601(Instant t, int utc_offset_min);

/// Parses `YYYY-MM-DD`.
Date parse_date(std::string_view text);
std::string format_date(Date date);

}  // namespace smt
