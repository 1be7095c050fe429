#include "smt/timeutil.hpp"

#include <charconv>
#include <cstdio>

#include "smt/error.hpp"

namespace smt {
namespace {

using namespace std::chrono;

int read_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
  if (pos + len > text.size()) throw DomainError("truncated timestamp '" + std::string(whole) + "'");
  int value = 0;
  auto first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len) {
    throw DomainError("malformed timestamp '" + std::string(whole) + "'");
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char c, std::string_view whole) {
  if (pos >= text.size() || text[pos] != c) {
    throw DomainError("malformed timestamp '" + std::string(whole) + "'");
  }
}

Date checked_date(int y, int m, int d, std::string_view whole) {
  Date date{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!date.ok()) throw DomainError("invalid calendar date '" + std::string(whole) + "'");
  return date;
}

}  // namespace

Date local_date(Instant t, int utc_offset_min) {
  const auto local = t + minutes{utc_offset_min};
  return Date{floor<days>(local)};
}

Instant local_midnight(Date date, int utc_offset_min) {
  return Instant{sys_days{date}} - minutes{utc_offset_min};
}

int day_of_year(Date date) {
  const sys_days jan1{date.year() / January / 1};
  return static_cast<int>((sys_days{date} - jan1).count()) + 1;
}

Date parse_date(std::string_view text) {
  if (text.size() != 10) throw DomainError("malformed date '" + std::string(text) + "'");
  expect_char(text, 4, '-', text);
  expect_char(text, 7, '-', text);
  return checked_date(read_int(text, 0, 4, text), read_int(text, 5, 2, text),
                      read_int(text, 8, 2, text), text);
}

std::string format_date(Date date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

Instant parse_iso8601(std::string_view text) {
  if (text.size() < 20) throw DomainError("malformed timestamp '" + std::string(text) + "'");
  const Date date = parse_date(text.substr(0, 10));
  expect_char(text, 10, 'T', text);
  const int hh = read_int(text, 11, 2, text);
  expect_char(text, 13, ':', text);
  const int mm = read_int(text, 14, 2, text);
  expect_char(text, 16, ':', text);
  const int ss = read_int(text, 17, 2, text);
  if (hh > 23 || mm > 59 || ss > 59) throw DomainError("time out of range in '" + std::string(text) + "'");

  int offset_min = 0;
  if (text.size() == 20 && text[19] == 'Z') {
    offset_min = 0;
  } else if (text.size() == 25 && (text[19] == '+' || text[19] == '-')) {
    expect_char(text, 22, ':', text);
    const int oh = read_int(text, 20, 2, text);
    const int om = read_int(text, 23, 2, text);
    if (oh > 18 || om > 59) throw DomainError("offset out of range in '" + std::string(text) + "'");
    offset_min = (text[19] == '-' ? -1 : 1) * (oh * 60 + om);
  } else {
    throw DomainError("malformed timestamp offset in '" + std::string(text) + "'");
  }
  const auto local = sys_days{date} + hours{hh} + minutes{mm} + seconds{ss};
  return Instant{local - minutes{offset_min}};
}

std::string format_iso8601(Instant t, int utc_offset_min) {
  const auto local = t + minutes{utc_offset_min};
  const auto day_start = floor<days>(local);
  const Date date{day_start};
  const auto secs = (local - day_start).count();
  const int abs_off = utc_offset_min < 0 ? -utc_offset_min : utc_offset_min;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%sT%02lld:%02lld:%02lld%c%02d:%02d", format_date(date).c_str(),
                static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60), utc_offset_min < 0 ? '-' : '+', abs_off / 60,
                abs_off % 60);
  return buf;
}

}  // namespace smt
