#include "qsfusion/civil_time.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace qsfusion::civil {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

int month_from_abbrev(std::string_view s) {
  for (int m = 0; m < 12; ++m) {
    if (s == kMonthShort[m]) return m + 1;
  }
  return 0;
}

bool valid_clock(int h, int mi, int s) {
  return h >= 0 && h < 24 && mi >= 0 && mi < 60 && s >= 0 && s < 61;
}

std::optional<std::int64_t> to_unix(int y, int mo, int d, int h, int mi, int s, int offset_minutes) {
  if (!valid_date(y, mo, d) || !valid_clock(h, mi, s)) return std::nullopt;
  return days_from_civil(y, mo, d) * kSecondsPerDay + h * 3600 + mi * 60 + s - offset_minutes * 60;
}

// "+0000" or "+00:00"
bool parse_offset(std::string_view s, int& minutes) {
  if (s.size() != 5 && s.size() != 6) return false;
  const int sign = s[0] == '+' ? 1 : (s[0] == '-' ? -1 : 0);
  if (sign == 0) return false;
  int h = 0, m = 0;
  if (!parse_int(s.substr(1, 2), h)) return false;
  if (!parse_int(s.substr(s.size() - 2), m)) return false;
  if (s.size() == 6 && s[3] != ':') return false;
  if (h > 23 || m > 59) return false;
  minutes = sign * (h * 60 + m);
  return true;
}

std::optional<std::int64_t> parse_twitter_form(std::string_view t) {
  // Www Mmm dd hh:mm:ss +zzzz yyyy
  if (t.size() != 30) return std::nullopt;
  if (t[3] != ' ' || t[7] != ' ' || t[10] != ' ' || t[13] != ':' || t[16] != ':' || t[19] != ' ' ||
      t[25] != ' ')
    return std::nullopt;
  const int mo = month_from_abbrev(t.substr(4, 3));
  int d = 0, h = 0, mi = 0, s = 0, y = 0, off = 0;
  if (mo == 0 || !parse_int(t.substr(8, 2), d) || !parse_int(t.substr(11, 2), h) ||
      !parse_int(t.substr(14, 2), mi) || !parse_int(t.substr(17, 2), s) ||
      !parse_offset(t.substr(20, 5), off) || !parse_int(t.substr(26, 4), y))
    return std::nullopt;
  auto result = to_unix(y, mo, d, h, mi, s, off);
  if (!result) return std::nullopt;
  // The weekday name must agree with the date.
  const std::int64_t local_day = days_from_civil(y, mo, d);
  if (t.substr(0, 3) != kWeekdayShort[weekday(local_day)]) return std::nullopt;
  return result;
}

std::optional<std::int64_t> parse_iso_form(std::string_view t) {
  // yyyy-mm-ddThh:mm:ss followed by Z or an offset
  if (t.size() < 20) return std::nullopt;
  if (t[4] != '-' || t[7] != '-' || (t[10] != 'T' && t[10] != ' ') || t[13] != ':' || t[16] != ':')
    return std::nullopt;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, off = 0;
  if (!parse_int(t.substr(0, 4), y) || !parse_int(t.substr(5, 2), mo) ||
      !parse_int(t.substr(8, 2), d) || !parse_int(t.substr(11, 2), h) ||
      !parse_int(t.substr(14, 2), mi) || !parse_int(t.substr(17, 2), s))
    return std::nullopt;
  std::string_view zone = t.substr(19);
  if (zone != "Z" && !parse_offset(zone, off)) return std::nullopt;
  return to_unix(y, mo, d, h, mi, s, off);
}

}  // namespace

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(int year, int month, int day) {
  const std::int64_t y = static_cast<std::int64_t>(year) - (month <= 2 ? 1 : 0);
  const std::int64_t era = floor_div(y, 400);
  const std::int64_t yoe = y - era * 400;
  const std::int64_t mp = (month + 9) % 12;
  const std::int64_t doy = (153 * mp + 2) / 5 + day - 1;
  const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

Date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = floor_div(z, 146097);
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const int d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  const int m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  const std::int64_t y = yoe + era * 400 + (m <= 2 ? 1 : 0);
  return Date{static_cast<int>(y), m, d};
}

std::int64_t day_index(std::int64_t unix_seconds) { return floor_div(unix_seconds, kSecondsPerDay); }

int weekday(std::int64_t day_idx) {
  // 1970-01-01 was a Thursday (index 3).
  const std::int64_t w = (day_idx + 3) % 7;
  return static_cast<int>(w < 0 ? w + 7 : w);
}

int month_of(std::int64_t day_idx) { return civil_from_days(day_idx).month - 1; }

bool valid_date(int year, int month, int day) {
  if (month < 1 || month > 12 || day < 1) return false;
  static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int limit = kDays[month - 1];
  const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  if (month == 2 && leap) limit = 29;
  return day <= limit;
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  if (text.size() == 30 && text[3] == ' ') return parse_twitter_form(text);
  return parse_iso_form(text);
}

std::string format_twitter(std::int64_t unix_seconds) {
  const std::int64_t days = day_index(unix_seconds);
  const std::int64_t secs = unix_seconds - days * kSecondsPerDay;
  const Date d = civil_from_days(days);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%s %s %02d %02d:%02d:%02d +0000 %04d", kWeekdayShort[weekday(days)],
                kMonthShort[d.month - 1], d.day, static_cast<int>(secs / 3600),
                static_cast<int>((secs / 60) % 60), static_cast<int>(secs % 60), d.year);
  return buf;
}

}  // namespace qsfusion::civil
