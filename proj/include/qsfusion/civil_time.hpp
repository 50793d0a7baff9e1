#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

// UTC calendar helpers. All timestamps are seconds since 1970-01-01T00:00:00Z.
namespace qsfusion::civil {

struct Date {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
};

std::int64_t days_from_civil(int year, int month, int day);
Date civil_from_days(std::int64_t days);

// Floor division so that instants before the epoch land on the right day.
std::int64_t day_index(std::int64_t unix_seconds);

// 0 = Monday ... 6 = Sunday.
int weekday(std::int64_t day_index);
// 0 = January ... 11 = December.
int month_of(std::int64_t day_index);

bool valid_date(int year, int month, int day);

// Accepts the Twitter v1.1 form "Sat Oct 10 20:19:24 +0000 2015" and
// ISO-8601 "2015-10-10T20:19:24Z" (optionally with a +hh:mm offset).
std::optional<std::int64_t> parse_timestamp(std::string_view text);

// Renders the Twitter v1.1 form in UTC.
std::string format_twitter(std::int64_t unix_seconds);

inline constexpr const char* kWeekdayShort[7] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
inline constexpr const char* kMonthShort[12] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

}  // namespace qsfusion::civil
