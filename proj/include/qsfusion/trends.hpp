#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qsfusion/weighin.hpp"

namespace qsfusion {

enum class EventKind { WeighIn, Fitness };

struct TimedEvent {
  std::int64_t timestamp = 0;  // unix seconds, UTC
  EventKind kind = EventKind::WeighIn;
};

// Index 0 = Monday.
struct WeekdayTable {
  std::array<std::int64_t, 7> weighins{};
  std::array<std::int64_t, 7> fitness{};

  std::int64_t total() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

WeekdayTable weekday_counts(std::span<const TimedEvent> events);

struct MonthBucket {
  std::optional<double> mean;    // population mean deviation, lb
  std::optional<double> std_error;  // sample stddev / sqrt(users); unset below two users
  std::size_t users = 0;
};

// Index 0 = January; months pool across years.
struct MonthlyDeviation {
  std::array<MonthBucket, 12> months{};

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// One user's (month mean - global mean) per month, with observation counts.
struct UserMonthly {
  std::array<std::optional<double>, 12> deviation{};
  std::array<std::size_t, 12> count{};
};

// Empty series yield an all-unset result.
UserMonthly user_monthly_deviation(const WeighInSeries& series);
MonthlyDeviation monthly_deviation(std::span<const WeighInSeries> series);

enum class PeriodKind { Weekday, Month };

// Canonical label ("Mon", "Jan") for a weekday or month name, full or abbreviated,
// case-insensitive.
std::optional<std::pair<PeriodKind, int>> parse_period(std::string_view label);

struct TrendSeries {
  // term -> canonical period label -> score
  std::map<std::string, std::map<std::string, double>> scores;
  std::vector<std::string> warnings;
};

// CSV with header period,term,score. Unknown period labels and bad scores throw
// DataError with the line number; duplicates keep the last value and add a warning.
TrendSeries import_trend_csv(const std::filesystem::path& path);
TrendSeries parse_trend_csv(std::istream& in);

using LabeledSeries = std::vector<std::pair<std::string, double>>;

LabeledSeries weekday_series(const WeekdayTable& table, EventKind kind);
// Months without contributing users are omitted.
LabeledSeries monthly_series(const MonthlyDeviation& dev);

struct TrendComparison {
  std::string term;
  std::vector<std::string> labels;
  std::vector<double> qs;
  std::vector<double> external;
  std::optional<double> r;

  nlohmann::json to_json() const;
};

// Throws DataError naming the labels missing from either side.
TrendComparison align_and_compare(const LabeledSeries& qs, const std::string& term,
                                  const std::map<std::string, double>& external);

// period,metric,value,stderr
std::string long_format_csv(const WeekdayTable& table, const MonthlyDeviation& dev);

}  // namespace qsfusion
