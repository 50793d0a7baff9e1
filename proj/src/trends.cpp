#include "qsfusion/trends.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "qsfusion/civil_time.hpp"
#include "qsfusion/csv.hpp"
#include "qsfusion/errors.hpp"
#include "qsfusion/models.hpp"

namespace qsfusion {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
std::string opt_csv(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

}  // namespace

std::int64_t WeekdayTable::total() const {
  std::int64_t t = 0;
  for (int d = 0; d < 7; ++d) t += weighins[d] + fitness[d];
  return t;
}

nlohmann::json WeekdayTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int d = 0; d < 7; ++d)
    rows.push_back({{"weekday", civil::kWeekdayShort[d]}, {"weighins", weighins[d]}, {"fitness", fitness[d]}});
  return {{"weekdays", rows}, {"total", total()}};
}

std::string WeekdayTable::to_csv() const {
  std::ostringstream out;
  out << "weekday,weighins,fitness\n";
  for (int d = 0; d < 7; ++d) out << civil::kWeekdayShort[d] << ',' << weighins[d] << ',' << fitness[d] << '\n';
  return out.str();
}

WeekdayTable weekday_counts(std::span<const TimedEvent> events) {
  WeekdayTable t;
  for (const auto& e : events) {
    const int wd = civil::weekday(civil::day_index(e.timestamp));
    (e.kind == EventKind::WeighIn ? t.weighins : t.fitness)[wd] += 1;
  }
  return t;
}

nlohmann::json MonthlyDeviation::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int m = 0; m < 12; ++m) {
    rows.push_back({{"month", civil::kMonthShort[m]},
                    {"mean_deviation_lb", opt(months[m].mean)},
                    {"stderr_lb", opt(months[m].std_error)},
                    {"users", months[m].users}});
  }
  return {{"months", rows}, {"error_bar", "standard_error"}};
}

std::string MonthlyDeviation::to_csv() const {
  std::ostringstream out;
  out << "month,mean_deviation_lb,stderr_lb,users\n";
  for (int m = 0; m < 12; ++m)
    out << civil::kMonthShort[m] << ',' << opt_csv(months[m].mean) << ',' << opt_csv(months[m].std_error) << ','
        << months[m].users << '\n';
  return out.str();
}

UserMonthly user_monthly_deviation(const WeighInSeries& series) {
  UserMonthly u;
  if (series.observations.empty()) return u;
  const double global = series.mean_weight();
  std::array<double, 12> sums{};
  for (const auto& o : series.observations) {
    const int m = civil::month_of(o.day_index);
    sums[m] += o.weight_lb;
    ++u.count[m];
  }
  for (int m = 0; m < 12; ++m) {
    if (u.count[m] > 0) u.deviation[m] = sums[m] / static_cast<double>(u.count[m]) - global;
  }
  return u;
}

MonthlyDeviation monthly_deviation(std::span<const WeighInSeries> series) {
  std::array<std::vector<double>, 12> per_month;
  for (const auto& s : series) {
    const UserMonthly u = user_monthly_deviation(s);
    for (int m = 0; m < 12; ++m)
      if (u.deviation[m]) per_month[m].push_back(*u.deviation[m]);
  }
  MonthlyDeviation out;
  for (int m = 0; m < 12; ++m) {
    const auto& v = per_month[m];
    auto& b = out.months[m];
    b.users = v.size();
    if (v.empty()) continue;
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    b.mean = mean;
    if (v.size() >= 2) {
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
      b.std_error = sd / std::sqrt(static_cast<double>(v.size()));
    }
  }
  return out;
}

std::optional<std::pair<PeriodKind, int>> parse_period(std::string_view label) {
  static const char* kWeekdayFull[7] = {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};
  static const char* kMonthFull[12] = {"january", "february", "march",     "april",   "may",      "june",
                                       "july",    "august",   "september", "october", "november", "december"};
  const std::string l = lower(trim(label));
  for (int d = 0; d < 7; ++d)
    if (l == kWeekdayFull[d] || l == lower(civil::kWeekdayShort[d])) return std::make_pair(PeriodKind::Weekday, d);
  for (int m = 0; m < 12; ++m)
    if (l == kMonthFull[m] || l == lower(civil::kMonthShort[m])) return std::make_pair(PeriodKind::Month, m);
  return std::nullopt;
}

TrendSeries parse_trend_csv(std::istream& in) {
  TrendSeries out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) return out;
  ++line_no;
  auto header = csv::split_line(line);
  for (auto& h : header) h = lower(trim(h));
  if (header != std::vector<std::string>{"period", "term", "score"})
    throw DataError("trend csv line 1: header must be period,term,score");
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = csv::split_line(line);
    const std::string where = "trend csv line " + std::to_string(line_no) + ": ";
    if (f.size() != 3) throw DataError(where + "expected 3 fields");
    const auto period = parse_period(f[0]);
    if (!period) throw DataError(where + "unknown period label '" + f[0] + "'");
    const std::string label = period->first == PeriodKind::Weekday ? civil::kWeekdayShort[period->second]
                                                                    : civil::kMonthShort[period->second];
    const std::string term = trim(f[1]);
    const std::string score_s = trim(f[2]);
    double score = 0.0;
    auto [ptr, ec] = std::from_chars(score_s.data(), score_s.data() + score_s.size(), score);
    if (ec != std::errc() || ptr != score_s.data() + score_s.size() || !std::isfinite(score))
      throw DataError(where + "bad score '" + f[2] + "'");
    auto& slot = out.scores[term];
    if (slot.count(label))
      out.warnings.push_back(where + "duplicate (" + label + ", " + term + "), keeping the last value");
    slot[label] = score;
  }
  return out;
}

TrendSeries import_trend_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trend csv " + path.string());
  return parse_trend_csv(in);
}

LabeledSeries weekday_series(const WeekdayTable& table, EventKind kind) {
  LabeledSeries s;
  const auto& counts = kind == EventKind::WeighIn ? table.weighins : table.fitness;
  for (int d = 0; d < 7; ++d) s.emplace_back(civil::kWeekdayShort[d], static_cast<double>(counts[d]));
  return s;
}

LabeledSeries monthly_series(const MonthlyDeviation& dev) {
  LabeledSeries s;
  for (int m = 0; m < 12; ++m)
    if (dev.months[m].mean) s.emplace_back(civil::kMonthShort[m], *dev.months[m].mean);
  return s;
}

nlohmann::json TrendComparison::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < labels.size(); ++i)
    pairs.push_back({{"period", labels[i]}, {"qs", qs[i]}, {"external", external[i]}});
  return {{"term", term}, {"pairs", pairs}, {"R", opt(r)}};
}

TrendComparison align_and_compare(const LabeledSeries& qs, const std::string& term,
                                  const std::map<std::string, double>& external) {
  std::set<std::string> qs_labels;
  for (const auto& [l, v] : qs) qs_labels.insert(l);
  std::vector<std::string> missing;
  for (const auto& l : qs_labels)
    if (!external.count(l)) missing.push_back(l + " (external)");
  for (const auto& [l, v] : external)
    if (!qs_labels.count(l)) missing.push_back(l + " (quantified-self)");
  if (!missing.empty()) {
    std::string msg = "period labels do not align for term '" + term + "'; missing:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  TrendComparison c;
  c.term = term;
  for (const auto& [l, v] : qs) {
    c.labels.push_back(l);
    c.qs.push_back(v);
    c.external.push_back(external.at(l));
  }
  if (!c.labels.empty()) c.r = compute_metrics(c.qs, c.external).r;
  return c;
}

std::string long_format_csv(const WeekdayTable& table, const MonthlyDeviation& dev) {
  std::ostringstream out;
  out << "period,metric,value,stderr\n";
  for (int d = 0; d < 7; ++d) out << civil::kWeekdayShort[d] << ",weighins," << table.weighins[d] << ",\n";
  for (int d = 0; d < 7; ++d) out << civil::kWeekdayShort[d] << ",fitness_tweets," << table.fitness[d] << ",\n";
  for (int m = 0; m < 12; ++m) {
    const auto& b = dev.months[m];
    out << civil::kMonthShort[m] << ",weight_deviation_lb," << opt_csv(b.mean) << ',' << opt_csv(b.std_error) << '\n';
  }
  return out.str();
}

}  // namespace qsfusion
