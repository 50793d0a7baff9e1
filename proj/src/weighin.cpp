#include "qsfusion/weighin.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "qsfusion/csv.hpp"

namespace qsfusion {

namespace {

constexpr const char* kNumber = R"((\d+(?:\.\d+)?))";
constexpr const char* kUnit = R"((kilograms|kilogram|kgs|kg|pounds|pound|lbs|lb))";

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace

struct WeighInParser {
  static ParseOutcome run(std::string_view text, const WeighInGrammar& g) {
    const std::string s(text);
    for (std::size_t r = 0; r < g.compiled_.size(); ++r) {
      std::smatch m;
      if (!std::regex_search(s, m, g.compiled_[r])) continue;
      ParseOutcome out;
      out.rule = g.rules_[r].name;
      const std::string num = m[1].str();
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
      const auto unit = unit_from_word(m[2].str());
      if (ec != std::errc() || ptr != num.data() + num.size() || !unit) continue;
      out.measurement = {value, *unit};
      out.status = (value > 0.0 && std::isfinite(value)) ? ParseStatus::Ok : ParseStatus::NonPositive;
      return out;
    }
    return {};
  }
};

WeighInGrammar::WeighInGrammar(std::vector<ExtractionRule> rules) : rules_(std::move(rules)) {
  compiled_.reserve(rules_.size());
  for (const auto& r : rules_) {
    std::regex re;
    try {
      re.assign(r.pattern, std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw std::invalid_argument("extraction rule '" + r.name + "': " + e.what());
    }
    if (re.mark_count() < 2)
      throw std::invalid_argument("extraction rule '" + r.name + "' needs number and unit groups");
    compiled_.push_back(std::move(re));
  }
}

std::vector<ExtractionRule> WeighInGrammar::default_rules() {
  const std::string num = kNumber;
  const std::string unit = kUnit;
  return {
      {"weighed_in_at", "weighed in at\\s+" + num + "\\s*" + unit + "\\b"},
      {"number_unit_attached", "(?:^|[^\\w.])" + num + unit + "\\b"},
      {"number_space_unit", "(?:^|[^\\w.])" + num + "\\s+" + unit + "\\b"},
  };
}

const WeighInGrammar& WeighInGrammar::default_grammar() {
  static const WeighInGrammar kGrammar(default_rules());
  return kGrammar;
}

ParseOutcome parse_weighin(std::string_view text, const WeighInGrammar& grammar) {
  return WeighInParser::run(text, grammar);
}

std::optional<WeightUnit> unit_from_word(std::string_view word) {
  const std::string w = lower(word);
  if (w == "kg" || w == "kgs" || w == "kilogram" || w == "kilograms") return WeightUnit::Kg;
  if (w == "lb" || w == "lbs" || w == "pound" || w == "pounds") return WeightUnit::Lb;
  return std::nullopt;
}

double to_pounds(double value, WeightUnit unit) {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("weight must be positive");
  return unit == WeightUnit::Kg ? value * kPoundsPerKilogram : value;
}

double pounds_to_kg(double pounds) { return pounds / kPoundsPerKilogram; }

std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::None: return "none";
    case ExclusionReason::Violations: return "violations";
    case ExclusionReason::LowAverage: return "low_avg";
    case ExclusionReason::HighAverage: return "high_avg";
  }
  return "none";
}

double WeighInSeries::mean_weight() const {
  if (observations.empty()) return std::nan("");
  double sum = 0.0;
  for (const auto& o : observations) sum += o.weight_lb;
  return sum / static_cast<double>(observations.size());
}

WeighInSeries build_series(std::vector<WeighIn> weighins) {
  WeighInSeries s;
  if (!weighins.empty()) s.user_id = weighins.front().user_id;
  for (const auto& w : weighins) {
    if (w.user_id != s.user_id) throw std::invalid_argument("build_series: mixed user ids");
  }
  std::stable_sort(weighins.begin(), weighins.end(),
                   [](const WeighIn& a, const WeighIn& b) { return a.day_index < b.day_index; });
  s.observations = std::move(weighins);
  return s;
}

std::size_t count_violations(std::span<const WeighIn> obs) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < obs.size(); ++i) {
    const double dw = std::abs(obs[i].weight_lb - obs[i + 1].weight_lb);
    const double dd = static_cast<double>(std::llabs(obs[i].day_index - obs[i + 1].day_index));
    if (dw > 4.0 + dd) ++n;
  }
  return n;
}

std::size_t count_violations(const WeighInSeries& series) { return count_violations(series.observations); }

WeighInSeries apply_exclusions(WeighInSeries series, const ExclusionThresholds& t) {
  if (!series.violation_count) series.violation_count = count_violations(series);
  if (*series.violation_count > t.max_violations) {
    series.exclusion = ExclusionReason::Violations;
    return series;
  }
  const double mean = series.mean_weight();
  if (mean < t.low_lb) {
    series.exclusion = ExclusionReason::LowAverage;
  } else if (mean > t.high_lb) {
    series.exclusion = ExclusionReason::HighAverage;
  } else {
    series.exclusion = ExclusionReason::None;
  }
  return series;
}

double reference_weight(const WeighInSeries& series) {
  if (series.observations.empty() || series.excluded()) throw std::domain_error("no reference weight");
  return series.mean_weight();
}

std::string exclusion_report_csv(std::span<const WeighInSeries> series) {
  std::ostringstream out;
  out << "user_id,n_weighins,violation_count,mean_lb,exclusion_reason\n";
  for (const auto& s : series) {
    const std::size_t v = s.violation_count.value_or(count_violations(s));
    out << csv::escape(s.user_id) << ',' << s.observations.size() << ',' << v << ','
        << csv::format_double(s.mean_weight()) << ','
        << to_string(s.exclusion.value_or(ExclusionReason::None)) << '\n';
  }
  return out.str();
}

}  // namespace qsfusion
