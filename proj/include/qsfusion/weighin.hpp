#pragma once

#include <cstdint>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qsfusion {

enum class WeightUnit { Kg, Lb };

inline constexpr double kPoundsPerKilogram = 2.20462262185;

struct Measurement {
  double value = 0.0;
  WeightUnit unit = WeightUnit::Lb;
};

// One ordered extraction rule. The pattern must have two capture groups:
// the number and the unit word. Matching is case-insensitive.
struct ExtractionRule {
  std::string name;
  std::string pattern;
};

// Compiled rule list; build once and reuse.
class WeighInGrammar {
 public:
  explicit WeighInGrammar(std::vector<ExtractionRule> rules);

  static const WeighInGrammar& default_grammar();
  static std::vector<ExtractionRule> default_rules();

  const std::vector<ExtractionRule>& rules() const { return rules_; }

 private:
  friend struct WeighInParser;
  std::vector<ExtractionRule> rules_;
  std::vector<std::regex> compiled_;
};

enum class ParseStatus { Ok, NoMatch, NonPositive };

struct ParseOutcome {
  ParseStatus status = ParseStatus::NoMatch;
  Measurement measurement;
  std::string rule;  // name of the rule that fired, when any did

  bool ok() const { return status == ParseStatus::Ok; }
};

// Returns the first rule match. Decimal separator is '.'.
ParseOutcome parse_weighin(std::string_view text, const WeighInGrammar& grammar = WeighInGrammar::default_grammar());

// Unit aliases: kg, kgs, kilogram(s), lb, lbs, pound(s).
std::optional<WeightUnit> unit_from_word(std::string_view word);

// Throws std::invalid_argument for a nonpositive or non-finite value.
double to_pounds(double value, WeightUnit unit);
double pounds_to_kg(double pounds);

struct WeighIn {
  std::string user_id;
  std::int64_t day_index = 0;  // UTC days since epoch
  double weight_lb = 0.0;
};

enum class ExclusionReason { None, Violations, LowAverage, HighAverage };

std::string_view to_string(ExclusionReason r);

struct WeighInSeries {
  std::string user_id;
  std::vector<WeighIn> observations;
  std::optional<std::size_t> violation_count;  // unset until counted
  std::optional<ExclusionReason> exclusion;    // unset until apply_exclusions

  bool excluded() const { return exclusion && *exclusion != ExclusionReason::None; }
  double mean_weight() const;
};

// Stable sort by day; same-day observations keep input order.
// Throws std::invalid_argument if user ids differ.
WeighInSeries build_series(std::vector<WeighIn> weighins);

// Number of consecutive pairs with |w(i) - w(i+1)| > 4 + |d(i) - d(i+1)|.
std::size_t count_violations(std::span<const WeighIn> observations);
std::size_t count_violations(const WeighInSeries& series);

struct ExclusionThresholds {
  std::size_t max_violations = 3;
  double low_lb = 100.0;
  double high_lb = 300.0;
};

// Tags the series; observations are left untouched. Counts violations first if needed.
WeighInSeries apply_exclusions(WeighInSeries series, const ExclusionThresholds& thresholds = {});

// Mean of all observations. Throws std::domain_error("no reference weight") for
// an empty or excluded series.
double reference_weight(const WeighInSeries& series);

// CSV with header user_id,n_weighins,violation_count,mean_lb,exclusion_reason.
std::string exclusion_report_csv(std::span<const WeighInSeries> series);

}  // namespace qsfusion
