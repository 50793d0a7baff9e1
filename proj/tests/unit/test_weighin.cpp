#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qsfusion/weighin.hpp"

using namespace qsfusion;

namespace {

// Oracle: whitespace tokens; a number token followed by a unit token, or a token that is a
// number with a unit glued on. Punctuation at token edges is trimmed.
std::optional<Measurement> tokenizer_oracle(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> toks;
  for (std::string t; in >> t;) {
    while (!t.empty() && std::ispunct(static_cast<unsigned char>(t.back())) && t.back() != '.') t.pop_back();
    while (!t.empty() && t.back() == '.') t.pop_back();
    while (!t.empty() && std::ispunct(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    toks.push_back(t);
  }
  auto unit_of = [](const std::string& w) -> std::optional<WeightUnit> {
    for (const char* k : {"kg", "kgs", "kilogram", "kilograms"})
      if (w == k) return WeightUnit::Kg;
    for (const char* l : {"lb", "lbs", "pound", "pounds"})
      if (w == l) return WeightUnit::Lb;
    return std::nullopt;
  };
  auto number_prefix = [](const std::string& t) {
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i == 0) return std::size_t{0};
    if (i + 1 < t.size() && t[i] == '.' && std::isdigit(static_cast<unsigned char>(t[i + 1]))) {
      ++i;
      while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    }
    return i;
  };
  for (std::size_t k = 0; k < toks.size(); ++k) {
    const auto n = number_prefix(toks[k]);
    if (n == 0) continue;
    const double v = std::stod(toks[k].substr(0, n));
    if (n == toks[k].size()) {
      if (k + 1 < toks.size())
        if (auto u = unit_of(toks[k + 1])) return Measurement{v, *u};
    } else if (auto u = unit_of(toks[k].substr(n))) {
      return Measurement{v, *u};
    }
  }
  return std::nullopt;
}

std::vector<WeighIn> random_series(std::mt19937_64& rng, std::size_t len) {
  std::vector<WeighIn> v;
  std::uniform_int_distribution<int> day(0, 400), step(0, 8);
  double w = 150.0 + static_cast<double>(rng() % 100);
  for (std::size_t i = 0; i < len; ++i) {
    const auto d = day(rng);
    // Half-pound grid makes exact boundary hits |dw| = 4 + |dd| common.
    w += 0.5 * static_cast<double>(step(rng) - 4) * (rng() % 4 == 0 ? 4.0 : 1.0);
    v.push_back({"u", d, std::max(w, 1.0)});
  }
  return v;
}

WeighInSeries series_of(std::initializer_list<std::pair<std::int64_t, double>> obs) {
  std::vector<WeighIn> v;
  for (auto [d, w] : obs) v.push_back({"u", d, w});
  auto s = build_series(std::move(v));
  s.violation_count = count_violations(s);
  return s;
}

}  // namespace

TEST_CASE("parse_weighin examples") {
  auto r = parse_weighin("I weighed in at 80.0 kg");
  REQUIRE(r.ok());
  CHECK(r.measurement.value == 80.0);
  CHECK(r.measurement.unit == WeightUnit::Kg);
  CHECK(r.rule == "weighed_in_at");
  r = parse_weighin("I weighed in at 176 lb");
  REQUIRE(r.ok());
  CHECK(r.measurement.value == 176.0);
  CHECK(r.measurement.unit == WeightUnit::Lb);
  CHECK(parse_weighin("great run today!").status == ParseStatus::NoMatch);
  CHECK(parse_weighin("I weighed in at 0 kg").status == ParseStatus::NonPositive);
  CHECK(parse_weighin("Weight 81.3KGS #withings").measurement.value == doctest::Approx(81.3));
  CHECK(parse_weighin("down to 170 Pounds").measurement.unit == WeightUnit::Lb);
  CHECK_FALSE(parse_weighin("version 1.80kg2").ok());
}

TEST_CASE("parse_weighin agrees with the tokenizer oracle") {
  const std::vector<std::string> texts = {
      "I weighed in at 80.0 kg", "I weighed in at 176 lb", "great run today!", "Weight 81.3kg #withings",
      "My weight: 170.2 pounds", "lost 3 lbs, now 180.4 lbs", "72 kilograms today", "1 kilogram down",
      "Weight: 64.0kg.", "ran 5 km in 30 min", "weighed in at 90 KG!", "180lb and 20% fat",
      "w 77.7 Kgs", "no numbers", "88 kg 194 lb", "I weighed in at 176.2 lb (-0.4 lb)"};
  for (const auto& t : texts) {
    INFO(t);
    const auto got = parse_weighin(t);
    const auto want = tokenizer_oracle(t);
    REQUIRE(got.ok() == want.has_value());
    if (want) {
      CHECK(got.measurement.value == want->value);
      CHECK(got.measurement.unit == want->unit);
    }
  }
}

TEST_CASE("custom grammar rules") {
  WeighInGrammar g(std::vector<ExtractionRule>{{"scale", R"(scale says (\d+) (kg|lb))"}});
  CHECK(parse_weighin("Scale says 70 kg", g).ok());
  CHECK_FALSE(parse_weighin("I weighed in at 80.0 kg", g).ok());
  CHECK_THROWS_AS(WeighInGrammar(std::vector<ExtractionRule>{{"bad", R"((\d+) kg)"}}), std::invalid_argument);
  CHECK_THROWS_AS(WeighInGrammar(std::vector<ExtractionRule>{{"broken", R"(((\d+) (kg)"}}), std::invalid_argument);
}

TEST_CASE("unit conversion") {
  CHECK(to_pounds(176.0, WeightUnit::Lb) == 176.0);
  CHECK(to_pounds(80.0, WeightUnit::Kg) == doctest::Approx(176.369809748).epsilon(1e-12));
  CHECK(to_pounds(1.0, WeightUnit::Kg) == 2.20462262185);
  CHECK_THROWS_AS(to_pounds(0.0, WeightUnit::Kg), std::invalid_argument);
  CHECK_THROWS_AS(to_pounds(-3.0, WeightUnit::Lb), std::invalid_argument);
  CHECK(unit_from_word("KGS") == WeightUnit::Kg);
  CHECK(unit_from_word("Pound") == WeightUnit::Lb);
  CHECK_FALSE(unit_from_word("stone"));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> kg(0.5, 400.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = kg(rng);
    CHECK(std::abs(pounds_to_kg(to_pounds(v, WeightUnit::Kg)) - v) <= 1e-9);
  }
}

TEST_CASE("build_series is a stable sort by day") {
  auto s = build_series({{"u", 5, 1.0}, {"u", 3, 2.0}, {"u", 5, 3.0}});
  REQUIRE(s.observations.size() == 3);
  CHECK(s.observations[0].day_index == 3);
  CHECK(s.observations[1].weight_lb == 1.0);
  CHECK(s.observations[2].weight_lb == 3.0);
  CHECK_FALSE(s.violation_count);
  CHECK_FALSE(s.exclusion);
  CHECK(build_series({{"u", 1, 100.0}}).observations.size() == 1);
  CHECK(build_series({}).observations.empty());
  CHECK_THROWS_AS(build_series({{"a", 1, 1.0}, {"b", 1, 1.0}}), std::invalid_argument);
}

TEST_CASE("count_violations examples") {
  CHECK(series_of({{0, 180}, {1, 186}}).violation_count == 1u);
  CHECK(series_of({{0, 180}, {1, 185}}).violation_count == 0u);
  CHECK(series_of({{0, 180}, {0, 184}}).violation_count == 0u);
  CHECK(series_of({{0, 180}, {0, 184.01}}).violation_count == 1u);
  CHECK(series_of({{10, 180}, {0, 194}}).violation_count == 0u);  // sorted first: 14 <= 4 + 10
  CHECK(series_of({{0, 180}}).violation_count == 0u);
}

TEST_CASE("count_violations matches the brute-force oracle") {
  std::mt19937_64 rng(17);
  std::size_t boundary_hits = 0;
  for (int t = 0; t < 1000; ++t) {
    auto raw = random_series(rng, 2 + rng() % 299);
    const auto s = build_series(raw);
    for (std::size_t i = 0; i + 1 < s.observations.size(); ++i)
      if (std::abs(s.observations[i].weight_lb - s.observations[i + 1].weight_lb) ==
          4.0 + static_cast<double>(s.observations[i + 1].day_index - s.observations[i].day_index))
        ++boundary_hits;
    CHECK(count_violations(s) == oracle::violations(raw));
  }
  CHECK(boundary_hits > 0);
}

TEST_CASE("count_violations invariances") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 100; ++t) {
    auto raw = random_series(rng, 2 + rng() % 100);
    const auto base = count_violations(build_series(raw));
    auto shifted_days = raw, shifted_weights = raw;
    for (auto& w : shifted_days) w.day_index += 12345;
    for (auto& w : shifted_weights) w.weight_lb += 64.0;  // exact on the half-pound grid
    CHECK(count_violations(build_series(shifted_days)) == base);
    CHECK(count_violations(build_series(shifted_weights)) == base);
  }
}

TEST_CASE("apply_exclusions thresholds") {
  auto tagged = [](WeighInSeries s) { return apply_exclusions(std::move(s)).exclusion.value(); };
  // four same-day spikes: 4 violations
  auto spiky = series_of({{0, 180}, {0, 200}, {1, 180}, {1, 200}, {2, 180}});
  CHECK(*spiky.violation_count == 4u);
  CHECK(tagged(spiky) == ExclusionReason::Violations);
  auto three = series_of({{0, 180}, {0, 200}, {1, 180}, {1, 200}});
  CHECK(*three.violation_count == 3u);
  CHECK(tagged(three) == ExclusionReason::None);
  CHECK(tagged(series_of({{0, 99.9}, {1, 99.9}})) == ExclusionReason::LowAverage);
  CHECK(tagged(series_of({{0, 100.0}})) == ExclusionReason::None);
  CHECK(tagged(series_of({{0, 99.999}})) == ExclusionReason::LowAverage);
  CHECK(tagged(series_of({{0, 300.0}})) == ExclusionReason::None);
  CHECK(tagged(series_of({{0, 300.001}})) == ExclusionReason::HighAverage);
  CHECK(tagged(series_of({{0, 178.4}})) == ExclusionReason::None);
  // violations take precedence over averages
  CHECK(tagged(series_of({{0, 50}, {0, 70}, {1, 50}, {1, 70}, {2, 50}})) == ExclusionReason::Violations);

  const auto before = series_of({{0, 50}, {3, 52}});
  const auto after = apply_exclusions(before);
  REQUIRE(after.observations.size() == before.observations.size());
  for (std::size_t i = 0; i < before.observations.size(); ++i)
    CHECK(after.observations[i].weight_lb == before.observations[i].weight_lb);
}

TEST_CASE("reference_weight") {
  CHECK(reference_weight(apply_exclusions(series_of({{0, 170}, {1, 180}}))) == 175.0);
  CHECK(reference_weight(apply_exclusions(series_of({{0, 123.25}}))) == 123.25);
  CHECK_THROWS_AS(reference_weight(build_series({})), std::domain_error);
  CHECK_THROWS_AS(reference_weight(apply_exclusions(series_of({{0, 50}}))), std::domain_error);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> w(150.0, 152.0);
  std::vector<WeighIn> v;
  long double sum = 0;
  for (int i = 0; i < 50; ++i) {
    v.push_back({"u", i, w(rng)});
    sum += v.back().weight_lb;
  }
  auto s = build_series(v);
  s.violation_count = count_violations(s);
  s = apply_exclusions(s);
  const double ref = reference_weight(s);
  CHECK(std::abs(ref - static_cast<double>(sum / 50)) <= 1e-12);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end(), [](auto& a, auto& b) { return a.weight_lb < b.weight_lb; });
  CHECK(ref >= lo->weight_lb);
  CHECK(ref <= hi->weight_lb);
}

TEST_CASE("exclusion report csv") {
  std::vector<WeighInSeries> all = {apply_exclusions(series_of({{0, 180}, {1, 181}})),
                                    apply_exclusions(series_of({{0, 50}}))};
  all[1].user_id = "v";
  const auto csv = exclusion_report_csv(all);
  CHECK(csv.rfind("user_id,n_weighins,violation_count,mean_lb,exclusion_reason\n", 0) == 0);
  CHECK(csv.find("u,2,0,180.5,none\n") != std::string::npos);
  CHECK(csv.find("v,1,0,50,low_avg\n") != std::string::npos);
}
