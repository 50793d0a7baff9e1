#include <doctest.h>

#include <cctype>
#include <random>
#include <sstream>

#include "qsfusion/errors.hpp"
#include "qsfusion/ingest.hpp"

using namespace qsfusion;

namespace {

std::string tweet_line(const std::string& id, const std::string& user, const std::string& text,
                       const std::string& source = "<a href=\"http://twitter.com\" rel=\"nofollow\">Twitter Web Client</a>") {
  nlohmann::json j = {{"id_str", id},
                      {"text", text},
                      {"source", source},
                      {"created_at", "Sat Oct 10 20:19:24 +0000 2015"},
                      {"lang", "en"},
                      {"user", {{"id_str", user}, {"description", "bio " + user}, {"friends_count", 60},
                                {"followers_count", 41}, {"lang", "en"}}}};
  return j.dump();
}

// Oracle: split the text into maximal runs of letters (ASCII letters or any non-ASCII
// byte); a run equal to lb/kg qualifies unless a digit follows it.
bool prefilter_oracle(const std::string& text) {
  auto is_letter = [](unsigned char c) { return std::isalpha(c) || c >= 0x80; };
  for (std::size_t i = 0; i < text.size();) {
    if (!is_letter(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_letter(static_cast<unsigned char>(text[j]))) ++j;
    std::string run = text.substr(i, j - i);
    for (auto& c : run) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const bool digit_next = j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]));
    if ((run == "lb" || run == "kg") && !digit_next) return true;
    i = j;
  }
  return false;
}

}  // namespace

TEST_CASE("read_corpus: valid, truncated and empty inputs") {
  std::istringstream three(tweet_line("1", "u1", "a") + "\n" + tweet_line("2", "u1", "b") + "\n" +
                           tweet_line("3", "u2", "c") + "\n");
  auto r = read_corpus(three, CorpusSchema::Tweets);
  CHECK(r.records.size() == 3);
  CHECK(r.errors.empty());
  CHECK(r.line_count == 3);
  REQUIRE(r.embedded_users.size() == 2);
  CHECK(r.embedded_users[0].user_id == "u1");
  CHECK(r.embedded_users[0].friends_count == 60);

  const std::string full = tweet_line("3", "u2", "c");
  std::istringstream truncated(tweet_line("1", "u1", "a") + "\n" + tweet_line("2", "u1", "b") + "\n" +
                               full.substr(0, full.size() / 2) + "\n");
  r = read_corpus(truncated, CorpusSchema::Tweets);
  CHECK(r.records.size() == 2);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].line == 3);

  std::istringstream empty("");
  r = read_corpus(empty, CorpusSchema::Tweets);
  CHECK(r.records.empty());
  CHECK(r.errors.empty());
  CHECK(r.line_count == 0);
}

TEST_CASE("read_corpus: per-line rejections keep line numbers") {
  nlohmann::json bad_time = nlohmann::json::parse(tweet_line("9", "u1", "x"));
  bad_time["created_at"] = "not a time";
  nlohmann::json neg = nlohmann::json::parse(tweet_line("10", "u1", "x"));
  neg["user"]["followers_count"] = -1;
  nlohmann::json no_id = nlohmann::json::parse(tweet_line("11", "u1", "x"));
  no_id.erase("id_str");
  std::istringstream in(tweet_line("1", "u1", "a") + "\n" + tweet_line("1", "u1", "dup") + "\n\n" + bad_time.dump() +
                        "\n" + neg.dump() + "\n" + no_id.dump() + "\n[1,2]\n");
  const auto r = read_corpus(in, CorpusSchema::Tweets);
  CHECK(r.records.size() == 1);
  REQUIRE(r.errors.size() == 6);
  for (std::size_t i = 0; i < r.errors.size(); ++i) CHECK(r.errors[i].line == i + 2);
  CHECK(r.records.size() + r.errors.size() + r.filtered == r.line_count);
}

TEST_CASE("read_corpus: user schema and missing files") {
  std::istringstream in(R"({"id_str":"u1","description":"hi","friends_count":657,"followers_count":55,"lang":"ja"})"
                        "\n{\"id_str\":\"u1\"}\n");
  const auto r = read_corpus(in, CorpusSchema::Users);
  REQUIRE(r.records.size() == 1);
  const auto& u = std::get<UserRecord>(r.records[0]);
  CHECK(u.friends_count == 657);
  CHECK(u.followers_count == 55);
  CHECK(u.lang == "ja");
  CHECK(r.errors.size() == 1);
  CHECK_THROWS_AS(read_corpus("/nonexistent/corpus.jsonl", CorpusSchema::Tweets), DataError);
  CHECK_THROWS_AS(corpus_schema_from_string("tweet_v9"), DataError);
  CHECK(corpus_schema_from_string("user_v1") == CorpusSchema::Users);
}

TEST_CASE("keyword prefilter examples") {
  CHECK(keyword_prefilter("I weighed in at 80.0 kg"));
  CHECK_FALSE(keyword_prefilter("Kilogram of effort"));
  CHECK(keyword_prefilter("lost 3lb this week"));
  CHECK(keyword_prefilter("LB"));
  CHECK_FALSE(keyword_prefilter("lbs"));
  CHECK_FALSE(keyword_prefilter("bulb"));
}

TEST_CASE("keyword prefilter agrees with the chunking oracle on a fixture") {
  const std::vector<std::string> fixture = {
      "I weighed in at 80.0 kg", "Kilogram of effort", "lost 3lb this week", "kg", "lb", "KG!", "(lb)",
      "80kg", "80.5kg", "80.5 kg.", "3lbs", "lbs", "kgs", "bulb", "skg", "kg2", "2kg2", "weight: 176lb,",
      "#kg", "@lb", "lb-free", "x-kg", "über kg", "überkg", "kgé", "é kg", "76,5kg", "76.5KG", "Lb.", "a.lb",
      "1.2.3kg", "", "   ", "no units here", "pound for pound", "kilo", "lbkg", "kglb", "lb kg", "lb/kg",
      "12 lb 3 oz", "-5lb", "+2kg", "~80kg", "80kg)", "[kg]", "kg\n", "\tlb", "mg", "oz 12"};
  REQUIRE(fixture.size() == 50);
  for (const auto& s : fixture) {
    INFO(s);
    CHECK(keyword_prefilter(s) == prefilter_oracle(s));
  }
}

TEST_CASE("prefilter drops lines and keeps the line accounting") {
  std::istringstream in(tweet_line("1", "u1", "80kg today") + "\n" + tweet_line("2", "u1", "hello") + "\nbad\n");
  const auto r = read_corpus(in, CorpusSchema::Tweets, ReadOptions{true});
  CHECK(r.records.size() == 1);
  CHECK(r.filtered == 1);
  CHECK(r.errors.size() == 1);
  CHECK(r.records.size() + r.errors.size() + r.filtered == r.line_count);
}

TEST_CASE("source markup and classification") {
  CHECK(strip_source_markup("<a href=\"http://www.withings.com\" rel=\"nofollow\">WiTwit</a>") == "WiTwit");
  CHECK(strip_source_markup("  Lose It!  ") == "Lose It!");
  CHECK(strip_source_markup("<a href=\"x\">Nike&#43; GPS &amp; more</a>") == "Nike+ GPS & more");
  const auto& table = default_source_patterns();
  CHECK(classify_source("WiTwit", table) == SourceClass::WeighIn);
  CHECK(classify_source("RunKeeper", table) == SourceClass::Fitness);
  CHECK(classify_source("Twitter for iPhone", table) == SourceClass::Normal);
  CHECK(classify_source("Lose It!", table) == SourceClass::OtherWeightLoss);
  CHECK(classify_source("simpleweight", table) == SourceClass::OtherWeightLoss);
  CHECK(classify_source("MyFitnessPal", table) == SourceClass::OtherWeightLoss);
  CHECK(classify_source("Nike+ GPS", table) == SourceClass::Fitness);
  CHECK(classify_source("", table) == SourceClass::Normal);

  // Table order decides overlapping patterns.
  const std::vector<SourcePattern> custom = {{"fit", SourceClass::Fitness}, {"fitbit", SourceClass::WeighIn}};
  CHECK(classify_source("Fitbit", custom) == SourceClass::Fitness);
}

TEST_CASE("classification is total and class counts add up") {
  std::mt19937_64 rng(3);
  const std::string alphabet = "WiTwtRunKepFbNk+ GPSLoseI!abcxyz";
  std::array<std::size_t, 4> counts{};
  const std::size_t n = 2000;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const auto len = rng() % 12;
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    const auto c = classify_source(s, default_source_patterns());
    CHECK(classify_source(s, default_source_patterns()) == c);
    ++counts[static_cast<int>(c)];
  }
  CHECK(counts[0] + counts[1] + counts[2] + counts[3] == n);
  for (auto c : kAllSourceClasses) CHECK(source_class_from_string(to_string(c)) == c);
}
