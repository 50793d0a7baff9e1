#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "qsfusion/errors.hpp"
#include "qsfusion/lexfeat.hpp"
#include "qsfusion/synth.hpp"

using namespace qsfusion;

using Strings = std::vector<std::string>;

namespace {

const char* kFixture =
    "%\n"
    "1\tsocial\n"
    "2\tingest\n"
    "%\n"
    "brother\t1\n"
    "eat*\t2\n"
    "feast\t1\t2\n";

Lexicon fixture() {
  std::istringstream in(kFixture);
  return parse_lexicon(in, "LIWC");
}

// Linear scan over entries, no hashing.
std::vector<std::size_t> match_oracle(const Lexicon& lex, const std::string& token) {
  std::vector<std::size_t> out;
  for (const auto& [entry, ids] : lex.entries()) {
    bool hit;
    if (entry.back() == '*')
      hit = token.compare(0, entry.size() - 1, entry, 0, entry.size() - 1) == 0 && token.size() >= entry.size() - 1;
    else
      hit = token == entry;
    if (!hit) continue;
    for (int id : ids) out.push_back(*lex.category_index(id));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Brother, EAT well!") == Strings{"brother", "eat", "well"});
  CHECK(tokenize("http://a.b c") == Strings{"c"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("#Fitness @coach_01 rocks") == Strings{"fitness", "rocks"});
  CHECK(tokenize("see https://t.co/x1 and www.example.com now") == Strings{"see", "and", "now"});
  CHECK(tokenize("don't 42kg") == Strings{"don", "t", "kg"});
  CHECK(tokenize("ÉCOLE Über") == Strings{"école", "über"});
  CHECK(tokenize("体重を測った") == Strings{"体重を測った"});
}

TEST_CASE("lexicon parsing") {
  const auto lex = fixture();
  CHECK(lex.categories().size() == 2u);
  CHECK(lex.entry_count() == 3u);
  CHECK(lex.match("eating") == std::vector<std::size_t>{1});
  CHECK(lex.match("eat") == std::vector<std::size_t>{1});
  CHECK(lex.match("ea").empty());
  CHECK(lex.match("feast") == std::vector<std::size_t>{0, 1});
  CHECK(lex.match("brothers").empty());

  std::istringstream dup("%\n1\ta\n2\tb\n%\nx\t1\nx\t2\n");
  CHECK(parse_lexicon(dup, "L").match("x") == std::vector<std::size_t>{0, 1});

  std::istringstream bad("%\n1\ta\n%\nok\t1\nnope\t7\n");
  try {
    parse_lexicon(bad, "L");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
  std::istringstream counted(kFixture);
  CHECK_THROWS_AS(parse_lexicon(counted, "L", 3), DataError);
  CHECK_THROWS_AS(load_lexicon("/nonexistent/x.dic", "L"), DataError);

  std::istringstream round(render_lexicon(lex));
  const auto back = parse_lexicon(round, "LIWC");
  CHECK(back.entries() == lex.entries());
  CHECK(render_lexicon(back) == render_lexicon(lex));
}

TEST_CASE("synthetic lexicon inventories") {
  CHECK(synthetic_liwc_lexicon().categories().size() == 64u);
  CHECK(synthetic_perma_lexicon().categories().size() == 10u);
}

TEST_CASE("prefix matching agrees with a linear scan") {
  std::mt19937_64 rng(3);
  auto word = [&](std::size_t max_len) {
    std::string s;
    const auto n = 1 + rng() % max_len;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + rng() % 4));
    return s;
  };
  std::vector<LexiconCategory> cats;
  for (int i = 1; i <= 5; ++i) cats.push_back({i, "c" + std::to_string(i)});
  Lexicon lex("R", cats);
  for (int e = 0; e < 60; ++e) {
    std::string entry = word(4);
    if (rng() % 2) entry += '*';
    const std::vector<int> ids{static_cast<int>(1 + rng() % 5)};
    lex.add_entry(entry, ids);
  }
  for (int t = 0; t < 10000; ++t) {
    const auto token = word(7);
    INFO(token);
    CHECK(lex.match(token) == match_oracle(lex, token));
  }
}

TEST_CASE("category features") {
  const Strings brother{"brother"};
  const auto f = category_features(brother, synthetic_liwc_lexicon(), Provenance::Tweet);
  const auto at = [&](const NamedValues& nv, const std::string& name) {
    const auto it = std::find(nv.names.begin(), nv.names.end(), name);
    REQUIRE(it != nv.names.end());
    return nv.values[static_cast<std::size_t>(it - nv.names.begin())];
  };
  CHECK(at(f, "Tweet_LIWC_social") == 1.0);
  const Strings distract{"distract"};
  CHECK(at(category_features(distract, synthetic_perma_lexicon(), Provenance::Bio), "Bio_PERMA_negative_emotion") ==
        1.0);
  const auto empty = category_features(Strings{}, synthetic_perma_lexicon(), Provenance::Tweet);
  CHECK(empty.values.size() == 10u);
  CHECK(std::all_of(empty.values.begin(), empty.values.end(), [](double v) { return v == 0.0; }));

  const auto lex = fixture();
  const Strings toks{"feast", "eating", "brother", "well"};
  const auto g = category_features(toks, lex, Provenance::Tweet);
  CHECK(g.names == Strings{"Tweet_LIWC_social", "Tweet_LIWC_ingest"});
  CHECK(g.values == std::vector<double>{0.5, 0.5});

  std::mt19937_64 rng(9);
  const Strings pool{"brother", "eat", "eats", "feast", "x", "y"};
  for (int t = 0; t < 200; ++t) {
    Strings ts;
    for (std::size_t i = 0, n = rng() % 20; i < n; ++i) ts.push_back(pool[rng() % pool.size()]);
    for (double v : category_features(ts, lex, Provenance::Tweet).values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("bag of words vocabulary") {
  std::vector<TokenCounts> docs = {count_tokens(Strings{"a", "b", "shared"}), count_tokens(Strings{"shared", "c"}),
                                   count_tokens(Strings{"b", "zz"})};
  const std::vector<std::size_t> all{0, 1, 2};
  const auto v2 = build_vocabulary(docs, all, 2, 100);
  CHECK(v2 == Strings{"b", "shared"});
  CHECK(build_vocabulary(docs, all, 2, 1) == Strings{"b"});  // tie: smaller token kept
  CHECK(build_vocabulary(docs, all, 1, 3) == Strings{"b", "shared", "a"});
  const std::vector<std::size_t> first_two{0, 1};
  CHECK(build_vocabulary(docs, first_two, 2, 100) == Strings{"shared"});

  const auto m = bow_values(docs, v2);
  CHECK(m.rows() == 3);
  CHECK(m(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(m(1, 1) == 0.5);
  CHECK(m(2, 1) == 0.0);
  const std::vector<TokenCounts> none{TokenCounts{}};
  CHECK(bow_values(none, v2).sum() == 0.0);
}

TEST_CASE("minmax scaling") {
  FeatureMatrix m;
  m.users = {"a", "b", "c"};
  m.features = {"x", "k"};
  m.values.resize(3, 2);
  m.values << 2, 5, 4, 5, 6, 7;
  const std::vector<std::size_t> train{0, 1};
  const auto s = minmax_scale(m, train);
  CHECK(s.values(0, 0) == 0.0);
  CHECK(s.values(1, 0) == 1.0);
  CHECK(s.values(2, 0) == 1.0);  // clipped
  CHECK(s.values(0, 1) == 0.0);
  CHECK(s.values(2, 1) == 0.0);  // constant training column
  REQUIRE(s.scaling);
  CHECK(s.scaling->min == std::vector<double>{2, 5});
  CHECK_THROWS_AS(minmax_scale(m, std::vector<std::size_t>{}), std::invalid_argument);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  FeatureMatrix r;
  r.values.resize(40, 6);
  for (int i = 0; i < 40; ++i) {
    r.users.push_back("u" + std::to_string(i));
    for (int j = 0; j < 6; ++j) r.values(i, j) = u(rng);
  }
  for (int j = 0; j < 6; ++j) r.features.push_back("f" + std::to_string(j));
  std::vector<std::size_t> tr;
  for (std::size_t i = 0; i < 30; ++i) tr.push_back(i);
  const auto rs = minmax_scale(r, tr);
  CHECK(rs.values.minCoeff() >= 0.0);
  CHECK(rs.values.maxCoeff() <= 1.0);
  for (std::size_t i : tr)
    for (int j = 0; j < 6; ++j) {
      const double back = unscale_value(rs.values(static_cast<Eigen::Index>(i), j), rs.scaling->min[j], rs.scaling->max[j]);
      CHECK(std::abs(back - r.values(static_cast<Eigen::Index>(i), j)) <= 1e-12 * std::max(1.0, std::abs(back)));
    }
}

TEST_CASE("feature matrix csv round trip and documents") {
  UserDocument d1 = build_document("u1", "en", "Proud brother", std::vector<std::string>{"eat well", "feast!"});
  UserDocument d2 = build_document("u2", "ja", "", std::vector<std::string>{});
  CHECK(d1.bio_tokens == Strings{"proud", "brother"});
  CHECK(d1.tweet_tokens == Strings{"eat", "well", "feast"});
  const std::vector<Lexicon> lexicons{fixture()};
  const std::vector<UserDocument> docs{d1, d2};
  const auto fm = lexical_features(docs, lexicons, true);
  fm.validate();
  CHECK(fm.features == Strings{"Bio_LIWC_social", "Bio_LIWC_ingest", "Tweet_LIWC_social", "Tweet_LIWC_ingest"});
  CHECK(fm.values(0, 0) == 0.5);
  CHECK(fm.values(1, 3) == 0.0);
  CHECK(lexical_features(docs, lexicons, false).features.size() == 2u);

  std::istringstream in(feature_matrix_csv(fm));
  const auto back = parse_feature_matrix_csv(in);
  CHECK(back.users == fm.users);
  CHECK(back.features == fm.features);
  CHECK(back.values == fm.values);
  std::istringstream bad("user_id,a\nu1,notanumber\n");
  CHECK_THROWS_AS(parse_feature_matrix_csv(bad), DataError);
}

TEST_CASE("shipped lexicon files match the built-in synthetic lexicons") {
  const std::filesystem::path dir = std::filesystem::path(QSFUSION_DATA_DIR) / "lexicons";
  const auto liwc = load_lexicon(dir / "liwc_synthetic.dic", "LIWC", 64);
  const auto perma = load_lexicon(dir / "perma_synthetic.dic", "PERMA", 10);
  CHECK(render_lexicon(liwc) == render_lexicon(synthetic_liwc_lexicon()));
  CHECK(render_lexicon(perma) == render_lexicon(synthetic_perma_lexicon()));
}
