#include "qsfusion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qsfusion/civil_time.hpp"
#include "qsfusion/weighin.hpp"

namespace qsfusion {

namespace {

using nlohmann::json;

// Portable draws on top of mt19937_64 so the corpus bytes do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }
  template <std::size_t N>
  int categorical(const std::array<double, N>& w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double x = uniform() * total;
    for (std::size_t i = 0; i < N; ++i) {
      if (x < w[i]) return static_cast<int>(i);
      x -= w[i];
    }
    return static_cast<int>(N - 1);
  }

 private:
  std::mt19937_64 engine_;
};

const std::vector<LexiconCategory>& liwc_categories() {
  static const std::vector<LexiconCategory> kCats = {
      {1, "funct"},     {2, "pronoun"},   {3, "ppron"},    {4, "i"},         {5, "we"},       {6, "you"},
      {7, "shehe"},     {8, "they"},      {9, "ipron"},    {10, "article"},  {11, "verb"},    {12, "auxverb"},
      {13, "past"},     {14, "present"},  {15, "future"},  {16, "adverb"},   {17, "preps"},   {18, "conj"},
      {19, "negate"},   {20, "quant"},    {21, "number"},  {22, "swear"},    {121, "social"}, {122, "family"},
      {123, "friend"},  {124, "humans"},  {125, "affect"}, {126, "posemo"},  {127, "negemo"}, {128, "anx"},
      {129, "anger"},   {130, "sad"},     {131, "cogmech"}, {132, "insight"}, {133, "cause"}, {134, "discrep"},
      {135, "tentat"},  {136, "certain"}, {137, "inhib"},  {138, "incl"},    {139, "excl"},   {140, "percept"},
      {141, "see"},     {142, "hear"},    {143, "feel"},   {146, "bio"},     {147, "body"},   {148, "health"},
      {149, "sexual"},  {150, "ingest"},  {250, "relativ"}, {251, "motion"}, {252, "space"},  {253, "time"},
      {354, "work"},    {355, "achieve"}, {356, "leisure"}, {357, "home"},   {358, "money"},  {359, "relig"},
      {360, "death"},   {462, "assent"},  {463, "nonfl"},  {464, "filler"},
  };
  return kCats;
}

const std::vector<LexiconCategory>& perma_categories() {
  static const std::vector<LexiconCategory> kCats = {
      {1, "positive_emotion"},        {2, "negative_emotion"},      {3, "positive_engagement"},
      {4, "negative_engagement"},     {5, "positive_relationships"}, {6, "negative_relationships"},
      {7, "positive_meaning"},        {8, "negative_meaning"},      {9, "positive_accomplishment"},
      {10, "negative_accomplishment"},
  };
  return kCats;
}

constexpr const char* kWordSuffixes[] = {"ak", "ol", "um", "ex"};

Lexicon make_liwc() {
  Lexicon lex("LIWC", liwc_categories());
  const std::vector<std::pair<std::string, std::vector<int>>> hand = {
      {"brother", {121, 122}}, {"eat*", {150, 146}}, {"food", {150, 146}}, {"dish", {150}},
      {"body", {147, 146}},    {"she", {7, 3, 2, 1}}, {"the", {10, 1}},    {"feel", {143, 140, 11}},
  };
  for (const auto& [w, ids] : hand) lex.add_entry(w, ids);
  for (const auto& c : liwc_categories()) {
    for (const char* s : kWordSuffixes) {
      const int id = c.id;
      lex.add_entry(c.name + s, std::span<const int>(&id, 1));
    }
  }
  return lex;
}

Lexicon make_perma() {
  Lexicon lex("PERMA", perma_categories());
  static const char* kCodes[10] = {"pp", "pn", "ep", "en", "rp", "rn", "mp", "mn", "ap", "an"};
  lex.add_entry("distract", std::vector<int>{2});
  lex.add_entry("happ*", std::vector<int>{1});
  for (int k = 0; k < 10; ++k) {
    for (const char* s : kWordSuffixes) {
      const int id = k + 1;
      lex.add_entry(std::string("perma") + kCodes[k] + s, std::span<const int>(&id, 1));
    }
  }
  return lex;
}

// Exact words mapping to exactly one category, per category index.
std::vector<std::vector<std::string>> single_category_words(const Lexicon& lex) {
  std::vector<std::vector<std::string>> out(lex.categories().size());
  for (const auto& [entry, ids] : lex.entries()) {
    if (ids.size() != 1 || entry.back() == '*') continue;
    out[*lex.category_index(ids[0])].push_back(entry);
  }
  return out;
}

std::vector<std::string> filler_vocabulary(const Lexicon& a, const Lexicon& b) {
  static const char* kOnsets[] = {"z", "q", "zr", "qu", "zl"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u"};
  static const char* kCodas[] = {"b", "d", "g", "m", "n", "p", "t", "v"};
  std::vector<std::string> out;
  for (const char* o : kOnsets)
    for (const char* v : kVowels)
      for (const char* c : kCodas)
        for (const char* v2 : kVowels) {
          std::string w = std::string(o) + v + c + v2;
          if (a.match(w).empty() && b.match(w).empty()) out.push_back(std::move(w));
        }
  return out;
}

std::string anchor(std::string_view url, std::string_view name) {
  return "<a href=\"" + std::string(url) + "\" rel=\"nofollow\">" + std::string(name) + "</a>";
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

struct PendingTweet {
  std::int64_t ts;
  std::size_t seq;
  std::string text;
  std::string source;
};

void check_rate(double r, const char* name) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(std::string("synth: ") + name + " must be in [0, 1]");
}

}  // namespace

const Lexicon& synthetic_liwc_lexicon() {
  static const Lexicon kLex = make_liwc();
  return kLex;
}

const Lexicon& synthetic_perma_lexicon() {
  static const Lexicon kLex = make_perma();
  return kLex;
}

std::vector<PlantedEffect> SynthSpec::default_planted_effects() {
  return {{"LIWC", "ingest", 60.0}, {"LIWC", "shehe", 45.0}, {"LIWC", "auxverb", -55.0}, {"LIWC", "number", -45.0}};
}

void SynthSpec::validate() const {
  if (n_users == 0) throw std::invalid_argument("synth: n_users must be positive");
  if (min_weighins < 2 || min_weighins > max_weighins) throw std::invalid_argument("synth: bad weigh-in range");
  if (min_normal_tweets < 10 || min_normal_tweets > max_normal_tweets)
    throw std::invalid_argument("synth: normal tweet range must start at 10 or more");
  if (min_fitness_tweets > max_fitness_tweets) throw std::invalid_argument("synth: bad fitness tweet range");
  if (!(noise_sd_lb >= 0.0) || !(weight_mean_lb > 0.0)) throw std::invalid_argument("synth: bad weight distribution");
  if (years < 1) throw std::invalid_argument("synth: years must be positive");
  const std::size_t n_cats = liwc_categories().size() + perma_categories().size();
  if (tweet_tokens_per_user < n_cats * (max_tokens_per_category + 1))
    throw std::invalid_argument("synth: tweet_tokens_per_user too small for the category token budget");
  check_rate(violation_rate, "violation_rate");
  check_rate(outlier_rate, "outlier_rate");
  check_rate(unparseable_rate, "unparseable_rate");
  check_rate(ja_fraction, "ja_fraction");
  check_rate(low_social_rate, "low_social_rate");
  check_rate(sparse_rate, "sparse_rate");
  if (violation_rate + outlier_rate > 1.0) throw std::invalid_argument("synth: injection rates exceed 1");
  for (double w : weekday_weighin_weights)
    if (!(w >= 0.0)) throw std::invalid_argument("synth: negative weekday weight");
  for (double w : weekday_fitness_weights)
    if (!(w >= 0.0)) throw std::invalid_argument("synth: negative weekday weight");
  for (double o : monthly_offset_lb)
    if (std::abs(o) > 1.0) throw std::invalid_argument("synth: monthly offsets must stay within 1 lb");
  for (const auto& p : planted) {
    const Lexicon& lex = p.lexicon == "LIWC" ? synthetic_liwc_lexicon() : synthetic_perma_lexicon();
    if (p.lexicon != "LIWC" && p.lexicon != "PERMA") throw std::invalid_argument("synth: unknown lexicon " + p.lexicon);
    const auto& cats = lex.categories();
    if (std::none_of(cats.begin(), cats.end(), [&](const auto& c) { return c.name == p.category; }))
      throw std::invalid_argument("synth: unknown category " + p.category);
  }
}

json SynthSpec::to_json() const {
  json planted_j = json::array();
  for (const auto& p : planted) planted_j.push_back({{"lexicon", p.lexicon}, {"category", p.category}, {"effect_lb", p.effect_lb}});
  return {{"seed", seed},
          {"n_users", n_users},
          {"weight_mean_lb", weight_mean_lb},
          {"noise_sd_lb", noise_sd_lb},
          {"planted", planted_j},
          {"min_weighins", min_weighins},
          {"max_weighins", max_weighins},
          {"min_normal_tweets", min_normal_tweets},
          {"max_normal_tweets", max_normal_tweets},
          {"min_fitness_tweets", min_fitness_tweets},
          {"max_fitness_tweets", max_fitness_tweets},
          {"tweet_tokens_per_user", tweet_tokens_per_user},
          {"max_tokens_per_category", max_tokens_per_category},
          {"weekday_weighin_weights", weekday_weighin_weights},
          {"weekday_fitness_weights", weekday_fitness_weights},
          {"monthly_offset_lb", monthly_offset_lb},
          {"violation_rate", violation_rate},
          {"outlier_rate", outlier_rate},
          {"unparseable_rate", unparseable_rate},
          {"ja_fraction", ja_fraction},
          {"low_social_rate", low_social_rate},
          {"sparse_rate", sparse_rate},
          {"start_year", start_year},
          {"years", years}};
}

SynthSpec SynthSpec::from_json(const json& j) {
  SynthSpec s;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("seed", s.seed);
  get("n_users", s.n_users);
  get("weight_mean_lb", s.weight_mean_lb);
  get("noise_sd_lb", s.noise_sd_lb);
  if (j.contains("planted")) {
    s.planted.clear();
    for (const auto& p : j.at("planted"))
      s.planted.push_back({p.at("lexicon").get<std::string>(), p.at("category").get<std::string>(),
                           p.at("effect_lb").get<double>()});
  }
  get("min_weighins", s.min_weighins);
  get("max_weighins", s.max_weighins);
  get("min_normal_tweets", s.min_normal_tweets);
  get("max_normal_tweets", s.max_normal_tweets);
  get("min_fitness_tweets", s.min_fitness_tweets);
  get("max_fitness_tweets", s.max_fitness_tweets);
  get("tweet_tokens_per_user", s.tweet_tokens_per_user);
  get("max_tokens_per_category", s.max_tokens_per_category);
  get("weekday_weighin_weights", s.weekday_weighin_weights);
  get("weekday_fitness_weights", s.weekday_fitness_weights);
  get("monthly_offset_lb", s.monthly_offset_lb);
  get("violation_rate", s.violation_rate);
  get("outlier_rate", s.outlier_rate);
  get("unparseable_rate", s.unparseable_rate);
  get("ja_fraction", s.ja_fraction);
  get("low_social_rate", s.low_social_rate);
  get("sparse_rate", s.sparse_rate);
  get("start_year", s.start_year);
  get("years", s.years);
  return s;
}

SynthOutput generate_corpus(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Lexicon& liwc = synthetic_liwc_lexicon();
  const Lexicon& perma = synthetic_perma_lexicon();
  const auto liwc_words = single_category_words(liwc);
  const auto perma_words = single_category_words(perma);
  const auto fillers = filler_vocabulary(liwc, perma);
  const std::size_t n_liwc = liwc.categories().size();
  const std::size_t n_cats = n_liwc + perma.categories().size();

  // Planted effects by combined category index.
  std::vector<double> effect(n_cats, 0.0);
  for (const auto& p : spec.planted) {
    const bool is_liwc = p.lexicon == "LIWC";
    const auto& cats = (is_liwc ? liwc : perma).categories();
    for (std::size_t c = 0; c < cats.size(); ++c)
      if (cats[c].name == p.category) effect[(is_liwc ? 0 : n_liwc) + c] += p.effect_lb;
  }

  const std::size_t n = spec.n_users;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto n_violation = static_cast<std::size_t>(std::llround(spec.violation_rate * static_cast<double>(n)));
  const auto n_outlier = static_cast<std::size_t>(std::llround(spec.outlier_rate * static_cast<double>(n)));
  std::vector<int> injected(n, 0);  // 1 violation, 2 low outlier, 3 high outlier
  for (std::size_t k = 0; k < n_violation && k < n; ++k) injected[order[k]] = 1;
  for (std::size_t k = 0; k < n_outlier && n_violation + k < n; ++k) injected[order[n_violation + k]] = (k % 2 == 0) ? 2 : 3;
  rng.shuffle(order);
  const auto n_low_social = static_cast<std::size_t>(std::llround(spec.low_social_rate * static_cast<double>(n)));
  std::vector<bool> low_social(n, false);
  for (std::size_t k = 0; k < n_low_social; ++k) low_social[order[k]] = true;
  rng.shuffle(order);
  const auto n_sparse = static_cast<std::size_t>(std::llround(spec.sparse_rate * static_cast<double>(n)));
  std::vector<bool> sparse(n, false);
  for (std::size_t k = 0; k < n_sparse; ++k) sparse[order[k]] = true;

  const std::int64_t first_day = civil::days_from_civil(spec.start_year, 1, 1);
  // Align to a Monday so week/weekday draws map directly onto dates.
  const std::int64_t first_monday = first_day + (7 - civil::weekday(first_day)) % 7;
  const std::int64_t n_weeks = static_cast<std::int64_t>(spec.years) * 52 - 1;

  auto draw_day = [&](const std::array<double, 7>& weights) {
    return first_monday + 7 * rng.between(0, n_weeks - 1) + rng.categorical(weights);
  };
  auto draw_time = [&](std::int64_t day) { return day * 86400 + rng.between(6 * 3600, 23 * 3600); };

  static constexpr std::array<double, 7> kUniformWeek{1, 1, 1, 1, 1, 1, 1};
  static const char* kFitnessApps[][2] = {
      {"http://runkeeper.com", "RunKeeper"}, {"http://www.fitbit.com", "Fitbit"},
      {"http://nikeplus.com", "Nike+ GPS"},  {"http://www.runtastic.com", "Runtastic"},
      {"http://runmeter.com", "Runmeter"},   {"http://www.ismoothrun.com", "iSmoothRun"}};
  static const char* kNormalApps[][2] = {{"http://twitter.com/download/iphone", "Twitter for iPhone"},
                                         {"http://twitter.com/download/android", "Twitter for Android"},
                                         {"http://twitter.com", "Twitter Web Client"}};

  std::ostringstream corpus;
  json users_j = json::array();
  std::vector<std::string> violation_ids, outlier_ids, low_social_ids, sparse_ids;
  std::uint64_t next_tweet_id = 600000000000000000ULL;
  double sum_w = 0.0, sum_w2 = 0.0;
  std::size_t n_regular = 0;

  for (std::size_t u = 0; u < n; ++u) {
    const std::string uid = std::to_string(1000000 + u);
    const bool ja = rng.uniform() < spec.ja_fraction;
    const std::string lang = ja ? "ja" : "en";

    std::vector<double> level(n_cats);
    for (auto& l : level) l = rng.uniform();
    double signal = 0.0;
    for (std::size_t c = 0; c < n_cats; ++c) signal += effect[c] * (level[c] - 0.5);
    double true_w = spec.weight_mean_lb + signal + spec.noise_sd_lb * rng.normal();
    true_w = std::clamp(true_w, 110.0, 290.0);
    if (injected[u] == 2) true_w = rng.uniform(55.0, 80.0);
    if (injected[u] == 3) true_w = rng.uniform(330.0, 380.0);
    if (injected[u] == 0) {
      sum_w += true_w;
      sum_w2 += true_w * true_w;
      ++n_regular;
    }

    std::vector<PendingTweet> tweets;
    std::size_t seq = 0;

    // Weigh-ins: a mean-reverting series around the true weight, plausible by construction.
    const auto n_weighins = static_cast<std::size_t>(
        rng.between(static_cast<std::int64_t>(spec.min_weighins), static_cast<std::int64_t>(spec.max_weighins)));
    std::vector<std::int64_t> wi_times;
    for (std::size_t k = 0; k < n_weighins; ++k) wi_times.push_back(draw_time(draw_day(spec.weekday_weighin_weights)));
    std::sort(wi_times.begin(), wi_times.end());
    auto render_weight = [&](double lb) {
      static const char* kLbTemplates[] = {"I weighed in at %s lb", "Weight %slbs #withings", "My weight: %s pounds"};
      static const char* kKgTemplates[] = {"I weighed in at %s kg", "Weight %skg #withings", "My weight: %s kg"};
      const std::size_t t = rng.index(3);
      const std::string value = ja ? fixed1(pounds_to_kg(lb)) : fixed1(lb);
      char buf[96];
      std::snprintf(buf, sizeof(buf), ja ? kKgTemplates[t] : kLbTemplates[t], value.c_str());
      return std::string(buf);
    };
    const std::string withings = anchor("http://www.withings.com", "WiTwit");
    std::vector<std::size_t> spike_at;
    if (injected[u] == 1) {
      std::vector<std::size_t> idx(n_weighins);
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx);
      // Four spikes on four distinct days guarantee at least four violations.
      std::set<std::int64_t> days;
      for (std::size_t i : idx) {
        if (spike_at.size() == 4) break;
        if (days.insert(civil::day_index(wi_times[i])).second) spike_at.push_back(i);
      }
    }
    for (std::size_t k = 0; k < n_weighins; ++k) {
      const int month = civil::month_of(civil::day_index(wi_times[k]));
      const double lb = true_w + spec.monthly_offset_lb[static_cast<std::size_t>(month)] + rng.uniform(-1.5, 1.5);
      tweets.push_back({wi_times[k], seq++, render_weight(lb), withings});
      if (std::find(spike_at.begin(), spike_at.end(), k) != spike_at.end()) {
        // Someone else on the same scale, the same day.
        tweets.push_back({wi_times[k] + 1, seq++, render_weight(lb + 40.0 + rng.uniform(0.0, 10.0)), withings});
      }
    }
    const auto n_unparseable = static_cast<std::size_t>(std::llround(spec.unparseable_rate * static_cast<double>(n_weighins)));
    for (std::size_t k = 0; k < n_unparseable; ++k)
      tweets.push_back({draw_time(draw_day(spec.weekday_weighin_weights)), seq++,
                        "Check out my progress on the Withings scale!", withings});

    // Fitness and other weight-loss app posts.
    const auto n_fitness = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(spec.min_fitness_tweets),
                                                                static_cast<std::int64_t>(spec.max_fitness_tweets)));
    for (std::size_t k = 0; k < n_fitness; ++k) {
      const auto& app = kFitnessApps[rng.index(6)];
      const std::string text = "Just completed a " + fixed1(rng.uniform(2.0, 15.0)) + " km run with " + app[1] + "!";
      tweets.push_back({draw_time(draw_day(spec.weekday_fitness_weights)), seq++, text, anchor(app[0], app[1])});
    }
    if (rng.uniform() < 0.3) {
      tweets.push_back({draw_time(draw_day(spec.weekday_fitness_weights)), seq++,
                        "I just logged my food in Lose It! today", anchor("http://www.loseit.com", "Lose It!")});
    }

    // Normal tweets: category words in planted proportions, padded with filler to a fixed length.
    std::vector<std::string> tokens;
    for (std::size_t c = 0; c < n_cats; ++c) {
      const auto& words = c < n_liwc ? liwc_words[c] : perma_words[c - n_liwc];
      const auto count = 1 + static_cast<std::size_t>(std::llround(level[c] * static_cast<double>(spec.max_tokens_per_category)));
      for (std::size_t k = 0; k < count; ++k) tokens.push_back(words[rng.index(words.size())]);
    }
    while (tokens.size() < spec.tweet_tokens_per_user) {
      // Squaring skews draws toward the head of the filler list.
      const double x = rng.uniform();
      tokens.push_back(fillers[static_cast<std::size_t>(x * x * static_cast<double>(fillers.size()))]);
    }
    rng.shuffle(tokens);
    const std::size_t n_normal =
        sparse[u] ? static_cast<std::size_t>(rng.between(1, 9))
                  : static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(spec.min_normal_tweets),
                                                         static_cast<std::int64_t>(spec.max_normal_tweets)));
    const std::string normal_source = [&] {
      const auto& app = kNormalApps[rng.index(3)];
      return anchor(app[0], app[1]);
    }();
    for (std::size_t t = 0; t < n_normal; ++t) {
      std::string text;
      for (std::size_t p = t * tokens.size() / n_normal; p < (t + 1) * tokens.size() / n_normal; ++p) {
        if (!text.empty()) text.push_back(' ');
        const bool filler = tokens[p][0] == 'z' || tokens[p][0] == 'q';
        if (filler && rng.uniform() < 0.05) text.push_back('#');
        text += tokens[p];
      }
      const double decor = rng.uniform();
      if (decor < 0.2) {
        text += " http://t.co/" + fillers[rng.index(fillers.size())];
      } else if (decor < 0.35) {
        text = "@friend" + std::to_string(rng.index(500)) + " " + text;
      } else if (decor < 0.6) {
        text += "!";
      }
      tweets.push_back({draw_time(draw_day(kUniformWeek)), seq++, text, normal_source});
    }

    std::string bio;
    const std::size_t bio_len = static_cast<std::size_t>(rng.between(4, 12));
    for (std::size_t k = 0; k < bio_len; ++k) {
      if (!bio.empty()) bio.push_back(' ');
      const double x = rng.uniform();
      if (x < 0.5) {
        bio += fillers[rng.index(fillers.size())];
      } else {
        const std::size_t c = rng.index(n_cats);
        const auto& words = c < n_liwc ? liwc_words[c] : perma_words[c - n_liwc];
        bio += words[rng.index(words.size())];
      }
    }
    const std::int64_t friends = rng.between(60, 2000);
    const std::int64_t followers = low_social[u] ? rng.between(5, 49) : rng.between(60, 2000);

    std::stable_sort(tweets.begin(), tweets.end(), [](const PendingTweet& a, const PendingTweet& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.seq < b.seq;
    });
    const json user_obj = {{"id_str", uid},
                           {"description", bio},
                           {"friends_count", friends},
                           {"followers_count", followers},
                           {"lang", lang}};
    for (const auto& t : tweets) {
      const json line = {{"id_str", std::to_string(next_tweet_id++)},
                         {"created_at", civil::format_twitter(t.ts)},
                         {"text", t.text},
                         {"source", t.source},
                         {"lang", lang},
                         {"user", user_obj}};
      corpus << line.dump() << '\n';
    }

    json uj = {{"user_id", uid},
               {"lang", lang},
               {"true_weight_lb", true_w},
               {"planted_signal_lb", signal},
               {"n_weighins", n_weighins},
               {"n_normal_tweets", n_normal},
               {"violation_injected", injected[u] == 1},
               {"outlier", injected[u] == 2 ? json("low") : injected[u] == 3 ? json("high") : json(nullptr)},
               {"low_social", static_cast<bool>(low_social[u])},
               {"sparse", static_cast<bool>(sparse[u])}};
    users_j.push_back(uj);
    if (injected[u] == 1) violation_ids.push_back(uid);
    if (injected[u] >= 2) outlier_ids.push_back(uid);
    if (low_social[u]) low_social_ids.push_back(uid);
    if (sparse[u]) sparse_ids.push_back(uid);
  }

  SynthOutput out;
  out.corpus_jsonl = corpus.str();
  out.liwc = liwc;
  out.perma = perma;
  const double mean_w = n_regular ? sum_w / static_cast<double>(n_regular) : 0.0;
  const double var_w = n_regular ? sum_w2 / static_cast<double>(n_regular) - mean_w * mean_w : 0.0;
  json planted_j = json::array();
  for (const auto& p : spec.planted)
    planted_j.push_back({{"feature", "Tweet_" + p.lexicon + "_" + p.category}, {"effect_lb", p.effect_lb}});
  out.manifest = {{"spec", spec.to_json()},
                  {"users", users_j},
                  {"planted", planted_j},
                  {"injected_violation_users", violation_ids},
                  {"injected_outlier_users", outlier_ids},
                  {"low_social_users", low_social_ids},
                  {"sparse_users", sparse_ids},
                  {"true_weight_mean_lb", mean_w},
                  {"true_weight_sd_lb", std::sqrt(std::max(0.0, var_w))}};
  return out;
}

}  // namespace qsfusion
