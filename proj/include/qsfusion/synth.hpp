#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsfusion/lexfeat.hpp"

namespace qsfusion {

// A planted linear effect: a user's tweet-category level in [0, 1] shifts their
// true weight by effect_lb * (level - 0.5).
struct PlantedEffect {
  std::string lexicon;   // "LIWC" or "PERMA"
  std::string category;  // category name in that lexicon
  double effect_lb = 0.0;
};

struct SynthSpec {
  std::uint64_t seed = 1;
  std::size_t n_users = 400;
  double weight_mean_lb = 178.4;
  double noise_sd_lb = 10.0;
  std::vector<PlantedEffect> planted = default_planted_effects();

  std::size_t min_weighins = 12;
  std::size_t max_weighins = 40;
  std::size_t min_normal_tweets = 20;
  std::size_t max_normal_tweets = 40;
  std::size_t min_fitness_tweets = 2;
  std::size_t max_fitness_tweets = 12;
  std::size_t tweet_tokens_per_user = 800;  // category words + filler words in normal tweets
  std::size_t max_tokens_per_category = 8;

  // Relative weekday frequencies, Monday first.
  std::array<double, 7> weekday_weighin_weights{54, 54, 54, 53, 47, 63, 52};
  std::array<double, 7> weekday_fitness_weights{9.4, 9.6, 9.3, 9.2, 8.9, 8.8, 9.0};
  // Added to every weigh-in in that month, January first.
  std::array<double, 12> monthly_offset_lb{0.6, 0.4, 0.2, 0.0, -0.1, -0.2, -0.2, -0.2, -0.3, -0.4, -0.1, 0.3};

  double violation_rate = 0.0;    // users given >3 implausible same-day weigh-ins
  double outlier_rate = 0.0;      // users with a mean outside [100, 300] lb
  double unparseable_rate = 0.05; // extra weigh-in tweets per weigh-in that carry no weight
  double ja_fraction = 0.5;
  double low_social_rate = 0.0;   // users with fewer than 50 followers
  double sparse_rate = 0.0;       // users with fewer than 10 normal tweets

  int start_year = 2014;
  int years = 2;

  static std::vector<PlantedEffect> default_planted_effects();

  // Throws std::invalid_argument on a contradictory spec.
  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SynthOutput {
  std::string corpus_jsonl;  // tweet_v1 lines
  nlohmann::json manifest;
  Lexicon liwc;
  Lexicon perma;
};

SynthOutput generate_corpus(const SynthSpec& spec);

// Fixed synthetic lexicons in the LIWC file layout: 64 LIWC-style and 10 PERMA-style categories.
const Lexicon& synthetic_liwc_lexicon();
const Lexicon& synthetic_perma_lexicon();

}  // namespace qsfusion
