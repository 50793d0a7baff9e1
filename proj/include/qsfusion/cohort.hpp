#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsfusion/ingest.hpp"

namespace qsfusion {

struct CohortConfig {
  std::int64_t min_normal_tweets = 10;
  std::int64_t min_weighins = 10;
  std::int64_t min_friends = 50;
  std::int64_t min_followers = 50;
  bool require_social = true;

  // Throws std::invalid_argument when a threshold is negative.
  void validate() const;
};

struct ClassifiedTweet {
  const TweetRecord* tweet = nullptr;
  SourceClass source_class = SourceClass::Normal;
};

std::size_t count_normal_tweets(std::span<const SourceClass> classes);
std::size_t count_normal_tweets(std::span<const ClassifiedTweet> tweets);

// Inputs to the inclusion rules for one user.
struct UserActivity {
  std::string user_id;
  std::int64_t normal_tweets = 0;
  std::int64_t weighins = 0;
  std::int64_t friends_count = 0;
  std::int64_t followers_count = 0;
};

// Reason tags: "normal_tweets", "weighins", "friends", "followers".
struct CohortReport {
  std::set<std::string> retained;
  std::map<std::string, std::vector<std::string>> excluded;
  // Users remaining after each rule is applied in order: input, normal_tweets, weighins, social.
  std::vector<std::pair<std::string, std::size_t>> funnel;

  nlohmann::json to_json() const;
};

CohortReport select_cohort(std::span<const UserActivity> users, const CohortConfig& config);

}  // namespace qsfusion
