#include "qsfusion/cohort.hpp"

#include <algorithm>
#include <stdexcept>

namespace qsfusion {

void CohortConfig::validate() const {
  if (min_normal_tweets < 0 || min_weighins < 0 || min_friends < 0 || min_followers < 0)
    throw std::invalid_argument("cohort thresholds must be non-negative");
}

std::size_t count_normal_tweets(std::span<const SourceClass> classes) {
  return static_cast<std::size_t>(std::count(classes.begin(), classes.end(), SourceClass::Normal));
}

std::size_t count_normal_tweets(std::span<const ClassifiedTweet> tweets) {
  return static_cast<std::size_t>(std::count_if(tweets.begin(), tweets.end(), [](const ClassifiedTweet& t) {
    return t.source_class == SourceClass::Normal;
  }));
}

CohortReport select_cohort(std::span<const UserActivity> users, const CohortConfig& config) {
  config.validate();
  CohortReport report;
  std::size_t after_normal = 0, after_weighins = 0, after_social = 0;
  for (const auto& u : users) {
    std::vector<std::string> reasons;
    const bool normal_ok = u.normal_tweets >= config.min_normal_tweets;
    const bool weighins_ok = u.weighins >= config.min_weighins;
    if (!normal_ok) reasons.emplace_back("normal_tweets");
    if (!weighins_ok) reasons.emplace_back("weighins");
    if (config.require_social) {
      if (u.friends_count < config.min_friends) reasons.emplace_back("friends");
      if (u.followers_count < config.min_followers) reasons.emplace_back("followers");
    }
    after_normal += normal_ok;
    after_weighins += normal_ok && weighins_ok;
    if (reasons.empty()) {
      ++after_social;
      report.retained.insert(u.user_id);
    } else {
      report.excluded[u.user_id] = std::move(reasons);
    }
  }
  report.funnel = {{"input", users.size()},
                   {"normal_tweets", after_normal},
                   {"weighins", after_weighins}};
  if (config.require_social) report.funnel.emplace_back("social", after_social);
  return report;
}

nlohmann::json CohortReport::to_json() const {
  nlohmann::json j;
  j["retained"] = retained;
  nlohmann::json ex = nlohmann::json::object();
  for (const auto& [uid, reasons] : excluded) ex[uid] = reasons;
  j["excluded"] = ex;
  nlohmann::json f = nlohmann::json::array();
  for (const auto& [stage, n] : funnel) f.push_back({{"stage", stage}, {"remaining", n}});
  j["funnel"] = f;
  return j;
}

}  // namespace qsfusion
