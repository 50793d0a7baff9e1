#include <doctest.h>

#include <algorithm>
#include <random>

#include "qsfusion/cohort.hpp"

using namespace qsfusion;

namespace {

UserActivity user(std::string id, std::int64_t normal, std::int64_t weighins, std::int64_t friends,
                  std::int64_t followers) {
  return {std::move(id), normal, weighins, friends, followers};
}

std::vector<UserActivity> random_users(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::int64_t> small(0, 25), social(0, 120);
  std::vector<UserActivity> users;
  for (std::size_t i = 0; i < n; ++i)
    users.push_back(user("u" + std::to_string(i), small(rng), small(rng), social(rng), social(rng)));
  return users;
}

bool subset(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST_CASE("count_normal_tweets") {
  std::vector<SourceClass> classes(269, SourceClass::WeighIn);
  std::fill_n(classes.begin() + 100, 30, SourceClass::Normal);
  std::fill_n(classes.begin(), 20, SourceClass::Fitness);
  CHECK(count_normal_tweets(classes) == 30u);
  CHECK(count_normal_tweets(std::vector<SourceClass>(12, SourceClass::WeighIn)) == 0u);
  CHECK(count_normal_tweets(std::vector<SourceClass>{}) == 0u);
}

TEST_CASE("social thresholds from the worked examples") {
  const CohortConfig cfg;
  const std::vector<UserActivity> users = {user("below", 40, 40, 60, 41), user("above", 40, 40, 657, 55),
                                           user("few_weighins", 40, 9, 1000, 1000)};
  const auto rep = select_cohort(users, cfg);
  CHECK(rep.retained == std::set<std::string>{"above"});
  CHECK(rep.excluded.at("below") == std::vector<std::string>{"followers"});
  CHECK(rep.excluded.at("few_weighins") == std::vector<std::string>{"weighins"});

  CohortConfig pop;
  pop.require_social = false;
  const auto prep = select_cohort(users, pop);
  CHECK(prep.retained == std::set<std::string>{"above", "below"});
  CHECK(prep.funnel.size() == 3u);
  CHECK(rep.funnel.back() == std::pair<std::string, std::size_t>{"social", 1});
}

TEST_CASE("every failed rule is listed") {
  const auto rep = select_cohort(std::vector{user("x", 0, 0, 0, 0)}, CohortConfig{});
  CHECK(rep.excluded.at("x") == std::vector<std::string>{"normal_tweets", "weighins", "friends", "followers"});
  CHECK_THROWS_AS(select_cohort(std::vector{user("x", 0, 0, 0, 0)}, CohortConfig{-1}), std::invalid_argument);
}

TEST_CASE("cohort properties") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 200; ++t) {
    const auto users = random_users(rng, 60);
    CohortConfig cfg;
    const auto base = select_cohort(users, cfg);

    // partition of the input
    CHECK(base.retained.size() + base.excluded.size() == users.size());
    for (const auto& [uid, reasons] : base.excluded) {
      CHECK_FALSE(base.retained.count(uid));
      CHECK_FALSE(reasons.empty());
    }

    // reasons reproducible from counts
    for (const auto& u : users) {
      std::vector<std::string> want;
      if (u.normal_tweets < 10) want.push_back("normal_tweets");
      if (u.weighins < 10) want.push_back("weighins");
      if (u.friends_count < 50) want.push_back("friends");
      if (u.followers_count < 50) want.push_back("followers");
      if (want.empty())
        CHECK(base.retained.count(u.user_id));
      else
        CHECK(base.excluded.at(u.user_id) == want);
    }

    // monotone in each threshold
    for (int field = 0; field < 4; ++field) {
      CohortConfig raised = cfg;
      const auto bump = static_cast<std::int64_t>(1 + rng() % 30);
      (field == 0 ? raised.min_normal_tweets
                  : field == 1 ? raised.min_weighins
                               : field == 2 ? raised.min_friends
                                            : raised.min_followers) += bump;
      CHECK(subset(select_cohort(users, raised).retained, base.retained));
    }

    CohortConfig pop = cfg;
    pop.require_social = false;
    CHECK(subset(base.retained, select_cohort(users, pop).retained));

    // funnel is non-increasing and ends at the retained count
    for (std::size_t i = 1; i < base.funnel.size(); ++i) CHECK(base.funnel[i].second <= base.funnel[i - 1].second);
    CHECK(base.funnel.back().second == base.retained.size());
  }
}

TEST_CASE("cohort report json") {
  const auto rep = select_cohort(std::vector{user("a", 10, 10, 50, 50), user("b", 9, 10, 50, 50)}, CohortConfig{});
  const auto j = rep.to_json();
  CHECK(j["retained"] == nlohmann::json::array({"a"}));
  CHECK(j["excluded"]["b"] == nlohmann::json::array({"normal_tweets"}));
  CHECK(j["funnel"][0]["remaining"] == 2);
  CHECK(j["funnel"][1]["remaining"] == 1);
}
