#include <doctest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "qsfusion/csv.hpp"
#include "qsfusion/pipeline.hpp"
#include "qsfusion/synth.hpp"
#include "scratch_dir.hpp"

using namespace qsfusion;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// user_id -> exclusion_reason from clean/exclusions.csv
std::map<std::string, std::string> exclusion_reasons(const std::filesystem::path& run) {
  std::istringstream in(slurp(run / "clean" / "exclusions.csv"));
  std::map<std::string, std::string> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = csv::split_line(line);
    out[f.front()] = f.back();
  }
  return out;
}

PipelineConfig small_config(std::size_t n_users) {
  PipelineConfig c;
  c.synth.n_users = n_users;
  c.synth.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  SynthSpec s;
  s.n_users = 30;
  const auto a = generate_corpus(s);
  const auto b = generate_corpus(s);
  CHECK(a.corpus_jsonl == b.corpus_jsonl);
  CHECK(a.manifest == b.manifest);
  s.seed = 2;
  CHECK(generate_corpus(s).corpus_jsonl != a.corpus_jsonl);
  CHECK(a.manifest["users"].size() == 30u);
  CHECK(a.liwc.categories().size() == 64u);
  CHECK(a.perma.categories().size() == 10u);
}

TEST_CASE("spec validation and json round trip") {
  SynthSpec s;
  s.violation_rate = 0.2;
  s.planted = {{"PERMA", "negative_emotion", -12.5}};
  const auto back = SynthSpec::from_json(s.to_json());
  CHECK(back.to_json() == s.to_json());
  SynthSpec bad;
  bad.violation_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = {};
  bad.planted = {{"LIWC", "no_such_category", 1.0}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = {};
  bad.n_users = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("zero injection rates exclude nobody at clean") {
  ScratchDir dir("synth-zero");
  const auto c = small_config(60);
  for (auto st : {Stage::Synth, Stage::Ingest, Stage::Clean}) run_stage(st, c, dir.path());
  const auto reasons = exclusion_reasons(dir.path());
  CHECK(reasons.size() == 60u);
  for (const auto& [uid, r] : reasons) CHECK(r == "none");
}

TEST_CASE("injected anomalies are exactly the clean-stage exclusions") {
  ScratchDir dir("synth-inject");
  auto c = small_config(120);
  c.synth.violation_rate = 0.1;
  c.synth.outlier_rate = 0.08;
  c.synth.low_social_rate = 0.1;
  c.synth.sparse_rate = 0.1;
  for (auto st : {Stage::Synth, Stage::Ingest, Stage::Clean}) run_stage(st, c, dir.path());
  const auto manifest = nlohmann::json::parse(slurp(dir.path() / "synth" / "manifest.json"));
  const auto violators = manifest["injected_violation_users"].get<std::set<std::string>>();
  const auto outliers = manifest["injected_outlier_users"].get<std::set<std::string>>();
  CHECK_FALSE(violators.empty());
  CHECK_FALSE(outliers.empty());

  std::set<std::string> got_v, got_o;
  for (const auto& [uid, r] : exclusion_reasons(dir.path())) {
    if (r == "violations") got_v.insert(uid);
    if (r == "low_avg" || r == "high_avg") got_o.insert(uid);
  }
  CHECK(got_v == violators);
  CHECK(got_o == outliers);

  // low-social and sparse users fall out at the cohort stage
  run_stage(Stage::Cohort, c, dir.path());
  const auto cohort = nlohmann::json::parse(slurp(dir.path() / "cohort" / "report.json"));
  const auto& excluded = cohort["individual"]["excluded"];
  for (const auto& uid : manifest["low_social_users"]) CHECK(excluded.contains(uid.get<std::string>()));
  for (const auto& uid : manifest["sparse_users"]) CHECK(excluded.contains(uid.get<std::string>()));
}

TEST_CASE("a planted effect surfaces in the coefficient report") {
  ScratchDir dir("synth-planted");
  auto c = small_config(150);
  c.synth.planted = {{"LIWC", "social", 20.0}};
  c.feature_sets = {"tweet_only"};
  c.rows = {{"SVM (Linear Kernel)", ModelKind::SvrLinear, false}};
  for (auto st : {Stage::Synth, Stage::Ingest, Stage::Clean, Stage::Cohort, Stage::Features, Stage::Train})
    run_stage(st, c, dir.path());
  const auto coef = nlohmann::json::parse(slurp(dir.path() / "train" / "coefficients.json"));
  const auto& rep = coef.at("tweet_only/SVM (Linear Kernel)");
  std::vector<std::string> positive;
  for (const auto& e : rep["positive"]) positive.push_back(e["feature"]);
  REQUIRE_FALSE(positive.empty());
  CHECK(positive.front() == "Tweet_LIWC_social");
}
