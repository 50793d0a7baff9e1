#include "qsfusion/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qsfusion/civil_time.hpp"
#include "qsfusion/csv.hpp"
#include "qsfusion/errors.hpp"
#include "qsfusion/hashing.hpp"
#include "qsfusion/lexfeat.hpp"
#include "qsfusion/trends.hpp"

namespace qsfusion {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStageNames[] = {"ingest", "clean", "cohort", "features", "train",
                                       "evaluate", "trends", "synth", "report"};

// Files each stage publishes; downstream stages check for them.
const std::map<Stage, std::vector<std::string>>& stage_outputs() {
  static const std::map<Stage, std::vector<std::string>> kOutputs = {
      {Stage::Synth, {"synth/tweets.jsonl", "synth/manifest.json", "synth/liwc.dic", "synth/perma.dic"}},
      {Stage::Ingest, {"ingest/tweets.jsonl", "ingest/users.jsonl", "ingest/report.json"}},
      {Stage::Clean, {"clean/series.jsonl", "clean/parse_counts.json", "clean/exclusions.csv"}},
      {Stage::Cohort, {"cohort/report.json"}},
      {Stage::Features, {"features/lexical.csv", "features/tokens.jsonl", "features/targets.csv"}},
      {Stage::Train, {"train/models.json", "train/coefficients.json", "train/coefficients.txt"}},
      {Stage::Evaluate, {"evaluate/metrics.json", "evaluate/metrics.txt", "evaluate/predictions.csv"}},
      {Stage::Trends,
       {"trends/weekday.csv", "trends/weekday.json", "trends/monthly.csv", "trends/monthly.json", "trends/long.csv",
        "trends/comparison.json"}},
      {Stage::Report, {"report/report.json", "report/report.txt"}},
  };
  return kOutputs;
}

void require_stage(const fs::path& run_dir, Stage upstream) {
  for (const auto& rel : stage_outputs().at(upstream)) {
    if (!fs::exists(run_dir / rel)) {
      const std::string name(to_string(upstream));
      throw MissingStageError(name, name + " outputs missing; run `" + name + "` first");
    }
  }
}

bool stage_complete(const fs::path& run_dir, Stage s) {
  for (const auto& rel : stage_outputs().at(s))
    if (!fs::exists(run_dir / rel)) return false;
  return true;
}

fs::path resolve(const PipelineConfig& c, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : c.base_dir / path;
}

// Tracks inputs/outputs for the manifest entry of one stage run.
class StageWriter {
 public:
  StageWriter(Stage stage, const PipelineConfig& config, fs::path run_dir)
      : stage_(stage), config_(config), run_dir_(std::move(run_dir)) {}

  void input_file(const std::string& label, const fs::path& path) { inputs_[label] = sha256_file(path); }
  void input_run_file(const std::string& rel) { inputs_[rel] = sha256_file(run_dir_ / rel); }
  void input_stage(Stage s) {
    for (const auto& rel : stage_outputs().at(s)) input_run_file(rel);
  }

  void write(const std::string& rel, const std::string& contents) {
    write_file_atomic(run_dir_ / rel, contents);
    outputs_[rel] = sha256_hex(contents);
    result_.outputs.push_back(rel);
  }

  StageResult finish() {
    const std::string config_dump = config_.to_json().dump(2) + "\n";
    write_file_atomic(run_dir_ / "config.json", config_dump);
    const fs::path manifest_path = run_dir_ / "manifest.json";
    json manifest = json::object();
    if (fs::exists(manifest_path)) {
      try {
        manifest = json::parse(read_file(manifest_path));
      } catch (const json::exception&) {
        manifest = json::object();
      }
    }
    json outputs = json::object();
    for (const auto& [k, v] : outputs_) outputs[k] = v;
    json inputs = json::object();
    for (const auto& [k, v] : inputs_) inputs[k] = v;
    manifest["stages"][std::string(to_string(stage_))] = {
        {"config_hash", config_.hash()}, {"inputs", inputs}, {"outputs", outputs}};
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
    return result_;
  }

  StageResult& result() { return result_; }

 private:
  Stage stage_;
  const PipelineConfig& config_;
  fs::path run_dir_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
  StageResult result_;
};

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    fn(json::parse(line));
  }
}

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

// ---- normalized record store ----

struct StoredTweet {
  TweetRecord tweet;
  SourceClass source_class = SourceClass::Normal;
};

json tweet_to_json(const TweetRecord& t, SourceClass c) {
  return {{"tweet_id", t.tweet_id}, {"user_id", t.user_id}, {"text", t.text}, {"source_label", t.source_label},
          {"source_class", std::string(to_string(c))}, {"created_at", t.created_at}, {"lang", t.lang}};
}

StoredTweet tweet_from_json(const json& j) {
  StoredTweet s;
  s.tweet.tweet_id = j.at("tweet_id").get<std::string>();
  s.tweet.user_id = j.at("user_id").get<std::string>();
  s.tweet.text = j.at("text").get<std::string>();
  s.tweet.source_label = j.at("source_label").get<std::string>();
  s.tweet.created_at = j.at("created_at").get<std::int64_t>();
  s.tweet.lang = j.at("lang").get<std::string>();
  s.source_class = source_class_from_string(j.at("source_class").get<std::string>());
  return s;
}

json user_to_json(const UserRecord& u) {
  return {{"user_id", u.user_id}, {"bio", u.bio}, {"friends_count", u.friends_count},
          {"followers_count", u.followers_count}, {"lang", u.lang}};
}

UserRecord user_from_json(const json& j) {
  UserRecord u;
  u.user_id = j.at("user_id").get<std::string>();
  u.bio = j.at("bio").get<std::string>();
  u.friends_count = j.at("friends_count").get<std::int64_t>();
  u.followers_count = j.at("followers_count").get<std::int64_t>();
  u.lang = j.at("lang").get<std::string>();
  return u;
}

std::vector<StoredTweet> load_tweets(const fs::path& run_dir) {
  std::vector<StoredTweet> out;
  for_each_jsonl(run_dir / "ingest/tweets.jsonl", [&](const json& j) { out.push_back(tweet_from_json(j)); });
  return out;
}

std::vector<UserRecord> load_users(const fs::path& run_dir) {
  std::vector<UserRecord> out;
  for_each_jsonl(run_dir / "ingest/users.jsonl", [&](const json& j) { out.push_back(user_from_json(j)); });
  return out;
}

json series_to_json(const WeighInSeries& s) {
  json obs = json::array();
  for (const auto& o : s.observations) obs.push_back({o.day_index, o.weight_lb});
  return {{"user_id", s.user_id},
          {"observations", obs},
          {"violation_count", s.violation_count.value_or(0)},
          {"exclusion", std::string(to_string(s.exclusion.value_or(ExclusionReason::None)))}};
}

ExclusionReason exclusion_from_string(const std::string& s) {
  for (ExclusionReason r : {ExclusionReason::None, ExclusionReason::Violations, ExclusionReason::LowAverage,
                            ExclusionReason::HighAverage})
    if (to_string(r) == s) return r;
  throw DataError("unknown exclusion reason '" + s + "'");
}

std::map<std::string, WeighInSeries> load_series(const fs::path& run_dir) {
  std::map<std::string, WeighInSeries> out;
  for_each_jsonl(run_dir / "clean/series.jsonl", [&](const json& j) {
    WeighInSeries s;
    s.user_id = j.at("user_id").get<std::string>();
    for (const auto& o : j.at("observations"))
      s.observations.push_back({s.user_id, o.at(0).get<std::int64_t>(), o.at(1).get<double>()});
    s.violation_count = j.at("violation_count").get<std::size_t>();
    s.exclusion = exclusion_from_string(j.at("exclusion").get<std::string>());
    out.emplace(s.user_id, std::move(s));
  });
  return out;
}

std::vector<Lexicon> load_configured_lexicons(const PipelineConfig& c, const fs::path& run_dir, StageWriter& w) {
  std::vector<Lexicon> out;
  if (c.lexicons.empty()) {
    if (!fs::exists(run_dir / "synth/liwc.dic") || !fs::exists(run_dir / "synth/perma.dic"))
      throw MissingStageError("synth", "synth outputs missing; run `synth` first or configure lexicons");
    w.input_run_file("synth/liwc.dic");
    w.input_run_file("synth/perma.dic");
    out.push_back(load_lexicon(run_dir / "synth/liwc.dic", "LIWC", 64));
    out.push_back(load_lexicon(run_dir / "synth/perma.dic", "PERMA", 10));
    return out;
  }
  for (const auto& spec : c.lexicons) {
    const fs::path p = resolve(c, spec.path);
    w.input_file(spec.path, p);
    out.push_back(load_lexicon(p, spec.name, spec.expected_categories));
  }
  return out;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string render_metrics_table(const json& metrics) {
  std::ostringstream out;
  out << "Weight prediction, " << metrics.at("k").get<std::size_t>() << "-fold cross-validation (lb)\n";
  out << pad("Feature set", 18) << pad("Model", 28) << pad("R", 9) << pad("MAE", 9) << "RMSE\n";
  for (const auto& r : metrics.at("reports")) {
    const auto& p = r.at("pooled");
    const std::string rv = p.at("R").is_null() ? "undef" : fmt2(p.at("R").get<double>());
    out << pad(r.at("feature_set").get<std::string>(), 18) << pad(r.at("model").get<std::string>(), 28) << pad(rv, 9)
        << pad(fmt2(p.at("MAE").get<double>()), 9) << fmt2(p.at("RMSE").get<double>()) << '\n';
  }
  return out.str();
}

std::string render_coefficients(const json& coeffs) {
  std::ostringstream out;
  for (const auto& [key, rep] : coeffs.items()) {
    out << "Top coefficients (" << key << ")\n";
    const auto& pos = rep.at("positive");
    const auto& neg = rep.at("negative");
    out << pad("Feature", 32) << pad("Coef.", 10) << pad("Feature", 32) << "Coef.\n";
    const std::size_t rows = std::max(pos.size(), neg.size());
    for (std::size_t i = 0; i < rows; ++i) {
      std::string l1, l2, r1, r2;
      if (i < pos.size()) l1 = pos[i].at("feature").get<std::string>(), l2 = fmt2(pos[i].at("coefficient").get<double>());
      if (i < neg.size()) r1 = neg[i].at("feature").get<std::string>(), r2 = fmt2(neg[i].at("coefficient").get<double>());
      out << pad(l1, 32) << pad(l2, 10) << pad(r1, 32) << r2 << '\n';
    }
    out << '\n';
  }
  return out.str();
}

std::string render_weekday(const json& wd) {
  std::ostringstream out;
  out << pad("", 12);
  for (const auto& r : wd.at("weekdays")) out << pad(r.at("weekday").get<std::string>(), 8);
  out << "\n" << pad("Weigh-ins", 12);
  for (const auto& r : wd.at("weekdays")) out << pad(std::to_string(r.at("weighins").get<std::int64_t>()), 8);
  out << "\n" << pad("Fitness", 12);
  for (const auto& r : wd.at("weekdays")) out << pad(std::to_string(r.at("fitness").get<std::int64_t>()), 8);
  out << '\n';
  return out.str();
}

std::string render_monthly(const json& m) {
  std::ostringstream out;
  out << pad("Month", 8) << pad("Mean dev (lb)", 16) << pad("Std. error", 12) << "Users\n";
  for (const auto& r : m.at("months")) {
    const auto& mean = r.at("mean_deviation_lb");
    const auto& se = r.at("stderr_lb");
    out << pad(r.at("month").get<std::string>(), 8) << pad(mean.is_null() ? "-" : fmt2(mean.get<double>()), 16)
        << pad(se.is_null() ? "-" : fmt2(se.get<double>()), 12) << r.at("users").get<std::size_t>() << '\n';
  }
  return out.str();
}

// ---- stages ----

StageResult stage_synth(const PipelineConfig& c, const fs::path& run_dir) {
  StageWriter w(Stage::Synth, c, run_dir);
  const SynthOutput out = generate_corpus(c.synth);
  w.write("synth/tweets.jsonl", out.corpus_jsonl);
  w.write("synth/manifest.json", out.manifest.dump(2) + "\n");
  w.write("synth/liwc.dic", render_lexicon(out.liwc));
  w.write("synth/perma.dic", render_lexicon(out.perma));
  return w.finish();
}

StageResult stage_ingest(const PipelineConfig& c, const fs::path& run_dir) {
  StageWriter w(Stage::Ingest, c, run_dir);
  std::vector<std::pair<std::string, fs::path>> files;
  if (c.corpus.empty()) {
    if (!fs::exists(run_dir / "synth/tweets.jsonl"))
      throw MissingStageError("synth", "synth outputs missing; run `synth` first or configure a corpus");
    files.emplace_back("synth/tweets.jsonl", run_dir / "synth/tweets.jsonl");
    w.input_run_file("synth/tweets.jsonl");
  } else {
    for (const auto& p : c.corpus) {
      files.emplace_back(p, resolve(c, p));
      if (!fs::exists(files.back().second)) throw DataError("corpus file not found: " + p);
      w.input_file(p, files.back().second);
    }
  }
  const CorpusSchema schema = corpus_schema_from_string(c.corpus_schema);

  IngestReport report;
  std::set<std::string> seen;
  std::ostringstream tweets_out;
  std::vector<UserRecord> users;
  std::map<std::string, std::size_t> user_slot;
  auto upsert_user = [&](UserRecord u) {
    auto [it, fresh] = user_slot.try_emplace(u.user_id, users.size());
    if (fresh) {
      users.push_back(std::move(u));
    } else {
      users[it->second] = std::move(u);
    }
  };
  for (const auto& [label, path] : files) {
    CorpusReadResult r = read_corpus(path, schema, ReadOptions{c.keyword_prefilter});
    report.line_count += r.line_count;
    report.filtered += r.filtered;
    for (auto& e : r.errors) report.errors.emplace_back(label, std::move(e));
    for (auto& rec : r.records) {
      if (auto* u = std::get_if<UserRecord>(&rec)) {
        upsert_user(std::move(*u));
        continue;
      }
      auto& t = std::get<TweetRecord>(rec);
      if (!seen.insert(t.tweet_id).second) {
        report.errors.emplace_back(label, LineError{0, "duplicate tweet id_str " + t.tweet_id + " across files"});
        continue;
      }
      const SourceClass cls = classify_source(t.source_label, c.source_patterns);
      ++report.per_class[static_cast<int>(cls)];
      ++report.tweet_count;
      tweets_out << tweet_to_json(t, cls).dump() << '\n';
    }
    for (auto& u : r.embedded_users) upsert_user(std::move(u));
  }
  for (const auto& p : c.user_files) {
    const fs::path path = resolve(c, p);
    w.input_file(p, path);
    CorpusReadResult r = read_corpus(path, CorpusSchema::Users);
    report.line_count += r.line_count;
    for (auto& e : r.errors) report.errors.emplace_back(p, std::move(e));
    for (auto& rec : r.records) upsert_user(std::get<UserRecord>(std::move(rec)));
  }
  std::ostringstream users_out;
  for (const auto& u : users) users_out << user_to_json(u).dump() << '\n';
  report.user_count = users.size();

  w.write("ingest/tweets.jsonl", tweets_out.str());
  w.write("ingest/users.jsonl", users_out.str());
  w.write("ingest/report.json", report.to_json().dump(2) + "\n");
  if (!report.errors.empty())
    w.result().notes.push_back(std::to_string(report.errors.size()) + " malformed corpus lines (see ingest/report.json)");
  return w.finish();
}

StageResult stage_clean(const PipelineConfig& c, const fs::path& run_dir) {
  require_stage(run_dir, Stage::Ingest);
  StageWriter w(Stage::Clean, c, run_dir);
  w.input_stage(Stage::Ingest);
  const WeighInGrammar grammar(c.grammar);

  std::map<std::string, std::vector<WeighIn>> per_user;
  std::map<std::string, json> counts;
  for (const auto& s : load_tweets(run_dir)) {
    if (s.source_class != SourceClass::WeighIn) continue;
    auto& cnt = counts[s.tweet.user_id];
    if (cnt.is_null()) cnt = {{"weighin_tweets", 0}, {"parsed", 0}, {"no_match", 0}, {"nonpositive", 0}};
    cnt["weighin_tweets"] = cnt["weighin_tweets"].get<int>() + 1;
    const ParseOutcome p = parse_weighin(s.tweet.text, grammar);
    if (p.status == ParseStatus::NoMatch) {
      cnt["no_match"] = cnt["no_match"].get<int>() + 1;
      continue;
    }
    if (p.status == ParseStatus::NonPositive) {
      cnt["nonpositive"] = cnt["nonpositive"].get<int>() + 1;
      continue;
    }
    cnt["parsed"] = cnt["parsed"].get<int>() + 1;
    per_user[s.tweet.user_id].push_back(
        {s.tweet.user_id, civil::day_index(s.tweet.created_at), to_pounds(p.measurement.value, p.measurement.unit)});
  }
  std::vector<WeighInSeries> all;
  std::ostringstream series_out;
  for (auto& [uid, wis] : per_user) {
    WeighInSeries s = build_series(std::move(wis));
    s.violation_count = count_violations(s);
    s = apply_exclusions(std::move(s), c.exclusions);
    series_out << series_to_json(s).dump() << '\n';
    all.push_back(std::move(s));
  }
  json counts_j = json::object();
  for (auto& [uid, cnt] : counts) counts_j[uid] = cnt;
  w.write("clean/series.jsonl", series_out.str());
  w.write("clean/parse_counts.json", counts_j.dump(2) + "\n");
  w.write("clean/exclusions.csv", exclusion_report_csv(all));
  return w.finish();
}

StageResult stage_cohort(const PipelineConfig& c, const fs::path& run_dir) {
  require_stage(run_dir, Stage::Ingest);
  require_stage(run_dir, Stage::Clean);
  StageWriter w(Stage::Cohort, c, run_dir);
  w.input_stage(Stage::Ingest);
  w.input_stage(Stage::Clean);

  std::map<std::string, std::int64_t> normal;
  for (const auto& s : load_tweets(run_dir))
    if (s.source_class == SourceClass::Normal) ++normal[s.tweet.user_id];
  const json counts = read_json(run_dir / "clean/parse_counts.json");
  const auto series = load_series(run_dir);

  std::vector<UserActivity> activity;
  for (const auto& u : load_users(run_dir)) {
    UserActivity a;
    a.user_id = u.user_id;
    a.normal_tweets = normal.count(u.user_id) ? normal.at(u.user_id) : 0;
    if (counts.contains(u.user_id)) {
      const auto& cnt = counts.at(u.user_id);
      a.weighins = c.count_unparseable_weighins ? cnt.at("weighin_tweets").get<std::int64_t>()
                                                : cnt.at("parsed").get<std::int64_t>();
    }
    a.friends_count = u.friends_count;
    a.followers_count = u.followers_count;
    activity.push_back(std::move(a));
  }
  std::sort(activity.begin(), activity.end(), [](const auto& a, const auto& b) { return a.user_id < b.user_id; });

  CohortConfig pop_cfg = c.cohort;
  pop_cfg.require_social = false;
  CohortConfig ind_cfg = c.cohort;
  ind_cfg.require_social = true;
  const CohortReport population = select_cohort(activity, pop_cfg);
  const CohortReport individual = select_cohort(activity, ind_cfg);

  std::vector<std::string> modeling;
  json weighin_excluded = json::object();
  for (const auto& uid : individual.retained) {
    auto it = series.find(uid);
    if (it == series.end() || it->second.observations.empty()) {
      weighin_excluded[uid] = "no_weighins";
      continue;
    }
    if (it->second.excluded()) {
      weighin_excluded[uid] = std::string(to_string(*it->second.exclusion));
      continue;
    }
    modeling.push_back(uid);
  }
  json funnel = json::array();
  for (const auto& [stage, n] : individual.funnel) funnel.push_back({{"stage", stage}, {"remaining", n}});
  funnel.push_back({{"stage", "plausibility"}, {"remaining", modeling.size()}});

  const json report = {{"population", population.to_json()},
                       {"individual", individual.to_json()},
                       {"weighin_excluded", weighin_excluded},
                       {"modeling", modeling},
                       {"funnel", funnel},
                       {"config", {{"min_normal_tweets", c.cohort.min_normal_tweets},
                                   {"min_weighins", c.cohort.min_weighins},
                                   {"min_friends", c.cohort.min_friends},
                                   {"min_followers", c.cohort.min_followers}}}};
  w.write("cohort/report.json", report.dump(2) + "\n");
  return w.finish();
}

StageResult stage_features(const PipelineConfig& c, const fs::path& run_dir) {
  require_stage(run_dir, Stage::Cohort);
  require_stage(run_dir, Stage::Clean);
  StageWriter w(Stage::Features, c, run_dir);
  w.input_stage(Stage::Ingest);
  w.input_stage(Stage::Clean);
  w.input_stage(Stage::Cohort);
  const auto lexicons = load_configured_lexicons(c, run_dir, w);

  const json cohort = read_json(run_dir / "cohort/report.json");
  std::vector<std::string> modeling = cohort.at("modeling").get<std::vector<std::string>>();
  std::sort(modeling.begin(), modeling.end());
  const std::set<std::string> wanted(modeling.begin(), modeling.end());

  std::map<std::string, std::vector<std::string>> normal_texts;
  for (auto& s : load_tweets(run_dir))
    if (s.source_class == SourceClass::Normal && wanted.count(s.tweet.user_id))
      normal_texts[s.tweet.user_id].push_back(std::move(s.tweet.text));
  std::map<std::string, UserRecord> users;
  for (auto& u : load_users(run_dir))
    if (wanted.count(u.user_id)) users.emplace(u.user_id, std::move(u));
  const auto series = load_series(run_dir);

  const TextNormalizer normalizer = identity_normalizer();
  std::vector<UserDocument> docs;
  std::ostringstream tokens_out, targets_out;
  targets_out << "user_id,lang,reference_weight_lb\n";
  for (const auto& uid : modeling) {
    const UserRecord& u = users.at(uid);
    static const std::vector<std::string> kNone;
    const auto it = normal_texts.find(uid);
    docs.push_back(build_document(uid, u.lang, u.bio, it == normal_texts.end() ? kNone : it->second, normalizer));
    const auto& d = docs.back();
    json tc = json::object(), bc = json::object();
    for (const auto& [tok, n] : count_tokens(d.tweet_tokens)) tc[tok] = n;
    for (const auto& [tok, n] : count_tokens(d.bio_tokens)) bc[tok] = n;
    tokens_out << json{{"user_id", uid}, {"tweet", tc}, {"bio", bc}}.dump() << '\n';
    targets_out << csv::escape(uid) << ',' << csv::escape(u.lang) << ','
                << csv::format_double(reference_weight(series.at(uid))) << '\n';
  }
  const FeatureMatrix lexical = lexical_features(docs, lexicons, true);
  w.write("features/lexical.csv", feature_matrix_csv(lexical));
  w.write("features/tokens.jsonl", tokens_out.str());
  w.write("features/targets.csv", targets_out.str());
  return w.finish();
}

std::string row_key(const std::string& feature_set, const ModelRow& row) { return feature_set + "/" + row.label; }

StageResult stage_train(const PipelineConfig& c, const fs::path& run_dir) {
  require_stage(run_dir, Stage::Features);
  StageWriter w(Stage::Train, c, run_dir);
  w.input_stage(Stage::Features);
  const ModelingDataset data = load_modeling_dataset(run_dir);
  if (data.users.size() < 2) throw DataError("train: fewer than two users in the modeling cohort");
  std::vector<std::size_t> all(data.users.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  json models = json::object();
  json coeffs = json::object();
  for (const auto& fset : c.feature_sets) {
    for (const auto& row : c.rows) {
      const FeatureSetOptions opts = feature_set_options(fset, row.bow, c);
      const FeatureMatrix design = assemble_features(data, opts, all);
      const auto model = make_trainer(row.kind, c)(design.values, data.y, data.langs);
      json mj = model->to_json();
      mj["features"] = design.features;
      models[row_key(fset, row)] = mj;
      if (row.kind == ModelKind::SvrLinear) {
        const auto& svr = static_cast<const SvrLinearModel&>(*model);
        coeffs[row_key(fset, row)] = top_features(svr, design.features, c.top_k).to_json();
      }
    }
  }
  w.write("train/models.json", models.dump(2) + "\n");
  w.write("train/coefficients.json", coeffs.dump(2) + "\n");
  w.write("train/coefficients.txt", render_coefficients(coeffs));
  return w.finish();
}

StageResult stage_evaluate(const PipelineConfig& c, const fs::path& run_dir) {
  require_stage(run_dir, Stage::Train);
  require_stage(run_dir, Stage::Features);
  StageWriter w(Stage::Evaluate, c, run_dir);
  w.input_stage(Stage::Features);
  w.input_stage(Stage::Train);
  const ModelingDataset data = load_modeling_dataset(run_dir);
  if (data.users.size() < c.cv_folds)
    throw DataError("evaluate: " + std::to_string(data.users.size()) + " users cannot fill " +
                    std::to_string(c.cv_folds) + " folds");

  json reports = json::array();
  std::ostringstream preds;
  preds << "feature_set,model,user_id,fold,y_true,y_pred\n";
  std::vector<std::string> row_labels;
  for (const auto& row : c.rows) row_labels.push_back(row.label);
  for (const auto& fset : c.feature_sets) {
    for (const auto& row : c.rows) {
      const FeatureSetOptions opts = feature_set_options(fset, row.bow, c);
      MetricsReport rep = kfold_cv(make_cv_problem(data, opts), c.cv_folds, c.seed, make_trainer(row.kind, c));
      rep.model = row.label;
      rep.feature_config = opts.label();
      json rj = rep.to_json();
      rj["feature_set"] = fset;
      rj["bow"] = row.bow;
      rj["kind"] = std::string(to_string(row.kind));
      reports.push_back(rj);
      for (const auto& p : rep.predictions)
        preds << fset << ',' << csv::escape(row.label) << ',' << csv::escape(p.user_id) << ',' << p.fold << ','
              << csv::format_double(p.y_true) << ',' << csv::format_double(p.y_pred) << '\n';
    }
  }
  const json metrics = {{"k", c.cv_folds}, {"seed", c.seed}, {"rows", row_labels},
                        {"feature_sets", c.feature_sets}, {"n_users", data.users.size()}, {"reports", reports}};
  w.write("evaluate/metrics.json", metrics.dump(2) + "\n");
  w.write("evaluate/metrics.txt", render_metrics_table(metrics));
  w.write("evaluate/predictions.csv", preds.str());
  return w.finish();
}

StageResult stage_trends(const PipelineConfig& c, const fs::path& run_dir) {
  require_stage(run_dir, Stage::Cohort);
  require_stage(run_dir, Stage::Clean);
  StageWriter w(Stage::Trends, c, run_dir);
  w.input_stage(Stage::Ingest);
  w.input_stage(Stage::Clean);
  w.input_stage(Stage::Cohort);

  const json cohort = read_json(run_dir / "cohort/report.json");
  const auto population = cohort.at("population").at("retained").get<std::set<std::string>>();
  const WeighInGrammar grammar(c.grammar);
  std::vector<TimedEvent> events;
  for (const auto& s : load_tweets(run_dir)) {
    if (!population.count(s.tweet.user_id)) continue;
    if (s.source_class == SourceClass::WeighIn && parse_weighin(s.tweet.text, grammar).ok())
      events.push_back({s.tweet.created_at, EventKind::WeighIn});
    if (s.source_class == SourceClass::Fitness) events.push_back({s.tweet.created_at, EventKind::Fitness});
  }
  const WeekdayTable weekday = weekday_counts(events);

  std::vector<WeighInSeries> cleaned;
  for (auto& [uid, s] : load_series(run_dir))
    if (population.count(uid) && !s.excluded()) cleaned.push_back(std::move(s));
  const MonthlyDeviation monthly = monthly_deviation(cleaned);

  json comparisons = json::array();
  if (!c.trend_csv.empty()) {
    const fs::path p = resolve(c, c.trend_csv);
    w.input_file(c.trend_csv, p);
    const TrendSeries ext = import_trend_csv(p);
    for (const auto& warning : ext.warnings) w.result().notes.push_back(warning);
    for (const auto& [term, scores] : ext.scores) {
      if (scores.empty()) continue;
      const auto kind = parse_period(scores.begin()->first)->first;
      const LabeledSeries qs =
          kind == PeriodKind::Weekday ? weekday_series(weekday, EventKind::WeighIn) : monthly_series(monthly);
      json cj = align_and_compare(qs, term, scores).to_json();
      cj["qs_metric"] = kind == PeriodKind::Weekday ? "weighins" : "weight_deviation_lb";
      comparisons.push_back(cj);
    }
  }
  w.write("trends/weekday.csv", weekday.to_csv());
  w.write("trends/weekday.json", weekday.to_json().dump(2) + "\n");
  w.write("trends/monthly.csv", monthly.to_csv());
  w.write("trends/monthly.json", monthly.to_json().dump(2) + "\n");
  w.write("trends/long.csv", long_format_csv(weekday, monthly));
  w.write("trends/comparison.json", comparisons.dump(2) + "\n");
  return w.finish();
}

StageResult stage_report(const PipelineConfig& c, const fs::path& run_dir) {
  StageWriter w(Stage::Report, c, run_dir);
  json sections = json::object();
  json gaps = json::array();
  std::ostringstream text;
  auto section = [&](const char* name, Stage from, const std::string& rel, auto render) {
    if (!stage_complete(run_dir, from)) {
      const std::string stage(to_string(from));
      gaps.push_back({{"section", name}, {"missing_stage", stage}});
      text << "== " << name << " ==\n(missing: run `" << stage << "` first)\n\n";
      return;
    }
    w.input_run_file(rel);
    const json j = read_json(run_dir / rel);
    sections[name] = j;
    text << "== " << name << " ==\n" << render(j) << '\n';
  };
  section("metrics", Stage::Evaluate, "evaluate/metrics.json", render_metrics_table);
  section("coefficients", Stage::Train, "train/coefficients.json", render_coefficients);
  section("weekday", Stage::Trends, "trends/weekday.json", render_weekday);
  section("monthly", Stage::Trends, "trends/monthly.json", render_monthly);
  if (stage_complete(run_dir, Stage::Trends)) {
    w.input_run_file("trends/comparison.json");
    sections["weekday"]["comparisons"] = read_json(run_dir / "trends/comparison.json");
  }
  const json report = {{"sections", sections}, {"gaps", gaps}, {"complete", gaps.empty()}};
  w.write("report/report.json", report.dump(2) + "\n");
  w.write("report/report.txt", text.str());
  StageResult r = w.finish();
  if (!gaps.empty()) {
    r.exit_code = 3;
    for (const auto& g : gaps)
      r.notes.push_back("report section '" + g.at("section").get<std::string>() + "' missing; run `" +
                        g.at("missing_stage").get<std::string>() + "`");
  }
  return r;
}

ModelRow row_from_json(const json& j) {
  return {j.at("label").get<std::string>(), model_kind_from_string(j.at("kind").get<std::string>()),
          j.value("bow", false)};
}

}  // namespace

std::string_view to_string(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage stage_from_string(std::string_view name) {
  for (int i = 0; i < 9; ++i)
    if (name == kStageNames[i]) return static_cast<Stage>(i);
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

std::vector<ModelRow> PipelineConfig::default_rows() {
  return {{"Constant Baseline", ModelKind::Constant, false},
          {"Language Split", ModelKind::LanguageSplit, false},
          {"Gaussian Process", ModelKind::GpRbf, false},
          {"Gaussian Process + BoW", ModelKind::GpRbf, true},
          {"SVM (Linear Kernel)", ModelKind::SvrLinear, false}};
}

json PipelineConfig::to_json() const {
  json patterns = json::array();
  for (const auto& p : source_patterns) patterns.push_back({{"pattern", p.pattern}, {"class", std::string(qsfusion::to_string(p.source_class))}});
  json lex = json::array();
  for (const auto& l : lexicons) {
    json lj = {{"name", l.name}, {"path", l.path}};
    if (l.expected_categories) lj["expected_categories"] = *l.expected_categories;
    lex.push_back(lj);
  }
  json grammar_j = json::array();
  for (const auto& r : grammar) grammar_j.push_back({{"name", r.name}, {"pattern", r.pattern}});
  json rows_j = json::array();
  for (const auto& r : rows) rows_j.push_back({{"label", r.label}, {"kind", std::string(qsfusion::to_string(r.kind))}, {"bow", r.bow}});
  json gp_j = {{"grid_search", gp.grid_search}};
  if (gp.fixed) {
    gp_j["length_scale"] = gp.fixed->length_scale;
    gp_j["signal_var"] = gp.fixed->signal_var;
    gp_j["noise_var"] = gp.fixed->noise_var;
  }
  return {{"corpus", corpus},
          {"corpus_schema", corpus_schema},
          {"user_files", user_files},
          {"keyword_prefilter", keyword_prefilter},
          {"source_patterns", patterns},
          {"lexicons", lex},
          {"trend_csv", trend_csv},
          {"cohort", {{"min_normal_tweets", cohort.min_normal_tweets},
                      {"min_weighins", cohort.min_weighins},
                      {"min_friends", cohort.min_friends},
                      {"min_followers", cohort.min_followers}}},
          {"weighin", {{"max_violations", exclusions.max_violations},
                       {"low_lb", exclusions.low_lb},
                       {"high_lb", exclusions.high_lb},
                       {"count_unparseable", count_unparseable_weighins},
                       {"grammar", grammar_j}}},
          {"features", {{"bow_min_df", bow_min_df}, {"bow_max_vocab", bow_max_vocab}, {"feature_sets", feature_sets}}},
          {"models", {{"rows", rows_j},
                      {"svr", {{"C", svr.C}, {"epsilon", svr.epsilon}, {"tolerance", svr.tolerance},
                               {"max_epochs", svr.max_epochs}}},
                      {"gp", gp_j},
                      {"language_split_base", std::string(qsfusion::to_string(language_split_base))}}},
          {"evaluation", {{"k", cv_folds}, {"seed", seed}, {"top_k", top_k}}},
          {"synth", synth.to_json()}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    if (j.contains("corpus")) {
      c.corpus = j.at("corpus").is_string() ? std::vector<std::string>{j.at("corpus").get<std::string>()}
                                           : j.at("corpus").get<std::vector<std::string>>();
    }
    c.corpus_schema = j.value("corpus_schema", c.corpus_schema);
    corpus_schema_from_string(c.corpus_schema);
    if (j.contains("user_files")) c.user_files = j.at("user_files").get<std::vector<std::string>>();
    c.keyword_prefilter = j.value("keyword_prefilter", c.keyword_prefilter);
    if (j.contains("source_patterns")) {
      c.source_patterns.clear();
      for (const auto& p : j.at("source_patterns"))
        c.source_patterns.push_back({p.at("pattern").get<std::string>(), source_class_from_string(p.at("class").get<std::string>())});
    }
    if (j.contains("lexicons")) {
      for (const auto& l : j.at("lexicons")) {
        LexiconSpec s{l.at("name").get<std::string>(), l.at("path").get<std::string>(), std::nullopt};
        if (l.contains("expected_categories") && !l.at("expected_categories").is_null())
          s.expected_categories = l.at("expected_categories").get<std::size_t>();
        c.lexicons.push_back(std::move(s));
      }
    }
    c.trend_csv = j.value("trend_csv", c.trend_csv);
    if (j.contains("cohort")) {
      const auto& k = j.at("cohort");
      c.cohort.min_normal_tweets = k.value("min_normal_tweets", c.cohort.min_normal_tweets);
      c.cohort.min_weighins = k.value("min_weighins", c.cohort.min_weighins);
      c.cohort.min_friends = k.value("min_friends", c.cohort.min_friends);
      c.cohort.min_followers = k.value("min_followers", c.cohort.min_followers);
      c.cohort.validate();
    }
    if (j.contains("weighin")) {
      const auto& k = j.at("weighin");
      c.exclusions.max_violations = k.value("max_violations", c.exclusions.max_violations);
      c.exclusions.low_lb = k.value("low_lb", c.exclusions.low_lb);
      c.exclusions.high_lb = k.value("high_lb", c.exclusions.high_lb);
      c.count_unparseable_weighins = k.value("count_unparseable", c.count_unparseable_weighins);
      if (k.contains("grammar")) {
        c.grammar.clear();
        for (const auto& r : k.at("grammar"))
          c.grammar.push_back({r.at("name").get<std::string>(), r.at("pattern").get<std::string>()});
        WeighInGrammar check(c.grammar);
      }
    }
    if (j.contains("features")) {
      const auto& k = j.at("features");
      c.bow_min_df = k.value("bow_min_df", c.bow_min_df);
      c.bow_max_vocab = k.value("bow_max_vocab", c.bow_max_vocab);
      if (k.contains("feature_sets")) c.feature_sets = k.at("feature_sets").get<std::vector<std::string>>();
      for (const auto& f : c.feature_sets)
        if (f != "tweet_only" && f != "tweet_plus_bio") throw std::invalid_argument("unknown feature set '" + f + "'");
    }
    if (j.contains("models")) {
      const auto& k = j.at("models");
      if (k.contains("rows")) {
        c.rows.clear();
        for (const auto& r : k.at("rows")) c.rows.push_back(row_from_json(r));
      }
      if (k.contains("svr")) {
        const auto& s = k.at("svr");
        c.svr.C = s.value("C", c.svr.C);
        c.svr.epsilon = s.value("epsilon", c.svr.epsilon);
        c.svr.tolerance = s.value("tolerance", c.svr.tolerance);
        c.svr.max_epochs = s.value("max_epochs", c.svr.max_epochs);
      }
      if (k.contains("gp")) {
        const auto& g = k.at("gp");
        c.gp.grid_search = g.value("grid_search", c.gp.grid_search);
        if (g.contains("length_scale") || g.contains("signal_var") || g.contains("noise_var")) {
          GpHyperparameters hp;
          hp.length_scale = g.value("length_scale", hp.length_scale);
          hp.signal_var = g.value("signal_var", hp.signal_var);
          hp.noise_var = g.value("noise_var", hp.noise_var);
          c.gp.fixed = hp;
        }
      }
      if (k.contains("language_split_base"))
        c.language_split_base = model_kind_from_string(k.at("language_split_base").get<std::string>());
      if (c.language_split_base == ModelKind::LanguageSplit)
        throw std::invalid_argument("language_split_base cannot itself be language_split");
    }
    if (j.contains("evaluation")) {
      const auto& k = j.at("evaluation");
      c.cv_folds = k.value("k", c.cv_folds);
      c.seed = k.value("seed", c.seed);
      c.top_k = k.value("top_k", c.top_k);
      if (c.cv_folds < 2) throw std::invalid_argument("evaluation.k must be at least 2");
    }
    if (j.contains("synth")) c.synth = SynthSpec::from_json(j.at("synth"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::invalid_argument(e.what());
  }
  PipelineConfig c = from_json(j);
  c.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return c;
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
}

std::string PipelineConfig::hash() const { return sha256_hex(to_json().dump()); }

Trainer make_trainer(ModelKind kind, const PipelineConfig& config) {
  const SvrOptions svr = config.svr;
  const GpSettings gp = config.gp;
  switch (kind) {
    case ModelKind::Constant:
      return [](const Eigen::MatrixXd&, std::span<const double> y, std::span<const std::string>) {
        return std::unique_ptr<RegressionModel>(train_constant(y));
      };
    case ModelKind::SvrLinear:
      return [svr](const Eigen::MatrixXd& X, std::span<const double> y, std::span<const std::string>) {
        return std::unique_ptr<RegressionModel>(train_svr_linear(X, y, svr));
      };
    case ModelKind::GpRbf:
      return [gp](const Eigen::MatrixXd& X, std::span<const double> y, std::span<const std::string>) {
        GpHyperparameters hp;
        if (gp.grid_search) {
          hp = select_gp_hyperparameters(X, y);
        } else {
          hp = gp.fixed ? *gp.fixed : default_gp_hyperparameters(y);
        }
        return std::unique_ptr<RegressionModel>(train_gp(X, y, hp));
      };
    case ModelKind::LanguageSplit: {
      Trainer base = make_trainer(config.language_split_base, config);
      return [base](const Eigen::MatrixXd& X, std::span<const double> y, std::span<const std::string> langs) {
        return std::unique_ptr<RegressionModel>(language_split_fit(X, y, langs, base));
      };
    }
  }
  throw std::invalid_argument("unknown model kind");
}

FeatureSetOptions feature_set_options(const std::string& name, bool bow, const PipelineConfig& config) {
  FeatureSetOptions o;
  o.include_bio = name == "tweet_plus_bio";
  o.bow = bow;
  o.bow_min_df = config.bow_min_df;
  o.bow_max_vocab = config.bow_max_vocab;
  return o;
}

ModelingDataset load_modeling_dataset(const fs::path& run_dir) {
  ModelingDataset d;
  {
    std::ifstream in(run_dir / "features/lexical.csv");
    if (!in) throw MissingStageError("features", "features outputs missing; run `features` first");
    d.lexical = parse_feature_matrix_csv(in);
  }
  d.users = d.lexical.users;
  std::map<std::string, std::pair<std::string, double>> targets;
  {
    std::ifstream in(run_dir / "features/targets.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = csv::split_line(line);
      if (f.size() != 3) throw DataError("features/targets.csv: malformed row");
      targets[f[0]] = {f[1], std::stod(f[2])};
    }
  }
  std::map<std::string, std::pair<TokenCounts, TokenCounts>> tokens;
  for_each_jsonl(run_dir / "features/tokens.jsonl", [&](const json& j) {
    auto& slot = tokens[j.at("user_id").get<std::string>()];
    for (const auto& [tok, n] : j.at("tweet").items()) slot.first[tok] = n.get<std::int64_t>();
    for (const auto& [tok, n] : j.at("bio").items()) slot.second[tok] = n.get<std::int64_t>();
  });
  for (const auto& uid : d.users) {
    if (!targets.count(uid) || !tokens.count(uid)) throw DataError("features: user " + uid + " is incomplete");
    d.langs.push_back(targets.at(uid).first);
    d.y.push_back(targets.at(uid).second);
    d.tweet_tokens.push_back(tokens.at(uid).first);
    d.bio_tokens.push_back(tokens.at(uid).second);
  }
  return d;
}

StageResult run_stage(Stage stage, const PipelineConfig& config, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  switch (stage) {
    case Stage::Synth: return stage_synth(config, run_dir);
    case Stage::Ingest: return stage_ingest(config, run_dir);
    case Stage::Clean: return stage_clean(config, run_dir);
    case Stage::Cohort: return stage_cohort(config, run_dir);
    case Stage::Features: return stage_features(config, run_dir);
    case Stage::Train: return stage_train(config, run_dir);
    case Stage::Evaluate: return stage_evaluate(config, run_dir);
    case Stage::Trends: return stage_trends(config, run_dir);
    case Stage::Report: return stage_report(config, run_dir);
  }
  throw std::invalid_argument("unknown stage");
}

}  // namespace qsfusion
