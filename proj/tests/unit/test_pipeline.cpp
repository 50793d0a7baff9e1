#include <doctest.h>

#include <fstream>
#include <sstream>

#include "qsfusion/errors.hpp"
#include "qsfusion/hashing.hpp"
#include "qsfusion/pipeline.hpp"
#include "scratch_dir.hpp"

using namespace qsfusion;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

PipelineConfig tiny_config() {
  PipelineConfig c;
  c.synth.n_users = 40;
  c.synth.seed = 5;
  c.cv_folds = 4;
  c.feature_sets = {"tweet_only"};
  c.rows = {{"Constant Baseline", ModelKind::Constant, false}, {"SVM (Linear Kernel)", ModelKind::SvrLinear, false}};
  c.gp.grid_search = false;
  return c;
}

const Stage kAll[] = {Stage::Synth, Stage::Ingest,   Stage::Clean,  Stage::Cohort, Stage::Features,
                      Stage::Train, Stage::Evaluate, Stage::Trends, Stage::Report};

}  // namespace

TEST_CASE("stage names") {
  for (Stage s : kAll) CHECK(stage_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(stage_from_string("deploy"), std::invalid_argument);
}

TEST_CASE("missing upstream stages are reported by name") {
  ScratchDir dir("pipe-missing");
  const auto c = tiny_config();
  try {
    run_stage(Stage::Evaluate, c, dir.path());
    FAIL("expected MissingStageError");
  } catch (const MissingStageError& e) {
    CHECK(e.stage() == "train");
  }
  for (Stage s : {Stage::Synth, Stage::Ingest, Stage::Clean, Stage::Cohort, Stage::Features}) run_stage(s, c, dir.path());
  try {
    run_stage(Stage::Evaluate, c, dir.path());
    FAIL("expected MissingStageError");
  } catch (const MissingStageError& e) {
    CHECK(e.stage() == "train");
    CHECK(std::string(e.what()).find("train outputs missing") != std::string::npos);
  }
  // the report never throws; gaps carry a nonzero exit code
  const auto rep = run_stage(Stage::Report, c, dir.path());
  CHECK(rep.exit_code == 3);
  CHECK(slurp(dir.path() / "report" / "report.txt").find("run `train` first") != std::string::npos);

  ScratchDir empty("pipe-empty");
  CHECK_THROWS_AS(run_stage(Stage::Ingest, c, empty.path()), MissingStageError);
}

TEST_CASE("end-to-end run is reproducible") {
  ScratchDir a("pipe-a"), b("pipe-b");
  const auto c = tiny_config();
  for (Stage s : kAll) {
    const auto ra = run_stage(s, c, a.path());
    const auto rb = run_stage(s, c, b.path());
    CHECK(ra.exit_code == 0);
    CHECK(ra.outputs == rb.outputs);
    for (const auto& out : ra.outputs) {
      INFO(out);
      CHECK(sha256_hex(slurp(a.path() / out)) == sha256_hex(slurp(b.path() / out)));
    }
  }
  const auto manifest = nlohmann::json::parse(slurp(a.path() / "manifest.json"));
  CHECK(manifest["stages"].contains("evaluate"));
  CHECK(manifest["stages"]["train"]["config_hash"] == c.hash());
  CHECK(slurp(a.path() / "manifest.json") == slurp(b.path() / "manifest.json"));

  // grid rows and feature sets follow the configuration
  const auto metrics = nlohmann::json::parse(slurp(a.path() / "evaluate" / "metrics.json"));
  std::vector<std::string> models;
  for (const auto& r : metrics["reports"]) {
    models.push_back(r["model"]);
    CHECK(r["feature_set"] == "tweet_only");
  }
  CHECK(models == std::vector<std::string>{"Constant Baseline", "SVM (Linear Kernel)"});

  // a rerun of one stage in place leaves its outputs byte-identical
  const auto before = slurp(a.path() / "evaluate" / "predictions.csv");
  run_stage(Stage::Evaluate, c, a.path());
  CHECK(slurp(a.path() / "evaluate" / "predictions.csv") == before);

  auto other = c;
  other.set_seed(6);
  CHECK(other.hash() != c.hash());
}

TEST_CASE("config json") {
  PipelineConfig c = tiny_config();
  c.svr.C = 2.5;
  c.lexicons = {{"LIWC", "lex/liwc.dic", 64}};
  const auto back = PipelineConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());

  const auto partial = PipelineConfig::from_json({{"evaluation", {{"k", 5}}}});
  CHECK(partial.cv_folds == 5u);
  CHECK(partial.rows.size() == PipelineConfig::default_rows().size());

  CHECK_THROWS_AS(PipelineConfig::from_json({{"features", {{"feature_sets", {"bio_only"}}}}}), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"cohort", {{"min_friends", -1}}}}), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"models", {{"rows", {{{"label", "x"}, {"kind", "forest"}}}}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"weighin", {{"grammar", {{{"name", "r"}, {"pattern", "(("}}}}}}}),
                  std::invalid_argument);

  ScratchDir dir("pipe-cfg");
  std::ofstream(dir.path() / "c.json") << c.to_json().dump();
  const auto loaded = PipelineConfig::load(dir.path() / "c.json");
  CHECK(loaded.base_dir == dir.path());
  CHECK(loaded.hash() == c.hash());
}
