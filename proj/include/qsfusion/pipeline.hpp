#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsfusion/cohort.hpp"
#include "qsfusion/ingest.hpp"
#include "qsfusion/models.hpp"
#include "qsfusion/synth.hpp"
#include "qsfusion/weighin.hpp"

namespace qsfusion {

enum class Stage { Ingest, Clean, Cohort, Features, Train, Evaluate, Trends, Synth, Report };

std::string_view to_string(Stage s);
// Throws std::invalid_argument on an unknown name.
Stage stage_from_string(std::string_view name);

struct LexiconSpec {
  std::string name;  // feature-name infix, e.g. "LIWC"
  std::string path;
  std::optional<std::size_t> expected_categories;
};

// One row of the metrics grid.
struct ModelRow {
  std::string label;
  ModelKind kind = ModelKind::Constant;
  bool bow = false;
};

struct GpSettings {
  bool grid_search = true;
  std::optional<GpHyperparameters> fixed;  // used when grid_search is off; defaults otherwise
};

struct PipelineConfig {
  // Inputs. Relative paths resolve against base_dir. Empty corpus/lexicons mean "use synth outputs".
  std::vector<std::string> corpus;
  std::string corpus_schema = "tweet_v1";
  std::vector<std::string> user_files;
  bool keyword_prefilter = false;
  std::vector<SourcePattern> source_patterns = default_source_patterns();
  std::vector<LexiconSpec> lexicons;
  std::string trend_csv;

  CohortConfig cohort;
  ExclusionThresholds exclusions;
  bool count_unparseable_weighins = false;
  std::vector<ExtractionRule> grammar = WeighInGrammar::default_rules();

  std::int64_t bow_min_df = 2;
  std::size_t bow_max_vocab = 500;
  std::vector<std::string> feature_sets{"tweet_only", "tweet_plus_bio"};
  std::vector<ModelRow> rows = default_rows();
  SvrOptions svr;
  GpSettings gp;
  ModelKind language_split_base = ModelKind::SvrLinear;
  std::size_t cv_folds = 10;
  std::uint64_t seed = 42;
  std::size_t top_k = 15;

  SynthSpec synth;

  std::filesystem::path base_dir = ".";  // not serialized

  static std::vector<ModelRow> default_rows();

  nlohmann::json to_json() const;
  // Missing keys keep their defaults. Throws std::invalid_argument on bad values.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  // Overrides both the CV seed and the synth seed.
  void set_seed(std::uint64_t seed);
  std::string hash() const;
};

struct StageResult {
  int exit_code = 0;
  std::vector<std::string> outputs;  // run-relative paths
  std::vector<std::string> notes;
};

// Runs one stage in `run_dir`. Throws MissingStageError when an upstream output is
// absent, DataError on bad input data. The report stage never throws for missing
// sections; it returns a nonzero exit code and gap notes instead.
StageResult run_stage(Stage stage, const PipelineConfig& config, const std::filesystem::path& run_dir);

// Trainer used for a grid row, as configured.
Trainer make_trainer(ModelKind kind, const PipelineConfig& config);
FeatureSetOptions feature_set_options(const std::string& name, bool bow, const PipelineConfig& config);

// Loads features/ outputs back into memory.
ModelingDataset load_modeling_dataset(const std::filesystem::path& run_dir);

}  // namespace qsfusion
