// qsfusion command-line driver: one subcommand per pipeline stage.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qsfusion/errors.hpp"
#include "qsfusion/pipeline.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitMissing = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qsfusion: weigh-in cleaning, cohort selection, weight prediction and trend analysis"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;

  for (const char* name : {"ingest", "clean", "cohort", "features", "train", "evaluate", "trends", "synth", "report"}) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
    sub->add_option("--config", config_path, "pipeline config (JSON); defaults apply when omitted")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "run directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the RNG seed (cross-validation and synth)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const std::string stage_name = app.get_subcommands().front()->get_name();
  try {
    qsfusion::PipelineConfig config;
    if (!config_path.empty()) config = qsfusion::PipelineConfig::load(config_path);
    if (seed) config.set_seed(*seed);
    const auto result = qsfusion::run_stage(qsfusion::stage_from_string(stage_name), config, out_dir);
    for (const auto& note : result.notes) std::cerr << stage_name << ": " << note << '\n';
    for (const auto& out : result.outputs) std::cout << out << '\n';
    return result.exit_code;
  } catch (const qsfusion::MissingStageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissing;
  } catch (const qsfusion::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
