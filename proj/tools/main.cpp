#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "casdet/config.hpp"
#include "casdet/error.hpp"
#include "commands.hpp"

namespace {

int exit_code_for(const casdet::Error& e) {
  switch (e.code()) {
    case casdet::ErrorCode::kInvalidConfig:
      return 1;
    case casdet::ErrorCode::kNumericalError:
      return 3;
    default:
      return 2;  // data errors
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casdet: cascaded component-spoofing detection pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "pipeline config (JSON)")->required();
  long long seed_override = -1;
  app.add_option("--seed", seed_override, "override config seed");
  std::string out_override;
  app.add_option("--out", out_override, "override output directory");

  CLI::App* prep = app.add_subcommand("prep", "condition WAV files into mel/waveform stacks");
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic embedding dataset");

  CLI::App* train = app.add_subcommand("train", "train one system head");
  std::string system;
  train->add_option("--system", system, "A, B1 or B2")->required();

  CLI::App* infer = app.add_subcommand("infer", "run inference over the selected split");
  std::string mode_override;
  infer->add_option("--mode", mode_override, "cascade, b1, b2, b1b2, a+b1 or a+b2");

  CLI::App* eval = app.add_subcommand("eval", "score a prediction file against labels");
  std::string pred_override, manifest_override, name_override;
  eval->add_option("--pred", pred_override, "prediction file override");
  eval->add_option("--manifest", manifest_override, "label manifest override");
  eval->add_option("--name", name_override, "system name for the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints usage/help
    return code == 0 ? 0 : 1;
  }

  try {
    casdet::PipelineConfig cfg = casdet::load_config(config_path);
    if (seed_override >= 0) {
      cfg.seed = static_cast<uint64_t>(seed_override);
      cfg.train.seed = cfg.seed;
      cfg.profile_b1.seed = cfg.seed;
      cfg.profile_b2.seed = cfg.seed;
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (!pred_override.empty()) cfg.eval_predictions = pred_override;
    if (!manifest_override.empty()) cfg.eval_manifest = manifest_override;
    if (!name_override.empty()) cfg.eval_system_name = name_override;

    if (prep->parsed()) return casdet::cli::cmd_prep(cfg);
    if (synth->parsed()) return casdet::cli::cmd_synth(cfg);
    if (train->parsed()) return casdet::cli::cmd_train(cfg, system);
    if (infer->parsed()) {
      return casdet::cli::cmd_infer(cfg, mode_override.empty() ? cfg.infer_mode : mode_override);
    }
    if (eval->parsed()) return casdet::cli::cmd_eval(cfg);
  } catch (const casdet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
