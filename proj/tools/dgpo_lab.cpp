// dgpo_lab: pretrain, post-train, evaluate, ablate and plot on the toy task.

#include <iostream>

#include "CLI11.hpp"
#include "dgpo/harness.hpp"

int main(int argc, char** argv) {
  using dgpo::cli::Subcommand;

  CLI::App app{"Group preference post-training of a toy flow model"};
  app.require_subcommand(1);

  dgpo::cli::RunSpec spec;
  std::string config;
  std::string out = "runs";
  std::uint64_t seed = 0;

  const std::pair<Subcommand, const char*> commands[] = {
      {Subcommand::pretrain, "Denoising pretraining of the base model"},
      {Subcommand::posttrain, "Preference post-training from a base checkpoint"},
      {Subcommand::eval, "Score a checkpoint: mean reward and sliced-W2"},
      {Subcommand::ablate, "Run the variant grid and compare final metrics"},
      {Subcommand::plot, "Render a sample dump as a scatter SVG"},
  };
  std::vector<std::pair<CLI::App*, Subcommand>> subs;
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(dgpo::cli::to_string(cmd), help);
    sub->add_option("--config", config, "Config file (sectioned key = value)")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Seed override (unsigned 64-bit)");
    sub->add_flag("--quiet", spec.quiet, "Suppress progress output");
    subs.emplace_back(sub, cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dgpo::cli::kExitConfig;
  }

  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    spec.command = cmd;
    spec.config = config;
    spec.out = out;
    if (sub->count("--seed") > 0) spec.seed = seed;
  }
  return dgpo::cli::run_command(spec, std::cout);
}
