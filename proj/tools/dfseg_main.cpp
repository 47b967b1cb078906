// SPDX-License-Identifier: Apache-2.0
//
// dfseg: data-free knowledge distillation for semantic segmentation on a
// synthetic shapes task. Subcommands: gen-data, train, eval, ablate, report.
#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Data-free knowledge distillation for semantic segmentation "
      "(synthetic ShapesSeg task)"};
  app.require_subcommand(1);

  dfseg::cli::CommonArgs args;
  uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "JSON run configuration");
    cmd->add_option("--out", args.out_dir, "Output directory (overrides config)");
    cmd->add_option("--seed", seed_value, "Global seed (overrides config)")
        ->each([&](const std::string&) { args.seed = seed_value; });
  };

  auto* gen = app.add_subcommand("gen-data", "Generate and dump the datasets");
  add_common(gen);

  std::string stage;
  auto* train = app.add_subcommand("train", "Run a training stage");
  add_common(train);
  train->add_option("--stage", stage, "teacher | gan | degan | distill")
      ->required();

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a segmenter checkpoint");
  add_common(eval);
  eval->add_option("checkpoint", checkpoint, "Checkpoint directory (optional)");

  std::optional<int> jobs;
  int jobs_value = 0;
  auto* ablate = app.add_subcommand("ablate", "Run the ablation grid");
  add_common(ablate);
  ablate->add_option("--jobs", jobs_value, "Concurrent cell workers")
      ->each([&](const std::string&) { jobs = jobs_value; });

  auto* report = app.add_subcommand("report",
                                    "Generated-image class distribution report");
  add_common(report);

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return dfseg::cli::cmd_gen_data(args);
  if (train->parsed()) return dfseg::cli::cmd_train(args, stage);
  if (eval->parsed()) return dfseg::cli::cmd_eval(args, checkpoint);
  if (ablate->parsed()) return dfseg::cli::cmd_ablate(args, jobs);
  if (report->parsed()) return dfseg::cli::cmd_report(args);
  return 1;
}
