// subpop-mix: config-driven runner for reweighted-mixup experiments.
//
//   subpop-mix <gen-data|weights|train|eval|theory|compare>
//              --config <path> [--seed-override N] [--out DIR] [--dry-run]
//
// Exit codes: 0 ok, 2 invalid config, 3 runtime failure.

#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "subpop/config.hpp"
#include "subpop/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"reweighted mixup for subpopulation shift"};
  app.require_subcommand(1);

  subpop::runner::RunOptions opt;
  std::function<int(const subpop::runner::RunOptions&)> selected;

  const struct {
    const char* name;
    const char* help;
    int (*fn)(const subpop::runner::RunOptions&);
  } commands[] = {
      {"gen-data", "generate train/val/test CSVs", subpop::runner::cmd_gen_data},
      {"weights", "compute sample weights (group-aware or trajectory uncertainty)",
       subpop::runner::cmd_weights},
      {"train", "train one method and evaluate the selected checkpoint",
       subpop::runner::cmd_train},
      {"eval", "evaluate a saved model on the test split", subpop::runner::cmd_eval},
      {"theory", "second-order and bound diagnostics for the binary GLM",
       subpop::runner::cmd_theory},
      {"compare", "run every configured method over every seed and tabulate",
       subpop::runner::cmd_compare},
  };

  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", opt.config_path, "JSON config file")->required();
    sub->add_option("--seed-override", opt.seed_override, "replace the config's seed");
    sub->add_option("--out", opt.out_dir,
                    "output directory (beats SUBPOP_MIX_OUT and the config's output_dir)");
    sub->add_flag("--dry-run", opt.dry_run, "validate the config and exit");
    sub->callback([&selected, fn = cmd.fn] { selected = fn; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return selected(opt);
  } catch (const subpop::config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
