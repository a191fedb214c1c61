#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "subpop/config.hpp"
#include "subpop/data.hpp"
#include "subpop/evalreport.hpp"
#include "subpop/models.hpp"
#include "subpop/training.hpp"

namespace subpop::runner {

// Command-line switches shared by every subcommand. --out beats the
// SUBPOP_MIX_OUT environment variable, which beats the config's output_dir.
struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_dir;
  bool dry_run = false;
};

// Loads the config file and applies the seed override (echoed configs carry
// the effective seed).
config::ExperimentConfig load_run_config(const RunOptions& opt);
std::string resolve_out_dir(const config::ExperimentConfig& cfg, const RunOptions& opt);

struct DatasetBundle {
  data::LabeledDataset train;
  data::LabeledDataset val;
  data::LabeledDataset test;
  std::vector<std::string> warnings;
};

// Generates (or loads + splits) the train/val/test sets. All randomness is
// derived from `seed`, so the same seed always yields the same bytes.
DatasetBundle build_datasets(const config::ExperimentConfig& cfg, std::uint64_t seed);

// Fresh model per the config: zero-initialized GLM over d+1 inputs (bias
// column appended by the caller) or Xavier-initialized MLP.
models::Model make_model(const config::ModelConfig& cfg, std::size_t d, int class_count,
                         std::uint64_t seed);

// One trained-and-selected run: metrics of the checkpoint chosen on the
// validation set, evaluated on the test set.
struct RunResult {
  training::TrainResult train;
  std::size_t best_epoch = 0;  // 1-based
  evalreport::Metrics test;
};

// Per-seed byproducts of the comparison protocol that the table doesn't show.
struct SeedArtifacts {
  std::uint64_t seed = 0;
  std::vector<int> train_groups;
  std::vector<double> uncertainty;                  // empty unless rmix_uncertainty ran
  evalreport::KdeResult kde;                        // empty grid likewise
  std::vector<training::EpochRecord> erm_records;   // empty unless erm ran
};

struct CompareOutcome {
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<evalreport::Metrics>> metrics;  // [method][seed]
  std::vector<SeedArtifacts> per_seed;
  std::string table_markdown;
};

// Full comparison protocol: per seed, regenerate the data, derive weights
// (including the two-phase uncertainty pipeline), train every method from a
// shared initialization, select on val, evaluate on test. Method x seed runs
// fan out over worker threads; each writes only its own subdirectory and the
// outputs do not depend on scheduling.
CompareOutcome run_compare(const config::ExperimentConfig& cfg, const std::string& out_dir);

// Subcommand entry points. Return 0 on success; throw ConfigError (exit 2)
// or std::runtime_error (exit 3) otherwise.
int cmd_gen_data(const RunOptions& opt);
int cmd_weights(const RunOptions& opt);
int cmd_train(const RunOptions& opt);
int cmd_eval(const RunOptions& opt);
int cmd_theory(const RunOptions& opt);
int cmd_compare(const RunOptions& opt);

}  // namespace subpop::runner
