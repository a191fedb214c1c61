#include "subpop/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include "subpop/rng.hpp"
#include "subpop/theory.hpp"
#include "subpop/weighting.hpp"

namespace subpop::runner {

namespace {

// Derived sub-seeds, one fixed purpose id per consumer, so adding a consumer
// never shifts anybody else's stream.
constexpr std::uint64_t kSeedTrainGen = 1;
constexpr std::uint64_t kSeedValGen = 2;
constexpr std::uint64_t kSeedTestGen = 3;
constexpr std::uint64_t kSeedSplit = 4;
constexpr std::uint64_t kSeedModelInit = 20;
constexpr std::uint64_t kSeedTrainLoop = 21;
constexpr std::uint64_t kSeedStageInit = 30;
constexpr std::uint64_t kSeedStageLoop = 31;
constexpr std::uint64_t kSeedTheta = 40;
constexpr std::uint64_t kSeedMask = 41;
constexpr std::uint64_t kSeedRho = 42;
constexpr std::uint64_t kSeedResidualBase = 43;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t purpose) {
  return rng::mix64(seed + 0x9E3779B97F4A7C15ULL * (purpose + 1));
}

parallel::ExecMode exec_mode() {
#ifdef _OPENMP
  return parallel::ExecMode::openmp;
#else
  return parallel::ExecMode::serial;
#endif
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

// Every command copies the effective config next to its outputs.
void echo_config(const config::ExperimentConfig& cfg, const std::string& dir) {
  std::ofstream out(dir + "/config.json");
  if (!out) throw std::runtime_error("cannot open " + dir + "/config.json");
  out << cfg.raw.dump(2) << '\n';
}

void write_records(const std::string& path, const std::vector<training::EpochRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const training::EpochRecord& r : records) {
    nlohmann::json j{{"epoch", r.epoch},
                     {"train_loss", r.train_loss},
                     {"group_train_acc", r.group_train_acc}};
    if (r.val) j["val"] = evalreport::metrics_to_json(*r.val);
    out << j.dump() << '\n';
  }
}

// Index of the checkpoint to keep: best validation metrics when they exist,
// otherwise the final epoch.
std::size_t pick_best(const std::vector<training::EpochRecord>& records,
                      evalreport::SelectionCriterion criterion) {
  std::vector<evalreport::Metrics> val;
  val.reserve(records.size());
  for (const training::EpochRecord& r : records) {
    if (!r.val) break;
    val.push_back(*r.val);
  }
  if (val.size() == records.size() && !val.empty())
    return evalreport::select_model(val, criterion);
  return records.empty() ? 0 : records.size() - 1;
}

bool is_glm(const config::ExperimentConfig& cfg) {
  return cfg.model.type == config::ModelConfig::Type::glm;
}

void augment_bundle(DatasetBundle& b) {
  b.train = models::augment_with_bias(b.train);
  if (b.val.n > 0) b.val = models::augment_with_bias(b.val);
  if (b.test.n > 0) b.test = models::augment_with_bias(b.test);
}

// Weights for train/theory runs. Uniform mode returns the empty vector that
// the trainers treat as all-ones. The uncertainty pipeline is two-phase:
// these commands never run the ERM stage themselves, they load the file the
// weights command wrote.
std::vector<double> resolve_weights(const config::ExperimentConfig& cfg,
                                    const data::LabeledDataset& train) {
  using Mode = config::WeightsSection::Mode;
  switch (cfg.weights.mode) {
    case Mode::uniform:
      return {};
    case Mode::group_aware:
      return weighting::group_aware_weights(train, cfg.weights.capacity_c,
                                            cfg.weights.normalization);
    case Mode::uncertainty:
      if (cfg.weights.path.empty())
        throw config::ConfigError(
            "invalid config:\n  - weights.path: uncertainty weights are computed by the weights "
            "command; run it first and point weights.path at its weights.csv");
      [[fallthrough]];
    case Mode::csv: {
      const weighting::WeightsTable table = weighting::load_weights_csv(cfg.weights.path);
      if (table.w.size() != train.n)
        throw std::runtime_error("weights file " + cfg.weights.path + " has " +
                                 std::to_string(table.w.size()) + " rows but the training set has " +
                                 std::to_string(train.n));
      return table.w;
    }
  }
  return {};
}

training::TrainConfig base_train_config(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  training::TrainConfig tc;
  tc.epochs = cfg.train.epochs;
  tc.batch_size = cfg.train.batch_size;
  tc.sgd.lr = cfg.train.lr;
  tc.sgd.momentum = cfg.train.momentum;
  tc.mix = cfg.mix;
  tc.partner = training::PartnerRule::uniform;
  tc.no_mix_uses_self = cfg.train.no_mix_uses_self;
  tc.seed = sub_seed(seed, kSeedTrainLoop);
  return tc;
}

RunResult select_and_test(training::TrainResult trained, const DatasetBundle& data,
                          evalreport::SelectionCriterion criterion) {
  RunResult out;
  const std::size_t best = pick_best(trained.records, criterion);
  out.best_epoch = best + 1;
  const models::Model& model =
      trained.checkpoints.empty() ? trained.model : trained.checkpoints[best];
  out.test = evalreport::evaluate(data.test, models::predict_all(model, data.test));
  out.train = std::move(trained);
  return out;
}

void write_run_artifacts(const std::string& dir, const RunResult& r) {
  ensure_dir(dir);
  const std::size_t best = r.best_epoch == 0 ? 0 : r.best_epoch - 1;
  const models::Model& best_model =
      r.train.checkpoints.empty() ? r.train.model : r.train.checkpoints[best];
  models::save_model(best_model, dir + "/model_best.json");
  models::save_model(r.train.model, dir + "/model_final.json");
  write_records(dir + "/records.jsonl", r.train.records);
  evalreport::emit_report(dir, r.test, nullptr, nullptr);
}

// Per-seed shared state of the comparison protocol.
struct SeedContext {
  DatasetBundle data;
  std::vector<double> w_group;
  std::vector<double> w_uncertainty;
  SeedArtifacts art;
};

struct UncertaintyStage {
  weighting::TrajectoryLog trajectory;
  std::vector<double> u;
  std::vector<double> w;
  evalreport::KdeResult kde;
};

// Phase one of the two-phase pipeline: plain ERM, record trajectories, turn
// the window mean into u and then into weights.
UncertaintyStage run_uncertainty_stage(const config::ExperimentConfig& cfg,
                                       const data::LabeledDataset& train, std::uint64_t seed) {
  const auto& unc = cfg.weights.uncertainty;
  training::TrainConfig tc;
  tc.epochs = unc.erm_epochs;
  tc.batch_size = cfg.train.batch_size;
  tc.sgd.lr = cfg.train.lr;
  tc.sgd.momentum = cfg.train.momentum;
  tc.seed = sub_seed(seed, kSeedStageLoop);
  models::Model init =
      make_model(cfg.model, train.d, train.class_count, sub_seed(seed, kSeedStageInit));
  training::TrajectoryResult stage =
      training::train_erm_with_trajectory(train, nullptr, tc, std::move(init));

  UncertaintyStage out;
  out.u = weighting::uncertainty_from_trajectory(stage.trajectory, unc.t_start, unc.t_window);
  out.w = weighting::weights_from_uncertainty(out.u, unc.eta, unc.c, cfg.weights.normalization);
  out.trajectory = std::move(stage.trajectory);
  if (!train.groups.empty())
    out.kde = evalreport::kde_uncertainty(out.u, train.groups, train.group_count, 401, exec_mode());
  return out;
}

training::TrainResult train_method(const std::string& name, const config::ExperimentConfig& cfg,
                                   const SeedContext& ctx, std::uint64_t seed) {
  const training::TrainConfig tc = base_train_config(cfg, seed);
  models::Model init = make_model(cfg.model, ctx.data.train.d, ctx.data.train.class_count,
                                  sub_seed(seed, kSeedModelInit));
  const data::LabeledDataset* val = ctx.data.val.n > 0 ? &ctx.data.val : nullptr;
  using training::BaselineKind;
  if (name == "erm")
    return training::train_baseline(BaselineKind::erm, ctx.data.train, val, {}, tc, std::move(init));
  if (name == "iw")
    return training::train_baseline(BaselineKind::iw, ctx.data.train, val, ctx.w_group, tc,
                                    std::move(init));
  if (name == "mixup")
    return training::train_baseline(BaselineKind::mixup, ctx.data.train, val, {}, tc,
                                    std::move(init));
  if (name == "igmix")
    return training::train_baseline(BaselineKind::igmix, ctx.data.train, val, {}, tc,
                                    std::move(init));
  if (name == "rmix_group_aware")
    return training::train_rmix(ctx.data.train, val, ctx.w_group, tc, std::move(init));
  if (name == "rmix_uncertainty")
    return training::train_rmix(ctx.data.train, val, ctx.w_uncertainty, tc, std::move(init));
  throw std::runtime_error("unknown method " + name);
}

// Runs tasks on a small worker pool. Failures are rethrown in task order so
// error reporting does not depend on scheduling.
void run_tasks(std::vector<std::function<void()>>& tasks) {
  if (tasks.empty()) return;
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
        try {
          tasks[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Stat {
  double mean = 0.0;
  double sd = 0.0;
};

Stat mean_std(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string pct(const Stat& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", 100.0 * s.mean, 100.0 * s.sd);
  return std::string(buf);
}

std::string format_beta_label(double alpha, double beta) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "Beta(%g,%g)", alpha, beta);
  return std::string(buf);
}

std::string policy_label(const mixing::MixPolicy& p) {
  char buf[128];
  if (p.mode == mixing::MixMode::cutmask && p.grid)
    std::snprintf(buf, sizeof(buf), "cutmask %zux%zu Beta(%g,%g) sigma=%g", p.grid->first,
                  p.grid->second, p.alpha, p.beta, p.sigma);
  else if (p.mode == mixing::MixMode::cutmask)
    std::snprintf(buf, sizeof(buf), "cutmask Beta(%g,%g) sigma=%g", p.alpha, p.beta, p.sigma);
  else
    std::snprintf(buf, sizeof(buf), "vanilla Beta(%g,%g) sigma=%g", p.alpha, p.beta, p.sigma);
  return std::string(buf);
}

}  // namespace

config::ExperimentConfig load_run_config(const RunOptions& opt) {
  config::ExperimentConfig cfg = config::load_config_file(opt.config_path);
  if (opt.seed_override) {
    cfg.seed = *opt.seed_override;
    cfg.raw["seed"] = *opt.seed_override;
  }
  return cfg;
}

std::string resolve_out_dir(const config::ExperimentConfig& cfg, const RunOptions& opt) {
  if (opt.out_dir) return *opt.out_dir;
  if (const char* env = std::getenv("SUBPOP_MIX_OUT"); env && *env) return env;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return "out";
}

DatasetBundle build_datasets(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  using Generator = config::DatasetConfig::Generator;
  const config::DatasetConfig& ds = cfg.dataset;
  DatasetBundle out;

  auto generate = [&](const std::array<std::size_t, 4>& sizes, std::uint64_t s) {
    if (ds.generator == Generator::four_moons)
      return data::gen_four_moons(sizes, ds.noise_std, s);
    return data::gen_spurious_gaussian(sizes, ds.core_dim, ds.spurious_dim,
                                       ds.correlation_strength, s);
  };

  if (ds.generator == Generator::csv) {
    data::LabeledDataset full = data::load_csv(ds.path);
    data::SplitSpec spec = ds.split;
    spec.seed = sub_seed(seed, kSeedSplit);
    data::SplitResult split = data::stratified_split(full, spec);
    out.train = std::move(split.train);
    out.val = std::move(split.val);
    out.test = std::move(split.test);
    out.warnings = std::move(split.warnings);
    return out;
  }

  if (ds.val_group_sizes && ds.test_group_sizes) {
    out.train = generate(ds.group_sizes, sub_seed(seed, kSeedTrainGen));
    out.val = generate(*ds.val_group_sizes, sub_seed(seed, kSeedValGen));
    out.test = generate(*ds.test_group_sizes, sub_seed(seed, kSeedTestGen));
    return out;
  }

  data::LabeledDataset full = generate(ds.group_sizes, sub_seed(seed, kSeedTrainGen));
  data::SplitSpec spec = ds.split;
  spec.seed = sub_seed(seed, kSeedSplit);
  data::SplitResult split = data::stratified_split(full, spec);
  out.train = std::move(split.train);
  out.val = std::move(split.val);
  out.test = std::move(split.test);
  out.warnings = std::move(split.warnings);
  return out;
}

models::Model make_model(const config::ModelConfig& cfg, std::size_t d, int class_count,
                         std::uint64_t seed) {
  if (cfg.type == config::ModelConfig::Type::glm) {
    if (class_count != 2)
      throw config::ConfigError("invalid config:\n  - model.type: glm needs 2 classes, dataset has " +
                                std::to_string(class_count));
    return models::GlmModel{std::vector<double>(d, 0.0)};
  }
  std::vector<std::size_t> layers;
  layers.push_back(d);
  layers.insert(layers.end(), cfg.hidden.begin(), cfg.hidden.end());
  layers.push_back(static_cast<std::size_t>(class_count));
  return models::MlpModel::init(layers, seed);
}

CompareOutcome run_compare(const config::ExperimentConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  const std::vector<std::string>& methods = cfg.compare.methods;
  const std::vector<std::uint64_t>& seeds = cfg.compare.seeds;
  auto wants = [&](const char* name) {
    return std::find(methods.begin(), methods.end(), name) != methods.end();
  };
  const bool want_uncertainty = wants("rmix_uncertainty");
  const bool want_group = wants("rmix_group_aware") || wants("iw");

  std::vector<SeedContext> ctx(seeds.size());

  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    tasks.push_back([&, i] {
      const std::uint64_t seed = seeds[i];
      SeedContext& c = ctx[i];
      c.art.seed = seed;
      c.data = build_datasets(cfg, seed);
      const std::string seed_dir = out_dir + "/seed_" + std::to_string(seed);
      ensure_dir(seed_dir);
      data::save_csv(c.data.train, seed_dir + "/train.csv");
      data::save_csv(c.data.val, seed_dir + "/val.csv");
      data::save_csv(c.data.test, seed_dir + "/test.csv");
      if (is_glm(cfg)) augment_bundle(c.data);
      c.art.train_groups = c.data.train.groups;
      if (want_group) {
        c.w_group = weighting::group_aware_weights(c.data.train, cfg.weights.capacity_c,
                                                   cfg.weights.normalization);
        weighting::save_weights_csv(seed_dir + "/weights_group_aware.csv", c.data.train.groups, {},
                                    c.w_group);
      }
      if (want_uncertainty) {
        UncertaintyStage stage = run_uncertainty_stage(cfg, c.data.train, seed);
        c.w_uncertainty = stage.w;
        c.art.uncertainty = stage.u;
        c.art.kde = stage.kde;
        weighting::save_trajectory(stage.trajectory, seed_dir + "/trajectory.csv",
                                   seed_dir + "/trajectory.json", cfg.weights.uncertainty.t_start,
                                   cfg.weights.uncertainty.t_window);
        weighting::save_weights_csv(seed_dir + "/weights_uncertainty.csv", c.data.train.groups,
                                    stage.u, stage.w);
        if (!stage.kde.grid.empty())
          evalreport::write_kde_csv(seed_dir + "/kde.csv", stage.kde);
      }
    });
  }
  run_tasks(tasks);

  CompareOutcome outcome;
  outcome.methods = methods;
  outcome.seeds = seeds;
  outcome.metrics.assign(methods.size(), std::vector<evalreport::Metrics>(seeds.size()));

  tasks.clear();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      tasks.push_back([&, m, i] {
        RunResult r = select_and_test(train_method(methods[m], cfg, ctx[i], seeds[i]),
                                      ctx[i].data, cfg.selection);
        write_run_artifacts(out_dir + "/" + methods[m] + "/seed_" + std::to_string(seeds[i]), r);
        outcome.metrics[m][i] = r.test;
        if (methods[m] == "erm") ctx[i].art.erm_records = std::move(r.train.records);
      });
    }
  }
  run_tasks(tasks);

  std::string md = "| method | average | worst-group | gap |\n|---|---|---|---|\n";
  std::string csv =
      "method,average_mean,average_std,worst_mean,worst_std,gap_mean,gap_std\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> avg, worst, gap;
    for (const evalreport::Metrics& metrics : outcome.metrics[m]) {
      avg.push_back(metrics.average);
      worst.push_back(metrics.worst);
      gap.push_back(metrics.gap);
    }
    const Stat sa = mean_std(avg), sw = mean_std(worst), sg = mean_std(gap);
    md += "| " + methods[m] + " | " + pct(sa) + " | " + pct(sw) + " | " + pct(sg) + " |\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  methods[m].c_str(), sa.mean, sa.sd, sw.mean, sw.sd, sg.mean, sg.sd);
    csv += line;
  }
  outcome.table_markdown = md;
  {
    std::ofstream out(out_dir + "/table.md");
    if (!out) throw std::runtime_error("cannot open " + out_dir + "/table.md");
    out << md;
  }
  {
    std::ofstream out(out_dir + "/table.csv");
    if (!out) throw std::runtime_error("cannot open " + out_dir + "/table.csv");
    out << csv;
  }

  outcome.per_seed.reserve(ctx.size());
  for (SeedContext& c : ctx) outcome.per_seed.push_back(std::move(c.art));
  return outcome;
}

int cmd_gen_data(const RunOptions& opt) {
  const config::ExperimentConfig cfg = load_run_config(opt);
  const std::string out = resolve_out_dir(cfg, opt);
  if (opt.dry_run) {
    std::cout << "config ok: " << opt.config_path << "\n";
    return 0;
  }
  ensure_dir(out);
  echo_config(cfg, out);
  const DatasetBundle bundle = build_datasets(cfg, cfg.seed);
  for (const std::string& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
  data::save_csv(bundle.train, out + "/train.csv");
  data::save_csv(bundle.val, out + "/val.csv");
  data::save_csv(bundle.test, out + "/test.csv");
  std::cout << "wrote " << out << "/{train,val,test}.csv  (n=" << bundle.train.n << "/"
            << bundle.val.n << "/" << bundle.test.n << ", d=" << bundle.train.d << ")\n";
  return 0;
}

int cmd_weights(const RunOptions& opt) {
  const config::ExperimentConfig cfg = load_run_config(opt);
  const std::string out = resolve_out_dir(cfg, opt);
  if (opt.dry_run) {
    std::cout << "config ok: " << opt.config_path << "\n";
    return 0;
  }
  using Mode = config::WeightsSection::Mode;
  if (cfg.weights.mode == Mode::csv)
    throw config::ConfigError(
        "invalid config:\n  - weights.mode: csv points at an existing file; nothing to compute");
  ensure_dir(out);
  echo_config(cfg, out);
  DatasetBundle bundle = build_datasets(cfg, cfg.seed);
  for (const std::string& w : bundle.warnings) std::cerr << "warning: " << w << "\n";

  std::vector<double> u;
  std::vector<double> w;
  if (cfg.weights.mode == Mode::uniform) {
    w.assign(bundle.train.n, 1.0);
  } else if (cfg.weights.mode == Mode::group_aware) {
    w = weighting::group_aware_weights(bundle.train, cfg.weights.capacity_c,
                                       cfg.weights.normalization);
  } else {
    if (is_glm(cfg)) augment_bundle(bundle);
    UncertaintyStage stage = run_uncertainty_stage(cfg, bundle.train, cfg.seed);
    u = stage.u;
    w = stage.w;
    weighting::save_trajectory(stage.trajectory, out + "/trajectory.csv", out + "/trajectory.json",
                               cfg.weights.uncertainty.t_start, cfg.weights.uncertainty.t_window);
    if (!stage.kde.grid.empty()) evalreport::write_kde_csv(out + "/kde.csv", stage.kde);
  }
  weighting::save_weights_csv(out + "/weights.csv", bundle.train.groups, u, w);
  std::cout << "wrote " << out << "/weights.csv  (n=" << w.size() << ")\n";
  return 0;
}

int cmd_train(const RunOptions& opt) {
  const config::ExperimentConfig cfg = load_run_config(opt);
  const std::string out = resolve_out_dir(cfg, opt);
  if (opt.dry_run) {
    std::cout << "config ok: " << opt.config_path << "\n";
    return 0;
  }
  ensure_dir(out);
  echo_config(cfg, out);
  DatasetBundle bundle = build_datasets(cfg, cfg.seed);
  for (const std::string& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
  if (is_glm(cfg)) augment_bundle(bundle);
  const std::vector<double> weights = resolve_weights(cfg, bundle.train);

  const training::TrainConfig tc = base_train_config(cfg, cfg.seed);
  models::Model init = make_model(cfg.model, bundle.train.d, bundle.train.class_count,
                                  sub_seed(cfg.seed, kSeedModelInit));
  const data::LabeledDataset* val = bundle.val.n > 0 ? &bundle.val : nullptr;

  using Method = config::TrainSection::Method;
  using training::BaselineKind;
  training::TrainResult trained = [&] {
    switch (cfg.train.method) {
      case Method::rmix:
        return training::train_rmix(bundle.train, val, weights, tc, std::move(init));
      case Method::erm:
        return training::train_baseline(BaselineKind::erm, bundle.train, val, {}, tc,
                                        std::move(init));
      case Method::iw:
        return training::train_baseline(BaselineKind::iw, bundle.train, val, weights, tc,
                                        std::move(init));
      case Method::mixup:
        return training::train_baseline(BaselineKind::mixup, bundle.train, val, {}, tc,
                                        std::move(init));
      case Method::igmix:
        return training::train_baseline(BaselineKind::igmix, bundle.train, val, {}, tc,
                                        std::move(init));
    }
    throw std::runtime_error("unreachable train method");
  }();

  const RunResult r = select_and_test(std::move(trained), bundle, cfg.selection);
  write_run_artifacts(out, r);
  char line[160];
  std::snprintf(line, sizeof(line),
                "best epoch %zu  test average %.1f%%  worst-group %.1f%%  gap %.1f%%\n",
                r.best_epoch, 100.0 * r.test.average, 100.0 * r.test.worst, 100.0 * r.test.gap);
  std::cout << line;
  return 0;
}

int cmd_eval(const RunOptions& opt) {
  const config::ExperimentConfig cfg = load_run_config(opt);
  const std::string out = resolve_out_dir(cfg, opt);
  if (cfg.eval.model_path.empty())
    throw config::ConfigError("invalid config:\n  - eval.model_path: required for the eval command");
  if (opt.dry_run) {
    std::cout << "config ok: " << opt.config_path << "\n";
    return 0;
  }
  ensure_dir(out);
  echo_config(cfg, out);
  const models::Model model = models::load_model(cfg.eval.model_path);
  DatasetBundle bundle = build_datasets(cfg, cfg.seed);
  for (const std::string& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
  data::LabeledDataset test = std::move(bundle.test);
  if (std::holds_alternative<models::GlmModel>(model) && models::input_dim(model) == test.d + 1)
    test = models::augment_with_bias(test);
  const evalreport::Metrics metrics = evalreport::evaluate(test, models::predict_all(model, test));
  evalreport::emit_report(out, metrics, nullptr, nullptr);
  char line[160];
  std::snprintf(line, sizeof(line), "test average %.1f%%  worst-group %.1f%%  gap %.1f%%\n",
                100.0 * metrics.average, 100.0 * metrics.worst, 100.0 * metrics.gap);
  std::cout << line;
  return 0;
}

int cmd_theory(const RunOptions& opt) {
  const config::ExperimentConfig cfg = load_run_config(opt);
  const std::string out = resolve_out_dir(cfg, opt);
  if (opt.dry_run) {
    std::cout << "config ok: " << opt.config_path << "\n";
    return 0;
  }
  ensure_dir(out);
  echo_config(cfg, out);
  DatasetBundle bundle = build_datasets(cfg, cfg.seed);
  for (const std::string& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
  data::LabeledDataset train = std::move(bundle.train);
  data::LabeledDataset test = std::move(bundle.test);
  const std::size_t d = train.d;

  std::vector<double> w = resolve_weights(cfg, train);
  if (w.empty()) w.assign(train.n, 1.0);

  // The second-order analysis expands around the weighted mean, so shift both
  // sets by the training set's weighted mean.
  {
    double total = 0.0;
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < train.n; ++i) {
      total += w[i];
      const double* x = train.row(i);
      for (std::size_t a = 0; a < d; ++a) mean[a] += w[i] * x[a];
    }
    for (double& m : mean) m /= total;
    for (std::size_t i = 0; i < train.n; ++i)
      for (std::size_t a = 0; a < d; ++a) train.features[i * d + a] -= mean[a];
    for (std::size_t i = 0; i < test.n; ++i)
      for (std::size_t a = 0; a < d; ++a) test.features[i * d + a] -= mean[a];
  }

  std::vector<double> theta(d, 0.0);
  using Theta = config::TheorySection::Theta;
  if (cfg.theory.theta == Theta::random) {
    rng::SplitMix64 gen(sub_seed(cfg.seed, kSeedTheta));
    double norm = 0.0;
    for (double& t : theta) {
      t = gen.normal();
      norm += t * t;
    }
    norm = std::sqrt(norm);
    for (double& t : theta) t = cfg.theory.theta_norm * t / norm;
  } else if (cfg.theory.theta == Theta::checkpoint) {
    const models::Model m = models::load_model(cfg.theory.checkpoint);
    const models::GlmModel* glm = std::get_if<models::GlmModel>(&m);
    if (!glm) throw std::runtime_error("theory.checkpoint: expected a glm model");
    if (glm->theta.size() != d)
      throw std::runtime_error(
          "theory.checkpoint: theta has " + std::to_string(glm->theta.size()) +
          " coordinates but the centered features have " + std::to_string(d) +
          " (bias-augmented checkpoints are not usable here)");
    theta = glm->theta;
  }

  const parallel::ExecMode mode = exec_mode();
  theory::TheoryReport report;
  report.n = train.n;
  report.d = d;
  report.n_mc = cfg.theory.n_mc;
  report.policy_label = policy_label(cfg.mix);
  const mixing::LambdaTildeMoments mom = mixing::lambda_tilde_moments(cfg.mix.alpha, cfg.mix.beta);
  report.lambda_bar = mom.mean;
  report.e_one_minus_lambda_sq = mom.e_one_minus_sq;
  report.sigma_hat = theory::weighted_covariance(train, w);
  report.sigma_m_mat =
      theory::sigma_m(report.sigma_hat, cfg.mix, cfg.theory.n_mc, sub_seed(cfg.seed, kSeedMask), mode);
  report.bound = theory::bound_terms(report.sigma_hat, report.sigma_m_mat);
  report.rho_hat = theory::estimate_rho(train, cfg.theory.rho_dirs, sub_seed(cfg.seed, kSeedRho), mode);
  const theory::MaskMoments moments = theory::mask_second_moments(
      cfg.mix, d, cfg.theory.n_mc, sub_seed(cfg.seed, kSeedMask), mode);
  report.w_gamma = theory::w_gamma_value(train, w, theta, report.sigma_m_mat, moments);
  for (std::size_t k = 0; k < cfg.theory.ladder.size(); ++k) {
    mixing::MixPolicy rung = cfg.mix;
    rung.alpha = cfg.theory.ladder[k].first;
    rung.beta = cfg.theory.ladder[k].second;
    theory::ResidualEntry entry;
    entry.label = format_beta_label(rung.alpha, rung.beta);
    entry.result = theory::regularizer_residual(train, w, theta, rung, cfg.theory.n_mc,
                                                sub_seed(cfg.seed, kSeedResidualBase + k), mode);
    report.residuals.push_back(std::move(entry));
  }
  if (!train.groups.empty() && !test.groups.empty() && test.n > 0 && train.class_count == 2) {
    std::vector<double> group_w(static_cast<std::size_t>(train.group_count), 0.0);
    std::vector<std::size_t> count(group_w.size(), 0);
    for (std::size_t i = 0; i < train.n; ++i) {
      group_w[static_cast<std::size_t>(train.groups[i])] += w[i];
      ++count[static_cast<std::size_t>(train.groups[i])];
    }
    for (std::size_t g = 0; g < group_w.size(); ++g)
      if (count[g] > 0) group_w[g] /= static_cast<double>(count[g]);
    report.gerror = theory::empirical_gerror(models::GlmModel{theta}, train, test, group_w);
  }

  {
    std::ofstream f(out + "/theory.json");
    if (!f) throw std::runtime_error("cannot open " + out + "/theory.json");
    f << report.to_json().dump(2) << '\n';
  }
  std::cout << report.human_table();
  return 0;
}

int cmd_compare(const RunOptions& opt) {
  const config::ExperimentConfig cfg = load_run_config(opt);
  const std::string out = resolve_out_dir(cfg, opt);
  if (opt.dry_run) {
    std::cout << "config ok: " << opt.config_path << " (" << cfg.compare.methods.size()
              << " methods x " << cfg.compare.seeds.size() << " seeds)\n";
    return 0;
  }
  const CompareOutcome outcome = run_compare(cfg, out);
  std::cout << outcome.table_markdown;
  std::cout << "wrote " << out << "/table.md and table.csv\n";
  return 0;
}

}  // namespace subpop::runner
