#include "subpop/config.hpp"

#include <fstream>
#include <set>

namespace subpop::config {

namespace {

class Collector {
 public:
  void add(const std::string& msg) { problems_.push_back(msg); }
  bool empty() const { return problems_.empty(); }
  void throw_if_any() const {
    if (problems_.empty()) return;
    std::string msg = "invalid config:";
    for (const std::string& p : problems_) msg += "\n  - " + p;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> problems_;
};

void check_keys(const nlohmann::json& obj, const std::string& ctx,
                const std::set<std::string>& allowed, Collector& errs) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) errs.add(ctx + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback, const std::string& ctx,
         Collector& errs) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    errs.add(ctx + "." + key + ": wrong type");
    return fallback;
  }
}

std::optional<std::array<std::size_t, 4>> get_sizes(const nlohmann::json& obj,
                                                    const std::string& key, const std::string& ctx,
                                                    Collector& errs) {
  if (!obj.contains(key)) return std::nullopt;
  try {
    const auto v = obj.at(key).get<std::vector<std::size_t>>();
    if (v.size() != 4) {
      errs.add(ctx + "." + key + ": exactly 4 group sizes required");
      return std::nullopt;
    }
    return std::array<std::size_t, 4>{v[0], v[1], v[2], v[3]};
  } catch (const nlohmann::json::exception&) {
    errs.add(ctx + "." + key + ": wrong type");
    return std::nullopt;
  }
}

void parse_dataset(const nlohmann::json& j, DatasetConfig& out, Collector& errs) {
  check_keys(j, "dataset",
             {"generator", "group_sizes", "noise_std", "core_dim", "spurious_dim",
              "correlation_strength", "path", "val_group_sizes", "test_group_sizes", "split"},
             errs);
  const std::string gen = get_or<std::string>(j, "generator", "four_moons", "dataset", errs);
  if (gen == "four_moons") {
    out.generator = DatasetConfig::Generator::four_moons;
  } else if (gen == "spurious_gaussian") {
    out.generator = DatasetConfig::Generator::spurious_gaussian;
  } else if (gen == "csv") {
    out.generator = DatasetConfig::Generator::csv;
  } else {
    errs.add("dataset.generator: must be four_moons, spurious_gaussian, or csv");
  }
  if (const auto s = get_sizes(j, "group_sizes", "dataset", errs)) out.group_sizes = *s;
  out.noise_std = get_or<double>(j, "noise_std", out.noise_std, "dataset", errs);
  if (out.noise_std < 0.0) errs.add("dataset.noise_std: must be >= 0");
  out.core_dim = get_or<std::size_t>(j, "core_dim", out.core_dim, "dataset", errs);
  out.spurious_dim = get_or<std::size_t>(j, "spurious_dim", out.spurious_dim, "dataset", errs);
  out.correlation_strength =
      get_or<double>(j, "correlation_strength", out.correlation_strength, "dataset", errs);
  out.path = get_or<std::string>(j, "path", out.path, "dataset", errs);
  if (out.generator == DatasetConfig::Generator::csv && out.path.empty())
    errs.add("dataset.path: required for the csv generator");
  out.val_group_sizes = get_sizes(j, "val_group_sizes", "dataset", errs);
  out.test_group_sizes = get_sizes(j, "test_group_sizes", "dataset", errs);
  if (out.val_group_sizes.has_value() != out.test_group_sizes.has_value())
    errs.add("dataset: val_group_sizes and test_group_sizes must be given together");
  if (out.generator == DatasetConfig::Generator::csv &&
      (out.val_group_sizes || out.test_group_sizes))
    errs.add("dataset: val/test_group_sizes only apply to generators");
  if (j.contains("split")) {
    const nlohmann::json& s = j.at("split");
    if (!s.is_object()) {
      errs.add("dataset.split: must be an object");
    } else {
      check_keys(s, "dataset.split", {"train", "val", "test"}, errs);
      out.split.train_frac = get_or<double>(s, "train", out.split.train_frac, "dataset.split", errs);
      out.split.val_frac = get_or<double>(s, "val", out.split.val_frac, "dataset.split", errs);
      out.split.test_frac = get_or<double>(s, "test", out.split.test_frac, "dataset.split", errs);
      if (out.split.train_frac < 0 || out.split.val_frac < 0 || out.split.test_frac < 0 ||
          std::abs(out.split.train_frac + out.split.val_frac + out.split.test_frac - 1.0) > 1e-9)
        errs.add("dataset.split: fractions must be non-negative and sum to 1");
    }
  }
}

void parse_model(const nlohmann::json& j, ModelConfig& out, Collector& errs) {
  check_keys(j, "model", {"type", "hidden"}, errs);
  const std::string type = get_or<std::string>(j, "type", "mlp", "model", errs);
  if (type == "glm") {
    out.type = ModelConfig::Type::glm;
    if (j.contains("hidden")) errs.add("model.hidden: only applies to mlp");
  } else if (type == "mlp") {
    out.type = ModelConfig::Type::mlp;
    out.hidden = get_or<std::vector<std::size_t>>(j, "hidden", out.hidden, "model", errs);
    if (out.hidden.empty()) errs.add("model.hidden: at least one hidden layer for mlp");
    for (std::size_t h : out.hidden)
      if (h == 0) errs.add("model.hidden: zero-width layer");
  } else {
    errs.add("model.type: must be glm or mlp");
  }
}

void parse_train(const nlohmann::json& j, TrainSection& out, Collector& errs) {
  check_keys(j, "train", {"method", "epochs", "batch_size", "lr", "momentum", "no_mix_uses_self"},
             errs);
  const std::string method = get_or<std::string>(j, "method", "rmix", "train", errs);
  if (method == "rmix") out.method = TrainSection::Method::rmix;
  else if (method == "erm") out.method = TrainSection::Method::erm;
  else if (method == "iw") out.method = TrainSection::Method::iw;
  else if (method == "mixup") out.method = TrainSection::Method::mixup;
  else if (method == "igmix") out.method = TrainSection::Method::igmix;
  else errs.add("train.method: must be rmix, erm, iw, mixup, or igmix");
  out.epochs = get_or<std::size_t>(j, "epochs", out.epochs, "train", errs);
  if (out.epochs == 0) errs.add("train.epochs: must be >= 1");
  out.batch_size = get_or<std::size_t>(j, "batch_size", out.batch_size, "train", errs);
  if (out.batch_size == 0) errs.add("train.batch_size: must be >= 1");
  out.lr = get_or<double>(j, "lr", out.lr, "train", errs);
  if (!(out.lr > 0.0)) errs.add("train.lr: must be > 0");
  out.momentum = get_or<double>(j, "momentum", out.momentum, "train", errs);
  if (!(out.momentum >= 0.0 && out.momentum < 1.0)) errs.add("train.momentum: must be in [0,1)");
  out.no_mix_uses_self = get_or<bool>(j, "no_mix_uses_self", out.no_mix_uses_self, "train", errs);
}

void parse_mix(const nlohmann::json& j, mixing::MixPolicy& out, Collector& errs) {
  check_keys(j, "mix", {"mode", "alpha", "beta", "sigma", "grid"}, errs);
  const std::string mode = get_or<std::string>(j, "mode", "vanilla", "mix", errs);
  if (mode == "vanilla") out.mode = mixing::MixMode::vanilla;
  else if (mode == "cutmask") out.mode = mixing::MixMode::cutmask;
  else errs.add("mix.mode: must be vanilla or cutmask");
  out.alpha = get_or<double>(j, "alpha", out.alpha, "mix", errs);
  if (!(out.alpha > 0.0)) errs.add("mix.alpha: must be > 0");
  out.beta = get_or<double>(j, "beta", out.beta, "mix", errs);
  if (!(out.beta > 0.0)) errs.add("mix.beta: must be > 0");
  out.sigma = get_or<double>(j, "sigma", out.sigma, "mix", errs);
  if (!(out.sigma >= 0.0 && out.sigma <= 1.0)) errs.add("mix.sigma: must be in [0,1]");
  if (j.contains("grid")) {
    const auto g = get_or<std::vector<std::size_t>>(j, "grid", {}, "mix", errs);
    if (g.size() != 2 || g[0] == 0 || g[1] == 0)
      errs.add("mix.grid: must be [H, W] with positive entries");
    else
      out.grid = std::make_pair(g[0], g[1]);
  }
}

void parse_weights(const nlohmann::json& j, WeightsSection& out, Collector& errs) {
  check_keys(j, "weights", {"mode", "capacity_c", "normalization", "path", "uncertainty"}, errs);
  const std::string mode = get_or<std::string>(j, "mode", "uniform", "weights", errs);
  if (mode == "uniform") out.mode = WeightsSection::Mode::uniform;
  else if (mode == "group_aware") out.mode = WeightsSection::Mode::group_aware;
  else if (mode == "uncertainty") out.mode = WeightsSection::Mode::uncertainty;
  else if (mode == "csv") out.mode = WeightsSection::Mode::csv;
  else errs.add("weights.mode: must be uniform, group_aware, uncertainty, or csv");
  out.capacity_c = get_or<double>(j, "capacity_c", out.capacity_c, "weights", errs);
  if (!(out.capacity_c >= 0.0)) errs.add("weights.capacity_c: must be >= 0");
  const std::string norm = get_or<std::string>(j, "normalization", "mean_one", "weights", errs);
  if (norm == "none") out.normalization = weighting::Normalization::none;
  else if (norm == "mean_one") out.normalization = weighting::Normalization::mean_one;
  else errs.add("weights.normalization: must be none or mean_one");
  out.path = get_or<std::string>(j, "path", out.path, "weights", errs);
  if (out.mode == WeightsSection::Mode::csv && out.path.empty())
    errs.add("weights.path: required for csv mode");
  if (j.contains("uncertainty")) {
    const nlohmann::json& u = j.at("uncertainty");
    if (!u.is_object()) {
      errs.add("weights.uncertainty: must be an object");
    } else {
      check_keys(u, "weights.uncertainty", {"erm_epochs", "t_start", "t_window", "eta", "c"}, errs);
      auto& unc = out.uncertainty;
      unc.erm_epochs = get_or<std::size_t>(u, "erm_epochs", unc.erm_epochs, "weights.uncertainty", errs);
      unc.t_start = get_or<std::size_t>(u, "t_start", unc.t_start, "weights.uncertainty", errs);
      unc.t_window = get_or<std::size_t>(u, "t_window", unc.t_window, "weights.uncertainty", errs);
      unc.eta = get_or<double>(u, "eta", unc.eta, "weights.uncertainty", errs);
      unc.c = get_or<double>(u, "c", unc.c, "weights.uncertainty", errs);
      if (unc.erm_epochs == 0) errs.add("weights.uncertainty.erm_epochs: must be >= 1");
      if (unc.t_start < 1) errs.add("weights.uncertainty.t_start: 1-based, must be >= 1");
      if (unc.t_start + unc.t_window > unc.erm_epochs)
        errs.add("weights.uncertainty: window t_start+t_window must fit within erm_epochs");
      if (!(unc.eta >= 0.0)) errs.add("weights.uncertainty.eta: must be >= 0");
      if (!(unc.c > 0.0)) errs.add("weights.uncertainty.c: must be > 0");
    }
  }
}

void parse_eval(const nlohmann::json& j, EvalSection& out, Collector& errs) {
  check_keys(j, "eval", {"model_path"}, errs);
  out.model_path = get_or<std::string>(j, "model_path", out.model_path, "eval", errs);
}

void parse_theory(const nlohmann::json& j, TheorySection& out, Collector& errs) {
  check_keys(j, "theory", {"n_mc", "rho_dirs", "theta_norm", "theta", "checkpoint", "ladder"},
             errs);
  out.n_mc = get_or<std::size_t>(j, "n_mc", out.n_mc, "theory", errs);
  if (out.n_mc < 1000) errs.add("theory.n_mc: must be at least 1000");
  out.rho_dirs = get_or<std::size_t>(j, "rho_dirs", out.rho_dirs, "theory", errs);
  if (out.rho_dirs == 0) errs.add("theory.rho_dirs: must be >= 1");
  out.theta_norm = get_or<double>(j, "theta_norm", out.theta_norm, "theory", errs);
  if (!(out.theta_norm >= 0.0)) errs.add("theory.theta_norm: must be >= 0");
  const std::string theta = get_or<std::string>(j, "theta", "random", "theory", errs);
  if (theta == "zero") out.theta = TheorySection::Theta::zero;
  else if (theta == "random") out.theta = TheorySection::Theta::random;
  else if (theta == "checkpoint") out.theta = TheorySection::Theta::checkpoint;
  else errs.add("theory.theta: must be zero, random, or checkpoint");
  out.checkpoint = get_or<std::string>(j, "checkpoint", out.checkpoint, "theory", errs);
  if (out.theta == TheorySection::Theta::checkpoint && out.checkpoint.empty())
    errs.add("theory.checkpoint: required when theta = checkpoint");
  if (j.contains("ladder")) {
    out.ladder.clear();
    try {
      for (const auto& pair : j.at("ladder")) {
        const auto v = pair.get<std::vector<double>>();
        if (v.size() != 2 || !(v[0] > 0.0) || !(v[1] > 0.0)) {
          errs.add("theory.ladder: entries must be [alpha, beta] with positive values");
          break;
        }
        out.ladder.emplace_back(v[0], v[1]);
      }
    } catch (const nlohmann::json::exception&) {
      errs.add("theory.ladder: wrong type");
    }
    if (out.ladder.empty()) errs.add("theory.ladder: at least one entry required");
  }
}

void parse_compare(const nlohmann::json& j, CompareSection& out, Collector& errs) {
  check_keys(j, "compare", {"seeds", "methods"}, errs);
  if (j.contains("seeds")) {
    out.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", out.seeds, "compare", errs);
    if (out.seeds.empty()) errs.add("compare.seeds: at least one seed required");
  }
  if (j.contains("methods")) {
    out.methods = get_or<std::vector<std::string>>(j, "methods", out.methods, "compare", errs);
    const std::set<std::string> known{"erm",   "iw",    "mixup", "igmix", "rmix_group_aware",
                                      "rmix_uncertainty"};
    for (const std::string& m : out.methods)
      if (!known.count(m)) errs.add("compare.methods: unknown method '" + m + "'");
    if (out.methods.empty()) errs.add("compare.methods: at least one method required");
  }
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  Collector errs;
  if (!j.is_object()) throw ConfigError("invalid config:\n  - top level must be a JSON object");
  check_keys(j, "top level",
             {"seed", "output_dir", "dataset", "model", "train", "mix", "weights", "selection",
              "eval", "theory", "compare"},
             errs);

  ExperimentConfig cfg;
  cfg.raw = j;
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed, "top level", errs);
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir, "top level", errs);

  auto section = [&](const char* name) -> const nlohmann::json* {
    if (!j.contains(name)) return nullptr;
    if (!j.at(name).is_object()) {
      errs.add(std::string(name) + ": must be an object");
      return nullptr;
    }
    return &j.at(name);
  };

  if (const nlohmann::json* s = section("dataset")) parse_dataset(*s, cfg.dataset, errs);
  if (const nlohmann::json* s = section("model")) parse_model(*s, cfg.model, errs);
  if (const nlohmann::json* s = section("train")) parse_train(*s, cfg.train, errs);
  if (const nlohmann::json* s = section("mix")) parse_mix(*s, cfg.mix, errs);
  if (const nlohmann::json* s = section("weights")) parse_weights(*s, cfg.weights, errs);
  if (const nlohmann::json* s = section("eval")) parse_eval(*s, cfg.eval, errs);
  if (const nlohmann::json* s = section("theory")) parse_theory(*s, cfg.theory, errs);
  if (const nlohmann::json* s = section("compare")) parse_compare(*s, cfg.compare, errs);

  if (j.contains("selection")) {
    const std::string sel = get_or<std::string>(j, "selection", "worst", "top level", errs);
    if (sel == "worst") cfg.selection = evalreport::SelectionCriterion::worst;
    else if (sel == "average") cfg.selection = evalreport::SelectionCriterion::average;
    else errs.add("selection: must be worst or average");
  }

  errs.throw_if_any();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("invalid config:\n  - cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid config:\n  - " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace subpop::config
