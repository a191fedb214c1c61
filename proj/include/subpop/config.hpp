#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "subpop/data.hpp"
#include "subpop/evalreport.hpp"
#include "subpop/mixing.hpp"
#include "subpop/weighting.hpp"

namespace subpop::config {

// Invalid configuration (maps to CLI exit code 2). The message lists every
// violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DatasetConfig {
  enum class Generator { four_moons, spurious_gaussian, csv };
  Generator generator = Generator::four_moons;
  std::array<std::size_t, 4> group_sizes{1000, 1000, 50, 50};
  double noise_std = 0.1;
  std::size_t core_dim = 2;
  std::size_t spurious_dim = 2;
  double correlation_strength = 0.0;
  std::string path;  // csv generator
  // Generators can emit held-out sets directly instead of splitting.
  std::optional<std::array<std::size_t, 4>> val_group_sizes;
  std::optional<std::array<std::size_t, 4>> test_group_sizes;
  data::SplitSpec split;
};

struct ModelConfig {
  enum class Type { glm, mlp };
  Type type = Type::mlp;
  std::vector<std::size_t> hidden{16};
};

struct TrainSection {
  enum class Method { rmix, erm, iw, mixup, igmix };
  Method method = Method::rmix;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double lr = 0.1;
  double momentum = 0.9;
  bool no_mix_uses_self = false;
};

struct WeightsSection {
  enum class Mode { uniform, group_aware, uncertainty, csv };
  Mode mode = Mode::uniform;
  double capacity_c = 20.0;
  weighting::Normalization normalization = weighting::Normalization::mean_one;
  std::string path;  // csv mode
  struct Uncertainty {
    std::size_t erm_epochs = 50;
    std::size_t t_start = 1;
    std::size_t t_window = 10;
    double eta = 10.0;
    double c = 1.0;
  } uncertainty;
};

struct EvalSection {
  std::string model_path;
};

struct TheorySection {
  std::size_t n_mc = 200000;
  std::size_t rho_dirs = 32;
  double theta_norm = 0.1;
  enum class Theta { zero, random, checkpoint };
  Theta theta = Theta::random;
  std::string checkpoint;
  std::vector<std::pair<double, double>> ladder{{9, 1}, {19, 1}, {49, 1}};
};

struct CompareSection {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::string> methods{"erm",   "iw",
                                   "mixup", "igmix",
                                   "rmix_group_aware", "rmix_uncertainty"};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  DatasetConfig dataset;
  ModelConfig model;
  TrainSection train;
  // Library MixPolicy defaults to plain mixup (Beta(1,1), always mix); the
  // config layer defaults to the tuned protocol instead.
  mixing::MixPolicy mix{.alpha = 0.1, .beta = 0.1, .sigma = 0.2};
  WeightsSection weights;
  evalreport::SelectionCriterion selection = evalreport::SelectionCriterion::worst;
  EvalSection eval;
  TheorySection theory;
  CompareSection compare;
  nlohmann::json raw;  // original document, echoed into the output directory
};

// Parse + validate. Unknown keys anywhere are violations; every violation is
// collected before throwing ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);

}  // namespace subpop::config
