#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace subpop::data {

// Dense labeled dataset with optional subpopulation (group) annotations.
// Features are row-major n x d. Labels are 0..class_count-1; groups, when
// present, are 0..group_count-1.
struct LabeledDataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<int> groups;  // empty when the dataset carries no group info
  int class_count = 0;
  int group_count = 0;

  bool has_groups() const { return !groups.empty(); }
  const double* row(std::size_t i) const { return &features[i * d]; }
  double* row(std::size_t i) { return &features[i * d]; }

  std::vector<int> group_sizes() const;
  // k_g = n_g / n; sums to 1 exactly up to rounding.
  std::vector<double> group_proportions() const;
};

// Four half-circle crescents of radius 1: a standard moons pair in the middle
// (groups 0, 1) and one minority crescent on each side that copies the shape
// of the adjacent majority crescent but carries the opposite label (group 2 a
// downward arc right of the downward majority, group 3 an upward arc left of
// the upward majority). A majority-only fit extends the majority bands outward
// and misclassifies the minority regions wholesale. Groups 0..3 in order;
// groups 0 and 2 carry label 0, groups 1 and 3 carry label 1. Gaussian noise
// with the given std is added to both coordinates.
LabeledDataset gen_four_moons(const std::array<std::size_t, 4>& n_per_group,
                              double noise_std, std::uint64_t seed);

// Binary-label Gaussian data whose label is determined by the core block;
// the spurious block's mean aligns with the label in groups 0/1 and
// anti-aligns in groups 2/3. correlation_strength 0 makes the spurious block
// independent of the label.
LabeledDataset gen_spurious_gaussian(const std::array<std::size_t, 4>& n_per_group,
                                     std::size_t core_dim, std::size_t spurious_dim,
                                     double correlation_strength, std::uint64_t seed);

// CSV with header f0,...,f{d-1},label[,group]. Full round-trip precision.
void save_csv(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_csv(const std::string& path);

struct SplitSpec {
  double train_frac = 0.7;
  double val_frac = 0.15;
  double test_frac = 0.15;
  std::uint64_t seed = 0;
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  std::vector<std::string> warnings;
};

// Stratified split by group when groups are present, else by label. Within
// each stratum the requested proportions hold to within one sample; strata
// with fewer than 3 members go entirely to train with a recorded warning.
SplitResult stratified_split(const LabeledDataset& ds, const SplitSpec& spec);

// Subtract per-column means in place; returns the means that were removed.
std::vector<double> center_features(LabeledDataset& ds);

}  // namespace subpop::data
