#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "subpop/data.hpp"

namespace subpop::weighting {

enum class Normalization { none, mean_one };

// Every sample in group g receives exp(capacity_c / sqrt(n_g)) where n_g is
// the group's sample count. Requires group annotations.
std::vector<double> group_aware_weights(const data::LabeledDataset& ds, double capacity_c,
                                        Normalization norm = Normalization::none);

// Misclassification bit: 0 when the prediction matches the label.
inline int kappa(int label, int predicted) { return label == predicted ? 0 : 1; }

// Per-epoch misclassification bits for every training sample, epochs x n.
class TrajectoryLog {
 public:
  TrajectoryLog() = default;
  explicit TrajectoryLog(std::size_t n) : n_(n) {}

  std::size_t n() const { return n_; }
  std::size_t epochs() const { return n_ == 0 ? 0 : bits_.size() / n_; }
  // epoch is 0-based here; callers speak 1-based epoch numbers.
  std::uint8_t at(std::size_t epoch, std::size_t i) const { return bits_[epoch * n_ + i]; }

  void record_epoch(const std::vector<int>& labels, const std::vector<int>& predictions);

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

// u_i = mean of the bits over epochs t_start .. t_start + t_window inclusive
// (t_window + 1 terms). t_start is 1-based; the window must fit inside the
// recorded epochs.
std::vector<double> uncertainty_from_trajectory(const TrajectoryLog& log, std::size_t t_start,
                                                std::size_t t_window);

// w_i = eta * u_i + c. c must be positive so weights stay positive.
std::vector<double> weights_from_uncertainty(const std::vector<double>& u, double eta, double c,
                                             Normalization norm = Normalization::none);

// CSV bit-matrix (one row per epoch) plus a JSON sidecar recording
// {epochs, n, t_start, t_window}.
void save_trajectory(const TrajectoryLog& log, const std::string& csv_path,
                     const std::string& sidecar_path, std::size_t t_start, std::size_t t_window);
TrajectoryLog load_trajectory(const std::string& csv_path);

// Weights table "index,group,u,w". group is -1 and u is blank when absent.
void save_weights_csv(const std::string& path, const std::vector<int>& groups,
                      const std::vector<double>& u, const std::vector<double>& w);
struct WeightsTable {
  std::vector<int> groups;
  std::vector<double> u;  // empty when the file carried no uncertainties
  std::vector<double> w;
};
WeightsTable load_weights_csv(const std::string& path);

}  // namespace subpop::weighting
