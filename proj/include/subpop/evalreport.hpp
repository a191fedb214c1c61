#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "subpop/data.hpp"
#include "subpop/parallel.hpp"

namespace subpop::evalreport {

struct Metrics {
  double average = 0.0;  // overall sample accuracy
  double worst = 0.0;    // minimum per-group accuracy
  double gap = 0.0;      // average - worst
  std::vector<double> group_acc;
};

// Accuracy metrics over a grouped dataset. Errors if the dataset has no group
// annotations, if any group id in 0..group_count-1 has no samples, or if the
// prediction vector length disagrees.
Metrics evaluate(const data::LabeledDataset& ds, const std::vector<int>& predictions);

enum class SelectionCriterion { worst, average };

// Index of the best epoch under the criterion; ties go to the earliest epoch.
std::size_t select_model(const std::vector<Metrics>& per_epoch, SelectionCriterion criterion);

struct KdeResult {
  std::vector<double> grid;                   // uniform on [0,1]
  std::vector<std::vector<double>> density;   // one curve per group
  double bandwidth = 0.0;
};

// Per-group Gaussian KDE of the uncertainty values on [0,1]. Bandwidth is
// Silverman's rule on the pooled values (floored at 0.02); mass outside [0,1]
// is reflected back at both boundaries so each curve integrates to ~1.
KdeResult kde_uncertainty(const std::vector<double>& u, const std::vector<int>& groups,
                          int group_count, std::size_t grid_points = 401,
                          parallel::ExecMode mode = parallel::ExecMode::serial);

double silverman_bandwidth(std::vector<double> pooled);

// Grid location of the curve's maximum (ties -> lower grid index).
double mode_location(const KdeResult& kde, std::size_t group);

nlohmann::json metrics_to_json(const Metrics& m);

// "u,g0,g1,..." with one row per grid point.
void write_kde_csv(const std::string& path, const KdeResult& kde);

// Writes metrics.json and summary.md into dir; theory.json and kde.csv when
// the optional pieces are present.
void emit_report(const std::string& dir, const Metrics& test_metrics,
                 const nlohmann::json* theory, const KdeResult* kde);

}  // namespace subpop::evalreport
