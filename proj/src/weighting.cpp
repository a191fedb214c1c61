#include "subpop/weighting.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace subpop::weighting {

namespace {

void normalize_mean_one(std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v;
  const double mean = s / static_cast<double>(w.size());
  if (!(mean > 0.0)) throw std::runtime_error("weight normalization: mean must be positive");
  for (double& v : w) v /= mean;
}

}  // namespace

std::vector<double> group_aware_weights(const data::LabeledDataset& ds, double capacity_c,
                                        Normalization norm) {
  if (!ds.has_groups())
    throw std::invalid_argument("group_aware_weights: dataset carries no group info");
  if (!(capacity_c >= 0.0)) throw std::invalid_argument("group_aware_weights: capacity must be >= 0");
  const std::vector<int> sizes = ds.group_sizes();
  std::vector<double> per_group(sizes.size());
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] == 0) throw std::invalid_argument("group_aware_weights: group " +
                                                   std::to_string(g) + " is empty");
    per_group[g] = std::exp(capacity_c / std::sqrt(static_cast<double>(sizes[g])));
  }
  std::vector<double> w(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) w[i] = per_group[static_cast<std::size_t>(ds.groups[i])];
  if (norm == Normalization::mean_one) normalize_mean_one(w);
  return w;
}

void TrajectoryLog::record_epoch(const std::vector<int>& labels,
                                 const std::vector<int>& predictions) {
  if (labels.size() != n_ || predictions.size() != n_)
    throw std::invalid_argument("TrajectoryLog: epoch size mismatch");
  for (std::size_t i = 0; i < n_; ++i)
    bits_.push_back(static_cast<std::uint8_t>(kappa(labels[i], predictions[i])));
}

std::vector<double> uncertainty_from_trajectory(const TrajectoryLog& log, std::size_t t_start,
                                                std::size_t t_window) {
  if (t_start < 1) throw std::invalid_argument("uncertainty: t_start is 1-based and must be >= 1");
  if (t_start + t_window > log.epochs())
    throw std::invalid_argument("uncertainty: window [" + std::to_string(t_start) + ", " +
                                std::to_string(t_start + t_window) + "] exceeds recorded epochs (" +
                                std::to_string(log.epochs()) + ")");
  const std::size_t terms = t_window + 1;
  std::vector<double> u(log.n(), 0.0);
  for (std::size_t t = t_start - 1; t < t_start + t_window; ++t)
    for (std::size_t i = 0; i < log.n(); ++i) u[i] += log.at(t, i);
  for (double& v : u) v /= static_cast<double>(terms);
  return u;
}

std::vector<double> weights_from_uncertainty(const std::vector<double>& u, double eta, double c,
                                             Normalization norm) {
  if (!(eta >= 0.0)) throw std::invalid_argument("weights_from_uncertainty: eta must be >= 0");
  if (!(c > 0.0)) throw std::invalid_argument("weights_from_uncertainty: c must be > 0");
  std::vector<double> w(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] >= 0.0 && u[i] <= 1.0))
      throw std::invalid_argument("weights_from_uncertainty: u out of [0,1]");
    w[i] = eta * u[i] + c;
  }
  if (norm == Normalization::mean_one) normalize_mean_one(w);
  return w;
}

void save_trajectory(const TrajectoryLog& log, const std::string& csv_path,
                     const std::string& sidecar_path, std::size_t t_start, std::size_t t_window) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("save_trajectory: cannot open " + csv_path);
  for (std::size_t t = 0; t < log.epochs(); ++t) {
    for (std::size_t i = 0; i < log.n(); ++i) {
      if (i) out << ',';
      out << static_cast<int>(log.at(t, i));
    }
    out << '\n';
  }
  nlohmann::json side{{"epochs", log.epochs()},
                      {"n", log.n()},
                      {"t_start", t_start},
                      {"t_window", t_window}};
  std::ofstream sout(sidecar_path);
  if (!sout) throw std::runtime_error("save_trajectory: cannot open " + sidecar_path);
  sout << side.dump(2) << '\n';
}

TrajectoryLog load_trajectory(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("load_trajectory: cannot open " + csv_path);
  std::string line;
  TrajectoryLog log;
  std::size_t line_no = 0;
  std::vector<int> labels, preds;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<int> bits;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell != "0" && cell != "1")
        throw std::runtime_error("load_trajectory: line " + std::to_string(line_no) +
                                 ": expected 0/1, got '" + cell + "'");
      bits.push_back(cell == "1" ? 1 : 0);
    }
    if (log.n() == 0 && log.epochs() == 0) {
      log = TrajectoryLog(bits.size());
    } else if (bits.size() != log.n()) {
      throw std::runtime_error("load_trajectory: line " + std::to_string(line_no) +
                               ": ragged row");
    }
    // re-encode through record_epoch: labels all 0, predictions carry the bit
    labels.assign(bits.size(), 0);
    preds.assign(bits.size(), 0);
    for (std::size_t i = 0; i < bits.size(); ++i) preds[i] = bits[i];
    log.record_epoch(labels, preds);
  }
  if (log.epochs() == 0) throw std::runtime_error("load_trajectory: " + csv_path + " is empty");
  return log;
}

void save_weights_csv(const std::string& path, const std::vector<int>& groups,
                      const std::vector<double>& u, const std::vector<double>& w) {
  if (!groups.empty() && groups.size() != w.size())
    throw std::invalid_argument("save_weights_csv: group column size mismatch");
  if (!u.empty() && u.size() != w.size())
    throw std::invalid_argument("save_weights_csv: u column size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_weights_csv: cannot open " + path);
  out.precision(17);
  out << "index,group,u,w\n";
  for (std::size_t i = 0; i < w.size(); ++i) {
    out << i << ',' << (groups.empty() ? -1 : groups[i]) << ',';
    if (!u.empty()) out << u[i];
    out << ',' << w[i] << '\n';
  }
}

WeightsTable load_weights_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_weights_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_weights_csv: " + path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,group,u,w")
    throw std::runtime_error("load_weights_csv: line 1: expected header index,group,u,w");
  WeightsTable table;
  std::size_t line_no = 1;
  bool any_u = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string idx, group, u_cell, w_cell;
    if (!std::getline(ss, idx, ',') || !std::getline(ss, group, ',') ||
        !std::getline(ss, u_cell, ',') || !std::getline(ss, w_cell))
      throw std::runtime_error("load_weights_csv: line " + std::to_string(line_no) +
                               ": expected 4 cells");
    try {
      const std::size_t expect = table.w.size();
      if (static_cast<std::size_t>(std::stoul(idx)) != expect)
        throw std::runtime_error("index out of order");
      table.groups.push_back(std::stoi(group));
      if (!u_cell.empty()) {
        any_u = true;
        table.u.push_back(std::stod(u_cell));
      } else {
        table.u.push_back(0.0);
      }
      table.w.push_back(std::stod(w_cell));
    } catch (const std::exception& e) {
      throw std::runtime_error("load_weights_csv: line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    if (!(table.w.back() > 0.0))
      throw std::runtime_error("load_weights_csv: line " + std::to_string(line_no) +
                               ": weight must be positive");
  }
  if (table.w.empty()) throw std::runtime_error("load_weights_csv: " + path + " has no rows");
  if (!any_u) table.u.clear();
  return table;
}

}  // namespace subpop::weighting
