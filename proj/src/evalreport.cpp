#include "subpop/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace subpop::evalreport {

Metrics evaluate(const data::LabeledDataset& ds, const std::vector<int>& predictions) {
  if (ds.n == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (!ds.has_groups()) throw std::invalid_argument("evaluate: dataset carries no group info");
  if (predictions.size() != ds.n)
    throw std::invalid_argument("evaluate: prediction count mismatch");

  const std::size_t groups = static_cast<std::size_t>(ds.group_count);
  std::vector<std::size_t> total(groups, 0), correct(groups, 0);
  std::size_t overall = 0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    const std::size_t g = static_cast<std::size_t>(ds.groups[i]);
    ++total[g];
    if (predictions[i] == ds.labels[i]) {
      ++correct[g];
      ++overall;
    }
  }
  Metrics m;
  m.average = static_cast<double>(overall) / static_cast<double>(ds.n);
  m.group_acc.resize(groups);
  m.worst = 1.0;
  for (std::size_t g = 0; g < groups; ++g) {
    if (total[g] == 0)
      throw std::invalid_argument("evaluate: group " + std::to_string(g) + " is empty");
    m.group_acc[g] = static_cast<double>(correct[g]) / static_cast<double>(total[g]);
    m.worst = std::min(m.worst, m.group_acc[g]);
  }
  m.gap = m.average - m.worst;
  return m;
}

std::size_t select_model(const std::vector<Metrics>& per_epoch, SelectionCriterion criterion) {
  if (per_epoch.empty()) throw std::invalid_argument("select_model: no epochs");
  std::size_t best = 0;
  for (std::size_t e = 1; e < per_epoch.size(); ++e) {
    const double cur = criterion == SelectionCriterion::worst ? per_epoch[e].worst
                                                              : per_epoch[e].average;
    const double ref = criterion == SelectionCriterion::worst ? per_epoch[best].worst
                                                              : per_epoch[best].average;
    if (cur > ref) best = e;  // strict: ties keep the earlier epoch
  }
  return best;
}

double silverman_bandwidth(std::vector<double> pooled) {
  if (pooled.empty()) throw std::invalid_argument("silverman_bandwidth: no values");
  const double n = static_cast<double>(pooled.size());
  double mean = 0.0;
  for (double v : pooled) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : pooled) var += (v - mean) * (v - mean);
  var /= std::max(1.0, n - 1.0);
  const double sd = std::sqrt(var);

  std::sort(pooled.begin(), pooled.end());
  auto quantile = [&pooled](double q) {
    const double pos = q * (static_cast<double>(pooled.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, pooled.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return pooled[lo] * (1.0 - frac) + pooled[hi] * frac;
  };
  const double iqr = quantile(0.75) - quantile(0.25);

  double spread = sd;
  if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
  double h = 0.9 * spread * std::pow(n, -0.2);
  // Floor keeps zero-variance pools (all samples identical) usable.
  return std::max(h, 0.02);
}

KdeResult kde_uncertainty(const std::vector<double>& u, const std::vector<int>& groups,
                          int group_count, std::size_t grid_points, parallel::ExecMode mode) {
  if (u.size() != groups.size() || u.empty())
    throw std::invalid_argument("kde_uncertainty: u and groups must be non-empty and aligned");
  if (group_count <= 0) throw std::invalid_argument("kde_uncertainty: group_count must be > 0");
  if (grid_points < 2) throw std::invalid_argument("kde_uncertainty: need at least 2 grid points");
  for (double v : u)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("kde_uncertainty: u out of [0,1]");

  KdeResult out;
  out.bandwidth = silverman_bandwidth(u);
  out.grid.resize(grid_points);
  for (std::size_t k = 0; k < grid_points; ++k)
    out.grid[k] = static_cast<double>(k) / static_cast<double>(grid_points - 1);

  std::vector<std::vector<double>> members(static_cast<std::size_t>(group_count));
  for (std::size_t i = 0; i < u.size(); ++i) {
    const int g = groups[i];
    if (g < 0 || g >= group_count) throw std::invalid_argument("kde_uncertainty: group id out of range");
    members[static_cast<std::size_t>(g)].push_back(u[i]);
  }

  const double h = out.bandwidth;
  const double norm = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
  out.density.assign(static_cast<std::size_t>(group_count),
                     std::vector<double>(grid_points, 0.0));
  for (std::size_t g = 0; g < members.size(); ++g) {
    if (members[g].empty())
      throw std::invalid_argument("kde_uncertainty: group " + std::to_string(g) + " is empty");
    const std::vector<double>& vals = members[g];
    std::vector<double>& dens = out.density[g];
    // Each grid point is an independent slot, so the parallel path matches the
    // serial one exactly.
    const int shards = std::min<int>(parallel::kShardCount, static_cast<int>(grid_points));
    parallel::for_each_shard(shards, mode, [&](int s) {
      for (std::size_t k = static_cast<std::size_t>(s); k < grid_points;
           k += static_cast<std::size_t>(shards)) {
        const double x = out.grid[k];
        double acc = 0.0;
        for (double v : vals) {
          // reflect at 0 and at 1
          const double d0 = (x - v) / h;
          const double d1 = (x + v) / h;
          const double d2 = (x - (2.0 - v)) / h;
          acc += std::exp(-0.5 * d0 * d0) + std::exp(-0.5 * d1 * d1) + std::exp(-0.5 * d2 * d2);
        }
        dens[k] = acc * norm / (h * static_cast<double>(vals.size()));
      }
    });
  }
  return out;
}

double mode_location(const KdeResult& kde, std::size_t group) {
  if (group >= kde.density.size()) throw std::invalid_argument("mode_location: group out of range");
  const std::vector<double>& dens = kde.density[group];
  std::size_t best = 0;
  for (std::size_t k = 1; k < dens.size(); ++k)
    if (dens[k] > dens[best]) best = k;
  return kde.grid[best];
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return nlohmann::json{{"average", m.average},
                        {"worst", m.worst},
                        {"gap", m.gap},
                        {"group_acc", m.group_acc}};
}

void write_kde_csv(const std::string& path, const KdeResult& kde) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_kde_csv: cannot open " + path);
  out.precision(17);
  out << "u";
  for (std::size_t g = 0; g < kde.density.size(); ++g) out << ",g" << g;
  out << '\n';
  for (std::size_t k = 0; k < kde.grid.size(); ++k) {
    out << kde.grid[k];
    for (std::size_t g = 0; g < kde.density.size(); ++g) out << ',' << kde.density[g][k];
    out << '\n';
  }
}

void emit_report(const std::string& dir, const Metrics& test_metrics,
                 const nlohmann::json* theory, const KdeResult* kde) {
  {
    std::ofstream out(dir + "/metrics.json");
    if (!out) throw std::runtime_error("emit_report: cannot open " + dir + "/metrics.json");
    out << metrics_to_json(test_metrics).dump(2) << '\n';
  }
  if (theory) {
    std::ofstream out(dir + "/theory.json");
    if (!out) throw std::runtime_error("emit_report: cannot open " + dir + "/theory.json");
    out << theory->dump(2) << '\n';
  }
  if (kde) write_kde_csv(dir + "/kde.csv", *kde);
  {
    std::ofstream out(dir + "/summary.md");
    if (!out) throw std::runtime_error("emit_report: cannot open " + dir + "/summary.md");
    auto pct = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * v);
      return std::string(buf);
    };
    out << "# evaluation summary\n\n";
    out << "| metric | value |\n|---|---|\n";
    out << "| average | " << pct(test_metrics.average) << " |\n";
    out << "| worst-group | " << pct(test_metrics.worst) << " |\n";
    out << "| gap | " << pct(test_metrics.gap) << " |\n";
    for (std::size_t g = 0; g < test_metrics.group_acc.size(); ++g)
      out << "| group " << g << " | " << pct(test_metrics.group_acc[g]) << " |\n";
  }
}

}  // namespace subpop::evalreport
