#include "subpop/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "subpop/rng.hpp"

namespace subpop::data {

namespace {
constexpr double kPi = 3.14159265358979323846;

void append_sample(LabeledDataset& ds, const std::vector<double>& x, int label, int group) {
  ds.features.insert(ds.features.end(), x.begin(), x.end());
  ds.labels.push_back(label);
  ds.groups.push_back(group);
  ++ds.n;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, rng::SplitMix64& gen) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = gen.next_below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

std::vector<int> LabeledDataset::group_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(std::max(group_count, 0)), 0);
  for (int g : groups) {
    if (g < 0 || g >= group_count) throw std::runtime_error("group id out of range");
    ++sizes[static_cast<std::size_t>(g)];
  }
  return sizes;
}

std::vector<double> LabeledDataset::group_proportions() const {
  if (n == 0) throw std::runtime_error("group_proportions: empty dataset");
  std::vector<double> k;
  for (int s : group_sizes()) k.push_back(static_cast<double>(s) / static_cast<double>(n));
  return k;
}

LabeledDataset gen_four_moons(const std::array<std::size_t, 4>& n_per_group,
                              double noise_std, std::uint64_t seed) {
  if (noise_std < 0.0) throw std::invalid_argument("gen_four_moons: noise_std must be >= 0");
  for (std::size_t c : n_per_group)
    if (c == 0) throw std::invalid_argument("gen_four_moons: every group size must be >= 1");

  // Arc g at offset ox: upward moons are (ox + cos t, sin t), downward moons
  // (ox + 1 - cos t, 0.5 - sin t), t in [0, pi]. The majority pair (groups
  // 0, 1) is the classic interleaved figure, separable by a near-horizontal
  // boundary. Each minority crescent copies the shape of the adjacent majority
  // crescent but carries the opposite label: group 2 (class 0) is a downward
  // arc just right of the downward majority, group 3 (class 1) an upward arc
  // just left of the upward majority. A model fit to the majorities alone
  // extends their bands outward and misclassifies essentially the whole of
  // both minority crescents, and the nearby opposite-label majority mass keeps
  // contesting the minority regions, so an unweighted fit recovers them only
  // slowly. Supports stay disjoint (parallel arcs 0.45 apart), so the regions
  // are cleanly learnable.
  const double off_x[4] = {0.0, 0.0, 2.45, -2.45};
  const bool upward[4] = {true, false, false, true};
  const int labels[4] = {0, 1, 0, 1};

  LabeledDataset ds;
  ds.d = 2;
  ds.class_count = 2;
  ds.group_count = 4;
  rng::SplitMix64 gen(seed);
  for (int g = 0; g < 4; ++g) {
    for (std::size_t i = 0; i < n_per_group[static_cast<std::size_t>(g)]; ++i) {
      const double t = gen.uniform(0.0, kPi);
      double x, y;
      if (upward[g]) {
        x = off_x[g] + std::cos(t);
        y = std::sin(t);
      } else {
        x = off_x[g] + 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      if (noise_std > 0.0) {
        x += noise_std * gen.normal();
        y += noise_std * gen.normal();
      }
      append_sample(ds, {x, y}, labels[g], g);
    }
  }
  return ds;
}

LabeledDataset gen_spurious_gaussian(const std::array<std::size_t, 4>& n_per_group,
                                     std::size_t core_dim, std::size_t spurious_dim,
                                     double correlation_strength, std::uint64_t seed) {
  if (core_dim == 0 || spurious_dim == 0)
    throw std::invalid_argument("gen_spurious_gaussian: core_dim and spurious_dim must be >= 1");
  for (std::size_t c : n_per_group)
    if (c == 0) throw std::invalid_argument("gen_spurious_gaussian: every group size must be >= 1");

  // Groups: 0=(y=0, aligned), 1=(y=1, aligned), 2=(y=0, anti), 3=(y=1, anti).
  const double core_sep = 1.5;  // per-block mean displacement along the all-ones direction

  LabeledDataset ds;
  ds.d = core_dim + spurious_dim;
  ds.class_count = 2;
  ds.group_count = 4;
  rng::SplitMix64 gen(seed);
  std::vector<double> x(ds.d);
  for (int g = 0; g < 4; ++g) {
    const int label = g % 2;
    const double ysign = label == 1 ? 1.0 : -1.0;
    const double ssign = (g < 2 ? 1.0 : -1.0) * ysign;
    const double core_mean = ysign * core_sep / std::sqrt(static_cast<double>(core_dim));
    const double spur_mean =
        ssign * correlation_strength / std::sqrt(static_cast<double>(spurious_dim));
    for (std::size_t i = 0; i < n_per_group[static_cast<std::size_t>(g)]; ++i) {
      for (std::size_t j = 0; j < core_dim; ++j) x[j] = core_mean + gen.normal();
      for (std::size_t j = 0; j < spurious_dim; ++j) x[core_dim + j] = spur_mean + gen.normal();
      append_sample(ds, x, label, g);
    }
  }
  return ds;
}

void save_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out.precision(17);
  for (std::size_t j = 0; j < ds.d; ++j) out << 'f' << j << ',';
  out << "label";
  if (ds.has_groups()) out << ",group";
  out << '\n';
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.d; ++j) out << ds.features[i * ds.d + j] << ',';
    out << ds.labels[i];
    if (ds.has_groups()) out << ',' << ds.groups[i];
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

namespace {

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_double_cell(const std::string& cell, std::size_t line_no, const std::string& col) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": cannot parse '" +
                             cell + "' in column " + col);
  }
  if (pos != cell.size() || !std::isfinite(v))
    throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": cannot parse '" +
                             cell + "' in column " + col);
  return v;
}

int parse_int_cell(const std::string& cell, std::size_t line_no, const std::string& col) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(cell, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": cannot parse '" +
                             cell + "' in column " + col);
  }
  if (pos != cell.size() || v < 0)
    throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": invalid value '" +
                             cell + "' in column " + col);
  return v;
}

}  // namespace

LabeledDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: " + path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_cells(line);
  std::size_t d = 0;
  while (d < header.size() && header[d] == "f" + std::to_string(d)) ++d;
  const std::size_t rest = header.size() - d;
  const bool has_group = rest == 2 && header[d] == "label" && header[d + 1] == "group";
  const bool ok = has_group || (rest == 1 && header[d] == "label");
  if (d == 0 || !ok)
    throw std::runtime_error("load_csv: line 1: header must be f0,...,f{d-1},label[,group]");

  LabeledDataset ds;
  ds.d = d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_cells(line);
    if (cells.size() != header.size())
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
    for (std::size_t j = 0; j < d; ++j)
      ds.features.push_back(parse_double_cell(cells[j], line_no, header[j]));
    ds.labels.push_back(parse_int_cell(cells[d], line_no, "label"));
    if (has_group) ds.groups.push_back(parse_int_cell(cells[d + 1], line_no, "group"));
    ++ds.n;
  }
  if (ds.n == 0) throw std::runtime_error("load_csv: " + path + " has no data rows");
  ds.class_count = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.group_count = has_group ? *std::max_element(ds.groups.begin(), ds.groups.end()) + 1 : 0;
  return ds;
}

SplitResult stratified_split(const LabeledDataset& ds, const SplitSpec& spec) {
  if (spec.train_frac < 0.0 || spec.val_frac < 0.0 || spec.test_frac < 0.0)
    throw std::invalid_argument("stratified_split: fractions must be non-negative");
  if (std::fabs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("stratified_split: fractions must sum to 1");
  if (ds.n == 0) throw std::invalid_argument("stratified_split: empty dataset");

  const bool by_group = ds.has_groups();
  const int strata = by_group ? ds.group_count : ds.class_count;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(strata));
  for (std::size_t i = 0; i < ds.n; ++i) {
    const int s = by_group ? ds.groups[i] : ds.labels[i];
    members[static_cast<std::size_t>(s)].push_back(i);
  }

  SplitResult out;
  for (LabeledDataset* part : {&out.train, &out.val, &out.test}) {
    part->d = ds.d;
    part->class_count = ds.class_count;
    part->group_count = ds.group_count;
  }

  rng::SplitMix64 gen(spec.seed);
  for (int s = 0; s < strata; ++s) {
    auto& idx = members[static_cast<std::size_t>(s)];
    const std::size_t ns = idx.size();
    const std::vector<std::size_t> perm = shuffled_indices(ns, gen);

    std::size_t cut_train = ns, cut_val = ns;
    if (ns < 3) {
      if (ns > 0)
        out.warnings.push_back((by_group ? "group " : "label ") + std::to_string(s) + " has " +
                               std::to_string(ns) + " samples (<3): all assigned to train");
    } else {
      // Cumulative rounding keeps each part within one sample of its exact share.
      cut_train = static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(ns)));
      cut_val = static_cast<std::size_t>(
          std::llround((spec.train_frac + spec.val_frac) * static_cast<double>(ns)));
      cut_train = std::min(cut_train, ns);
      cut_val = std::min(std::max(cut_val, cut_train), ns);
    }
    for (std::size_t k = 0; k < ns; ++k) {
      const std::size_t i = idx[perm[k]];
      LabeledDataset& part = k < cut_train ? out.train : (k < cut_val ? out.val : out.test);
      part.features.insert(part.features.end(), ds.row(i), ds.row(i) + ds.d);
      part.labels.push_back(ds.labels[i]);
      if (by_group) part.groups.push_back(ds.groups[i]);
      ++part.n;
    }
  }
  return out;
}

std::vector<double> center_features(LabeledDataset& ds) {
  if (ds.n == 0) throw std::invalid_argument("center_features: empty dataset");
  std::vector<double> mean(ds.d, 0.0);
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < ds.d; ++j) mean[j] += ds.features[i * ds.d + j];
  for (double& m : mean) m /= static_cast<double>(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i)
    for (std::size_t j = 0; j < ds.d; ++j) ds.features[i * ds.d + j] -= mean[j];
  return mean;
}

}  // namespace subpop::data
