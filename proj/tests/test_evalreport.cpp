#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "subpop/data.hpp"
#include "subpop/evalreport.hpp"
#include "subpop/rng.hpp"

using namespace subpop::evalreport;
using subpop::data::LabeledDataset;
using subpop::parallel::ExecMode;

namespace {

LabeledDataset tiny(const std::vector<int>& labels, const std::vector<int>& groups,
                    int group_count) {
  LabeledDataset ds;
  ds.d = 1;
  ds.class_count = 2;
  ds.group_count = group_count;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ds.features.push_back(0.0);
    ds.labels.push_back(labels[i]);
    ds.groups.push_back(groups[i]);
    ++ds.n;
  }
  return ds;
}

double trapezoid(const std::vector<double>& grid, const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k)
    acc += 0.5 * (f[k] + f[k - 1]) * (grid[k] - grid[k - 1]);
  return acc;
}

}  // namespace

TEST_CASE("evaluate: perfect predictions") {
  const auto ds = tiny({0, 1, 0, 1}, {0, 0, 1, 1}, 2);
  const Metrics m = evaluate(ds, {0, 1, 0, 1});
  CHECK(m.average == 1.0);
  CHECK(m.worst == 1.0);
  CHECK(m.gap == 0.0);
  CHECK(m.group_acc == std::vector<double>{1.0, 1.0});
}

TEST_CASE("evaluate: constant classifier hand values") {
  // group 0 labels {0,1}, group 1 labels {0,0}; predicting all zeros scores
  // 1/2 and 1, average 3/4, worst 1/2.
  const auto ds = tiny({0, 1, 0, 0}, {0, 0, 1, 1}, 2);
  const Metrics m = evaluate(ds, {0, 0, 0, 0});
  CHECK(m.average == 0.75);
  CHECK(m.worst == 0.5);
  CHECK(m.gap == 0.25);
  CHECK(m.group_acc == std::vector<double>{0.5, 1.0});
}

TEST_CASE("evaluate agrees with a brute-force recount") {
  subpop::rng::SplitMix64 gen(7);
  std::vector<int> labels, groups, preds;
  for (int i = 0; i < 300; ++i) {
    labels.push_back(static_cast<int>(gen.next_below(2)));
    groups.push_back(static_cast<int>(gen.next_below(5)));
    preds.push_back(static_cast<int>(gen.next_below(2)));
  }
  // make sure every group appears
  for (int g = 0; g < 5; ++g) groups[static_cast<std::size_t>(g)] = g;
  const auto ds = tiny(labels, groups, 5);
  const Metrics m = evaluate(ds, preds);

  std::map<int, int> tot, cor;
  int overall = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++tot[groups[i]];
    if (labels[i] == preds[i]) {
      ++cor[groups[i]];
      ++overall;
    }
  }
  CHECK(m.average == static_cast<double>(overall) / 300.0);
  double worst = 1.0;
  for (int g = 0; g < 5; ++g) {
    const double acc = static_cast<double>(cor[g]) / static_cast<double>(tot[g]);
    CHECK(m.group_acc[static_cast<std::size_t>(g)] == acc);
    worst = std::min(worst, acc);
  }
  CHECK(m.worst == worst);
  CHECK(m.gap == m.average - m.worst);
}

TEST_CASE("evaluate is invariant to sample order") {
  const std::vector<int> labels{0, 1, 1, 0, 1, 0};
  const std::vector<int> groups{0, 0, 1, 1, 2, 2};
  const std::vector<int> preds{0, 0, 1, 1, 1, 1};
  const Metrics a = evaluate(tiny(labels, groups, 3), preds);

  // reverse all three in lockstep
  std::vector<int> rl(labels.rbegin(), labels.rend());
  std::vector<int> rg(groups.rbegin(), groups.rend());
  std::vector<int> rp(preds.rbegin(), preds.rend());
  const Metrics b = evaluate(tiny(rl, rg, 3), rp);
  CHECK(a.average == b.average);
  CHECK(a.worst == b.worst);
  CHECK(a.group_acc == b.group_acc);
}

TEST_CASE("evaluate rejects bad inputs") {
  LabeledDataset empty;
  CHECK_THROWS_AS(evaluate(empty, {}), std::invalid_argument);

  auto no_groups = tiny({0, 1}, {0, 0}, 1);
  no_groups.groups.clear();
  no_groups.group_count = 0;
  CHECK_THROWS_AS(evaluate(no_groups, {0, 1}), std::invalid_argument);

  const auto ds = tiny({0, 1}, {0, 1}, 2);
  CHECK_THROWS_AS(evaluate(ds, {0}), std::invalid_argument);

  auto hole = tiny({0, 1}, {0, 0}, 2);  // declared group 1 never appears
  CHECK_THROWS_WITH_AS(evaluate(hole, {0, 1}), doctest::Contains("group 1 is empty"),
                       std::invalid_argument);
}

TEST_CASE("model selection") {
  auto mk = [](double worst, double average) {
    Metrics m;
    m.worst = worst;
    m.average = average;
    return m;
  };
  CHECK_THROWS_AS(select_model({}, SelectionCriterion::worst), std::invalid_argument);
  CHECK(select_model({mk(0.5, 0.9)}, SelectionCriterion::worst) == 0);

  // worst prefers epoch 1, average prefers epoch 2
  const std::vector<Metrics> epochs{mk(0.4, 0.80), mk(0.7, 0.85), mk(0.6, 0.95)};
  CHECK(select_model(epochs, SelectionCriterion::worst) == 1);
  CHECK(select_model(epochs, SelectionCriterion::average) == 2);

  // ties keep the earliest epoch
  const std::vector<Metrics> tied{mk(0.5, 0.9), mk(0.5, 0.9), mk(0.5, 0.9)};
  CHECK(select_model(tied, SelectionCriterion::worst) == 0);

  // the selected epoch is never beaten under its criterion
  subpop::rng::SplitMix64 gen(8);
  std::vector<Metrics> random_epochs;
  for (int e = 0; e < 40; ++e) random_epochs.push_back(mk(gen.next_double(), gen.next_double()));
  for (SelectionCriterion c : {SelectionCriterion::worst, SelectionCriterion::average}) {
    const std::size_t pick = select_model(random_epochs, c);
    for (const Metrics& m : random_epochs) {
      const double best = c == SelectionCriterion::worst ? random_epochs[pick].worst
                                                         : random_epochs[pick].average;
      const double cur = c == SelectionCriterion::worst ? m.worst : m.average;
      CHECK(best >= cur);
    }
  }
}

TEST_CASE("silverman bandwidth") {
  // Two points {0,1}: sd = sqrt(1/2), IQR = 0.5 -> spread = 0.5/1.34,
  // h = 0.9 * spread * 2^(-1/5).
  const double spread = 0.5 / 1.34;
  const double expect = 0.9 * spread * std::pow(2.0, -0.2);
  CHECK(silverman_bandwidth({0.0, 1.0}) == doctest::Approx(expect).epsilon(1e-12));

  // Identical values would give h = 0; the floor keeps the KDE usable.
  CHECK(silverman_bandwidth({0.3, 0.3, 0.3, 0.3}) == 0.02);
  CHECK_THROWS_AS(silverman_bandwidth({}), std::invalid_argument);
}

TEST_CASE("uncertainty KDE: point masses peak at their value") {
  // group 0 at u = 0.5, group 1 at u = 1, group 2 at u = 0.
  std::vector<double> u;
  std::vector<int> g;
  for (int i = 0; i < 20; ++i) {
    u.push_back(0.5);
    g.push_back(0);
    u.push_back(1.0);
    g.push_back(1);
    u.push_back(0.0);
    g.push_back(2);
  }
  const KdeResult kde = kde_uncertainty(u, g, 3);
  // Bandwidth pools all groups, so the spread-out pool keeps it off the floor.
  CHECK(kde.bandwidth == doctest::Approx(silverman_bandwidth(u)).epsilon(1e-15));
  CHECK(mode_location(kde, 0) == 0.5);
  CHECK(mode_location(kde, 1) == 1.0);
  CHECK(mode_location(kde, 2) == 0.0);

  // Reflection keeps each curve a probability density.
  for (std::size_t gg = 0; gg < 3; ++gg) {
    const double mass = trapezoid(kde.grid, kde.density[gg]);
    CHECK(mass > 0.9);
    CHECK(mass < 1.1);
  }

  // A single identical-valued pool hits the bandwidth floor and a sharp peak.
  const std::vector<double> spike(20, 0.5);
  const std::vector<int> zeros(20, 0);
  const KdeResult sharp = kde_uncertainty(spike, zeros, 1);
  CHECK(sharp.bandwidth == 0.02);
  const std::size_t mid = (sharp.grid.size() - 1) / 2;
  CHECK(sharp.density[0][mid] > 10.0 * sharp.density[0][mid / 2]);
  CHECK(mode_location(sharp, 0) == 0.5);
}

TEST_CASE("uncertainty KDE: integral stays near one for spread-out values") {
  subpop::rng::SplitMix64 gen(9);
  std::vector<double> u;
  std::vector<int> g;
  for (int i = 0; i < 200; ++i) {
    u.push_back(gen.next_double());
    g.push_back(static_cast<int>(gen.next_below(2)));
  }
  g[0] = 0;
  g[1] = 1;
  const KdeResult kde = kde_uncertainty(u, g, 2);
  for (std::size_t gg = 0; gg < 2; ++gg) {
    const double mass = trapezoid(kde.grid, kde.density[gg]);
    CHECK(mass > 0.95);
    CHECK(mass < 1.05);
  }
  CHECK(kde.grid.front() == 0.0);
  CHECK(kde.grid.back() == 1.0);
  CHECK(kde.grid.size() == 401);
}

TEST_CASE("uncertainty KDE input validation") {
  CHECK_THROWS_AS(kde_uncertainty({}, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(kde_uncertainty({0.5}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(kde_uncertainty({1.5}, {0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(kde_uncertainty({0.5}, {0}, 0), std::invalid_argument);
  CHECK_THROWS_AS(kde_uncertainty({0.5}, {2}, 2), std::invalid_argument);
  CHECK_THROWS_AS(kde_uncertainty({0.5}, {0}, 1, 1), std::invalid_argument);
  // declared group 1 has no members
  CHECK_THROWS_WITH_AS(kde_uncertainty({0.5, 0.6}, {0, 0}, 2),
                       doctest::Contains("group 1 is empty"), std::invalid_argument);
}

TEST_CASE("uncertainty KDE matches bitwise across execution modes") {
  subpop::rng::SplitMix64 gen(10);
  std::vector<double> u;
  std::vector<int> g;
  for (int i = 0; i < 150; ++i) {
    u.push_back(gen.next_double());
    g.push_back(static_cast<int>(gen.next_below(3)));
  }
  for (int gg = 0; gg < 3; ++gg) g[static_cast<std::size_t>(gg)] = gg;
  const KdeResult a = kde_uncertainty(u, g, 3, 401, ExecMode::serial);
  const KdeResult b = kde_uncertainty(u, g, 3, 401, ExecMode::openmp);
  CHECK(a.bandwidth == b.bandwidth);
  CHECK(a.grid == b.grid);
  CHECK(a.density == b.density);
}

TEST_CASE("mode location tie-break and bounds") {
  KdeResult flat;
  flat.grid = {0.0, 0.5, 1.0};
  flat.density = {{1.0, 1.0, 1.0}};
  CHECK(mode_location(flat, 0) == 0.0);  // ties resolve to the lowest grid point
  CHECK_THROWS_AS(mode_location(flat, 1), std::invalid_argument);
}

TEST_CASE("metrics serialization") {
  Metrics m;
  m.average = 0.75;
  m.worst = 0.5;
  m.gap = 0.25;
  m.group_acc = {0.5, 1.0};
  const nlohmann::json j = metrics_to_json(m);
  CHECK(j.at("average") == 0.75);
  CHECK(j.at("worst") == 0.5);
  CHECK(j.at("gap") == 0.25);
  CHECK(j.at("group_acc") == nlohmann::json::array({0.5, 1.0}));
}

TEST_CASE("kde csv layout") {
  KdeResult kde;
  kde.grid = {0.0, 0.5, 1.0};
  kde.density = {{1.0, 2.0, 3.0}, {0.25, 0.125, 0.0625}};
  kde.bandwidth = 0.02;
  write_kde_csv("kde_test.csv", kde);
  std::ifstream in("kde_test.csv");
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "u,g0,g1");
  std::size_t rows = 0;
  std::vector<std::string> cells;
  while (std::getline(in, line)) {
    ++rows;
    if (rows == 2) {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
    }
  }
  CHECK(rows == 3);
  REQUIRE(cells.size() == 3);
  CHECK(std::stod(cells[0]) == 0.5);
  CHECK(std::stod(cells[1]) == 2.0);
  CHECK(std::stod(cells[2]) == 0.125);
  std::filesystem::remove("kde_test.csv");

  CHECK_THROWS_AS(write_kde_csv("no_such_dir/kde.csv", kde), std::runtime_error);
}

TEST_CASE("report emission") {
  const std::string dir = "evalreport_test_dir";
  std::filesystem::create_directory(dir);

  Metrics m;
  m.average = 0.75;
  m.worst = 0.5;
  m.gap = 0.25;
  m.group_acc = {0.5, 1.0};

  SUBCASE("metrics and summary only") {
    emit_report(dir, m, nullptr, nullptr);
    CHECK(std::filesystem::exists(dir + "/metrics.json"));
    CHECK(std::filesystem::exists(dir + "/summary.md"));
    CHECK_FALSE(std::filesystem::exists(dir + "/theory.json"));
    CHECK_FALSE(std::filesystem::exists(dir + "/kde.csv"));

    std::ifstream in(dir + "/metrics.json");
    nlohmann::json j;
    in >> j;
    CHECK(j == metrics_to_json(m));

    std::ifstream md(dir + "/summary.md");
    std::stringstream buf;
    buf << md.rdbuf();
    const std::string text = buf.str();
    CHECK(text.find("| average | 75.0% |") != std::string::npos);
    CHECK(text.find("| worst-group | 50.0% |") != std::string::npos);
    CHECK(text.find("| group 1 | 100.0% |") != std::string::npos);
  }

  SUBCASE("optional artifacts appear when supplied") {
    const nlohmann::json theory{{"rho_hat", 0.01}};
    KdeResult kde;
    kde.grid = {0.0, 1.0};
    kde.density = {{1.0, 1.0}};
    emit_report(dir, m, &theory, &kde);
    CHECK(std::filesystem::exists(dir + "/theory.json"));
    CHECK(std::filesystem::exists(dir + "/kde.csv"));
    std::ifstream in(dir + "/theory.json");
    nlohmann::json back;
    in >> back;
    CHECK(back == theory);
  }

  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(emit_report("missing_dir_for_report", m, nullptr, nullptr), std::runtime_error);
}
