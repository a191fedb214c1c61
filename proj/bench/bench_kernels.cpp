// Wall-clock comparison of the serial and OpenMP paths of the shardable
// kernels. Both paths use the same fixed shard layout, so besides timing we
// assert that every result is bit-for-bit identical across modes.
//
//   bench_kernels [repeats]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "subpop/data.hpp"
#include "subpop/evalreport.hpp"
#include "subpop/parallel.hpp"
#include "subpop/rng.hpp"
#include "subpop/theory.hpp"

using namespace subpop;
using parallel::ExecMode;

namespace {

using Clock = std::chrono::steady_clock;

double best_of(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

bool same(const linalg::DenseMatrix& a, const linalg::DenseMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a.data() == b.data();
}

struct Row {
  std::string name;
  double serial_ms = 0.0;
  double openmp_ms = 0.0;
  bool match = false;
};

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;

  // A wide-ish synthetic problem so the per-shard work dominates scheduling.
  const data::LabeledDataset ds =
      data::gen_spurious_gaussian({8000, 8000, 2000, 2000}, 8, 8, 0.9, 1);
  const std::size_t d = ds.d;

  std::vector<double> w(ds.n, 1.0);
  std::vector<double> theta(d);
  {
    rng::SplitMix64 gen(7);
    double norm = 0.0;
    for (double& t : theta) {
      t = gen.normal();
      norm += t * t;
    }
    norm = std::sqrt(norm);
    for (double& t : theta) t *= 0.1 / norm;
  }
  // regularizer_residual expands around the weighted mean, so center first.
  data::LabeledDataset centered = ds;
  {
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < ds.n; ++i)
      for (std::size_t a = 0; a < d; ++a) mean[a] += ds.row(i)[a];
    for (double& m : mean) m /= static_cast<double>(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i)
      for (std::size_t a = 0; a < d; ++a) centered.features[i * d + a] -= mean[a];
  }

  mixing::MixPolicy cutmask;
  cutmask.mode = mixing::MixMode::cutmask;
  cutmask.alpha = 2.0;
  cutmask.beta = 1.0;
  mixing::MixPolicy vanilla;
  vanilla.alpha = 9.0;
  vanilla.beta = 1.0;

  const linalg::DenseMatrix sigma = theory::weighted_covariance(centered, w);

  std::vector<double> u(50000);
  std::vector<int> groups(u.size());
  {
    rng::SplitMix64 gen(3);
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = gen.uniform(0.0, 1.0);
      groups[i] = static_cast<int>(gen.next_below(4));
    }
  }

  const std::size_t n_mc_mask = 2000000;
  const std::size_t n_mc_resid = 400000;

  std::vector<Row> rows;
  auto bench = [&](const std::string& name, auto&& run, auto&& equal) {
    Row row;
    row.name = name;
    auto a = run(ExecMode::serial);
    auto b = run(ExecMode::openmp);
    row.match = equal(a, b);
    row.serial_ms = best_of(repeats, [&] { run(ExecMode::serial); });
    row.openmp_ms = best_of(repeats, [&] { run(ExecMode::openmp); });
    rows.push_back(row);
  };

  bench(
      "mask_second_moments (cutmask d=16)",
      [&](ExecMode m) { return theory::mask_second_moments(cutmask, d, n_mc_mask, 11, m); },
      [](const theory::MaskMoments& a, const theory::MaskMoments& b) {
        return same(a.e_one_minus_outer, b.e_one_minus_outer) && same(a.cov_mask, b.cov_mask);
      });

  bench(
      "sigma_m (cutmask d=16)",
      [&](ExecMode m) { return theory::sigma_m(sigma, cutmask, n_mc_mask, 12, m); },
      [](const linalg::DenseMatrix& a, const linalg::DenseMatrix& b) { return same(a, b); });

  bench(
      "estimate_rho (n=20000, 256 dirs)",
      [&](ExecMode m) { return theory::estimate_rho(ds, 256, 13, m); },
      [](double a, double b) { return a == b; });

  bench(
      "regularizer_residual (vanilla)",
      [&](ExecMode m) {
        return theory::regularizer_residual(centered, w, theta, vanilla, n_mc_resid, 14, m);
      },
      [](const theory::ResidualResult& a, const theory::ResidualResult& b) {
        return a.residual == b.residual && a.se == b.se && a.mc_loss == b.mc_loss &&
               a.quad_term == b.quad_term;
      });

  bench(
      "kde_uncertainty (n=50000, 1001 pts)",
      [&](ExecMode m) { return evalreport::kde_uncertainty(u, groups, 4, 1001, m); },
      [](const evalreport::KdeResult& a, const evalreport::KdeResult& b) {
        return a.bandwidth == b.bandwidth && a.grid == b.grid && a.density == b.density;
      });

#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d, %d repeat(s), best-of timing\n\n",
              omp_get_max_threads(), repeats);
#else
  std::printf("built without OpenMP: both columns run the serial path\n\n");
#endif
  std::printf("%-38s %10s %10s %8s %6s\n", "kernel", "serial", "openmp", "speedup", "match");
  bool all_match = true;
  for (const Row& r : rows) {
    std::printf("%-38s %8.1f ms %8.1f ms %7.2fx %6s\n", r.name.c_str(), r.serial_ms, r.openmp_ms,
                r.serial_ms / r.openmp_ms, r.match ? "yes" : "NO");
    all_match = all_match && r.match;
  }
  if (!all_match) {
    std::printf("\nserial and openmp paths disagree\n");
    return 1;
  }
  return 0;
}
