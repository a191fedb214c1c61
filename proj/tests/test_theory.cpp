#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "subpop/data.hpp"
#include "subpop/linalg.hpp"
#include "subpop/mixing.hpp"
#include "subpop/models.hpp"
#include "subpop/parallel.hpp"
#include "subpop/theory.hpp"

using namespace subpop::theory;
using subpop::data::LabeledDataset;
using subpop::linalg::DenseMatrix;
using subpop::mixing::MixMode;
using subpop::mixing::MixPolicy;
using subpop::models::GlmModel;
using subpop::parallel::ExecMode;

namespace {

// Raw moments of Beta(a, b): E[l^k] and E[(1-l)^k].
double beta_raw_moment(double a, double b, int k) {
  double m = 1.0;
  for (int i = 0; i < k; ++i) m *= (a + i) / (a + b + i);
  return m;
}
double beta_one_minus_moment(double a, double b, int k) { return beta_raw_moment(b, a, k); }

LabeledDataset dataset_from_rows(const std::vector<std::vector<double>>& rows,
                                 const std::vector<int>& labels, const std::vector<int>& groups,
                                 int group_count) {
  LabeledDataset ds;
  ds.d = rows.empty() ? 0 : rows[0].size();
  ds.class_count = 2;
  ds.group_count = group_count;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.features.insert(ds.features.end(), rows[i].begin(), rows[i].end());
    ds.labels.push_back(labels[i]);
    ds.groups.push_back(groups.empty() ? 0 : groups[i]);
    ++ds.n;
  }
  if (groups.empty()) {
    ds.groups.clear();
    ds.group_count = 0;
  }
  return ds;
}

MixPolicy vanilla_policy(double a, double b) {
  MixPolicy p;
  p.mode = MixMode::vanilla;
  p.alpha = a;
  p.beta = b;
  return p;
}

MixPolicy cutmask_policy(double a, double b) {
  MixPolicy p;
  p.mode = MixMode::cutmask;
  p.alpha = a;
  p.beta = b;
  return p;
}

LabeledDataset centered_moons(std::uint64_t seed) {
  LabeledDataset ds = subpop::data::gen_four_moons({20, 20, 20, 20}, 0.1, seed);
  subpop::data::center_features(ds);
  return ds;
}

}  // namespace

TEST_CASE("weighted covariance basics") {
  // Rows sqrt(n) * e_i with unit weights average to the identity exactly.
  const std::size_t n = 3;
  std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) rows[i][i] = std::sqrt(static_cast<double>(n));
  const auto ds = dataset_from_rows(rows, {0, 1, 0}, {}, 0);
  const DenseMatrix id = weighted_covariance(ds, std::vector<double>(n, 1.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b)
        CHECK(id(a, b) == doctest::Approx(1.0).epsilon(1e-15));
      else
        CHECK(id(a, b) == 0.0);
    }

  // Doubling every weight doubles the matrix; the map is linear in w.
  const std::vector<double> w{0.5, 2.0, 1.25};
  const DenseMatrix one = weighted_covariance(ds, w);
  std::vector<double> w2 = w;
  for (double& v : w2) v *= 2.0;
  const DenseMatrix two = weighted_covariance(ds, w2);
  for (std::size_t k = 0; k < one.data().size(); ++k)
    CHECK(two.data()[k] == doctest::Approx(2.0 * one.data()[k]).epsilon(1e-15));

  // Two-point hand value: (1/2)(w0 x0 x0' + w1 x1 x1').
  const auto pair = dataset_from_rows({{1.0, 2.0}, {-1.0, 0.5}}, {0, 1}, {}, 0);
  const DenseMatrix c = weighted_covariance(pair, {2.0, 4.0});
  CHECK(c(0, 0) == doctest::Approx((2.0 * 1.0 + 4.0 * 1.0) / 2.0).epsilon(1e-15));
  CHECK(c(0, 1) == doctest::Approx((2.0 * 2.0 + 4.0 * -0.5) / 2.0).epsilon(1e-15));
  CHECK(c(0, 1) == c(1, 0));
  CHECK(c(1, 1) == doctest::Approx((2.0 * 4.0 + 4.0 * 0.25) / 2.0).epsilon(1e-15));

  CHECK_THROWS_AS(weighted_covariance(pair, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(weighted_covariance(pair, {1.0, 0.0}), std::invalid_argument);
  LabeledDataset empty;
  CHECK_THROWS_AS(weighted_covariance(empty, {}), std::invalid_argument);
}

TEST_CASE("vanilla mask moments match the Beta closed forms within 3 SE") {
  const std::size_t n_mc = 200000;
  struct Case {
    double a, b;
  };
  int cs = 0;
  for (const Case c : {Case{1.0, 1.0}, Case{2.0, 1.0}}) {
    const MaskMoments mom =
        mask_second_moments(vanilla_policy(c.a, c.b), 3, n_mc, 900 + cs++, ExecMode::serial);
    // Every entry of both matrices is the same scalar for vanilla masks.
    for (double v : mom.e_one_minus_outer.data()) CHECK(v == mom.e_one_minus_outer(0, 0));
    for (double v : mom.cov_mask.data()) CHECK(v == mom.cov_mask(0, 0));

    const double m2 = beta_one_minus_moment(c.a, c.b, 2);
    const double m4 = beta_one_minus_moment(c.a, c.b, 4);
    const double se2 = std::sqrt((m4 - m2 * m2) / static_cast<double>(n_mc));
    CHECK(std::abs(mom.e_one_minus_outer(0, 0) - m2) < 3.0 * se2);

    // Variance estimator: SE ~ sqrt((mu4 - var^2)/n) with mu4 the central 4th moment.
    const double mu = beta_raw_moment(c.a, c.b, 1);
    const double r2 = beta_raw_moment(c.a, c.b, 2);
    const double r3 = beta_raw_moment(c.a, c.b, 3);
    const double r4 = beta_raw_moment(c.a, c.b, 4);
    const double var = r2 - mu * mu;
    const double mu4 = r4 - 4.0 * mu * r3 + 6.0 * mu * mu * r2 - 3.0 * mu * mu * mu * mu;
    const double se_var = std::sqrt(std::max(0.0, mu4 - var * var) / static_cast<double>(n_mc));
    CHECK(std::abs(mom.cov_mask(0, 0) - var) < 4.0 * se_var);
  }
  CHECK_THROWS_AS(mask_second_moments(vanilla_policy(1, 1), 3, 0, 1), std::invalid_argument);
}

TEST_CASE("a lambda concentrated at one makes the cutmask moments vanish") {
  // Beta(1e4, 1) puts all mass so close to 1 that round(lambda * d) = d for
  // every draw: the mask is all ones, so 1 - M is identically zero and the
  // mask has no variance.
  const MaskMoments mom =
      mask_second_moments(cutmask_policy(1e4, 1.0), 4, 20000, 17, ExecMode::serial);
  for (double v : mom.e_one_minus_outer.data()) CHECK(v == 0.0);
  for (double v : mom.cov_mask.data()) CHECK(v == 0.0);
}

TEST_CASE("cutmask moments have the exact diagonal tied to round(lambda d)") {
  // For a no-grid cutmask each coordinate is Bernoulli with mean
  // round(lambda*d)/d given lambda; diagonal of E[(1-M)(1-M)'] is
  // E[1 - round(l d)/d] since (1-m)^2 = 1-m for binary m.
  const std::size_t d = 5, n_mc = 100000;
  const MaskMoments mom =
      mask_second_moments(cutmask_policy(1.0, 1.0), d, n_mc, 23, ExecMode::serial);
  // E[1 - round(l*5)/5] for l ~ U(0,1): round(5l) takes k on |5l - k| < 0.5,
  // so E[round(5l)/5] = (1/5) * sum_k k * P(...) = 1/2 by symmetry.
  for (std::size_t a = 0; a < d; ++a) {
    CHECK(std::abs(mom.e_one_minus_outer(a, a) - 0.5) < 3.0 * std::sqrt(0.25 / n_mc));
    // Diagonal of Cov(M): coordinate is Bernoulli(1/2) marginally -> var 1/4.
    CHECK(std::abs(mom.cov_mask(a, a) - 0.25) < 0.01);
  }
}

TEST_CASE("masked covariance keeps a diagonal sigma diagonal") {
  DenseMatrix sigma(3, 3, 0.0);
  sigma(0, 0) = 2.0;
  sigma(1, 1) = 1.0;
  sigma(2, 2) = 0.5;
  const std::size_t n_mc = 100000;
  const DenseMatrix sm = sigma_m(sigma, vanilla_policy(2.0, 1.0), n_mc, 31, ExecMode::serial);
  const double m2 = beta_one_minus_moment(2.0, 1.0, 2);
  const double m4 = beta_one_minus_moment(2.0, 1.0, 4);
  const double se = std::sqrt((m4 - m2 * m2) / static_cast<double>(n_mc));
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      if (a == b)
        CHECK(std::abs(sm(a, a) - m2 * sigma(a, a)) < 3.0 * se * sigma(a, a));
      else
        CHECK(sm(a, b) == 0.0);  // Hadamard with a zero entry is exactly zero
    }
  CHECK_THROWS_AS(sigma_m(DenseMatrix(2, 3, 0.0), vanilla_policy(1, 1), 1000, 1),
                  std::invalid_argument);
}

TEST_CASE("bound terms on hand-solvable spectra") {
  // Sigma = Sigma_M = I: trace term sqrt(d), rank d.
  const std::size_t d = 6;
  DenseMatrix eye(d, d, 0.0);
  for (std::size_t a = 0; a < d; ++a) eye(a, a) = 1.0;
  const BoundTerms bt = bound_terms(eye, eye);
  CHECK(bt.trace_term == doctest::Approx(std::sqrt(6.0)).epsilon(1e-9));
  CHECK(bt.rank_term == 6.0);
  CHECK(bt.sqrt_d == doctest::Approx(std::sqrt(6.0)).epsilon(1e-15));

  // Rank-1 Sigma with Sigma_M = q * Sigma: pinv scales by 1/q, trace term sqrt(1/q).
  DenseMatrix rank1(3, 3, 0.0);
  const std::vector<double> v{1.0, -2.0, 2.0};  // norm 3
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) rank1(a, b) = v[a] * v[b];
  const double q = 0.25;
  const BoundTerms r1 = bound_terms(rank1, subpop::linalg::scale(rank1, q));
  CHECK(r1.trace_term == doctest::Approx(std::sqrt(1.0 / q)).epsilon(1e-8));
  CHECK(r1.rank_term == 1.0);

  // Zero Sigma: everything collapses to zero.
  const BoundTerms z = bound_terms(DenseMatrix(3, 3, 0.0), DenseMatrix(3, 3, 0.0));
  CHECK(z.trace_term == 0.0);
  CHECK(z.rank_term == 0.0);

  CHECK_THROWS_AS(bound_terms(DenseMatrix(2, 2, 0.0), DenseMatrix(3, 3, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("curvature floor estimate") {
  // Standard-normal features: rho is positive, and the norm-3 directions force
  // the denominator to its cap of 1 while A'' <= 1/4, so rho <= 1/16.
  subpop::rng::SplitMix64 gen(41);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (int i = 0; i < 400; ++i) {
    rows.push_back({gen.normal(), gen.normal(), gen.normal(), gen.normal()});
    labels.push_back(i % 2);
  }
  const auto ds = dataset_from_rows(rows, labels, {}, 0);
  const double rho = estimate_rho(ds, 8, 5);
  CHECK(rho > 0.0);
  CHECK(rho <= 1.0 / 16.0 + 1e-12);
  CHECK(estimate_rho(ds, 8, 5) == rho);  // same seed, same value

  auto zeros = dataset_from_rows({{0.0, 0.0}, {0.0, 0.0}}, {0, 1}, {}, 0);
  CHECK_THROWS_AS(estimate_rho(zeros, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_rho(ds, 0, 1), std::invalid_argument);
  LabeledDataset empty;
  CHECK_THROWS_AS(estimate_rho(empty, 4, 1), std::invalid_argument);
}

TEST_CASE("second-order residual vanishes identically at theta = 0") {
  const LabeledDataset ds = centered_moons(61);
  const std::vector<double> w(ds.n, 1.0);
  const std::vector<double> theta(ds.d, 0.0);
  for (const MixPolicy& p : {vanilla_policy(2.0, 1.0), cutmask_policy(2.0, 1.0)}) {
    const ResidualResult r = regularizer_residual(ds, w, theta, p, 5000, 71);
    CHECK(r.residual == 0.0);
    CHECK(r.se == 0.0);
    CHECK(r.quad_term == 0.0);
    CHECK(r.mc_loss == doctest::Approx(r.base_loss).epsilon(1e-12));
  }
}

TEST_CASE("second-order residual is small at a small theta") {
  const LabeledDataset ds = centered_moons(62);
  const std::vector<double> w(ds.n, 1.0);
  std::vector<double> theta{0.07, -0.07};  // norm ~0.1
  const ResidualResult r = regularizer_residual(ds, w, theta, vanilla_policy(9.0, 1.0), 100000, 72);
  CHECK(r.se > 0.0);
  CHECK(r.residual < 1e-2);
  CHECK(r.e_one_minus_lambda_sq ==
        doctest::Approx(beta_one_minus_moment(9.0, 1.0, 2)).epsilon(1e-12));
  CHECK(r.mc_loss > 0.0);
  CHECK(r.base_loss > 0.0);
  CHECK(r.quad_term > 0.0);
}

TEST_CASE("second-order residual rejects bad inputs") {
  const LabeledDataset centered = centered_moons(63);
  const std::vector<double> w(centered.n, 1.0);
  const std::vector<double> theta(centered.d, 0.0);

  LabeledDataset raw = subpop::data::gen_four_moons({20, 20, 20, 20}, 0.1, 63);
  CHECK_THROWS_WITH_AS(
      regularizer_residual(raw, std::vector<double>(raw.n, 1.0), theta, vanilla_policy(1, 1), 5000, 1),
      doctest::Contains("centered"), std::invalid_argument);

  CHECK_THROWS_WITH_AS(
      regularizer_residual(centered, w, theta, vanilla_policy(1, 1), 999, 1),
      doctest::Contains("1000"), std::invalid_argument);

  CHECK_THROWS_AS(
      regularizer_residual(centered, w, {0.0, 0.0, 0.0}, vanilla_policy(1, 1), 5000, 1),
      std::invalid_argument);

  LabeledDataset multi = centered;
  multi.class_count = 3;
  CHECK_THROWS_AS(regularizer_residual(multi, w, theta, vanilla_policy(1, 1), 5000, 1),
                  std::invalid_argument);

  CHECK_THROWS_AS(
      regularizer_residual(centered, std::vector<double>(centered.n, 0.0), theta,
                           vanilla_policy(1, 1), 5000, 1),
      std::invalid_argument);
}

TEST_CASE("generalization-gap probe") {
  // Train: two separable points; a huge-margin model drives train loss to ~0.
  const auto train = dataset_from_rows({{-1.0}, {1.0}}, {0, 1}, {0, 1}, 2);
  // Test adds label-flipped copies, so the same model pays ~50 nats on half of it.
  const auto test =
      dataset_from_rows({{-1.0}, {1.0}, {-1.0}, {1.0}}, {0, 1, 1, 0}, {0, 1, 0, 1}, 2);
  const subpop::models::Model m = GlmModel{{50.0}};
  const double g = empirical_gerror(m, train, test, {1.0, 1.0});
  CHECK(g > 20.0);

  // Identical splits cancel exactly.
  CHECK(empirical_gerror(m, train, train, {1.0, 1.0}) == 0.0);

  // theta = 0 prices every point at log 2 on both sides.
  const subpop::models::Model zero = GlmModel{{0.0}};
  CHECK(empirical_gerror(zero, train, test, {1.0, 1.0}) ==
        doctest::Approx(0.0).epsilon(1e-12));

  LabeledDataset no_groups = train;
  no_groups.groups.clear();
  no_groups.group_count = 0;
  CHECK_THROWS_AS(empirical_gerror(m, no_groups, test, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(empirical_gerror(m, train, test, {1.0}), std::invalid_argument);
}

TEST_CASE("capacity functional hand value in one dimension") {
  const auto ds = dataset_from_rows({{1.0}, {2.0}}, {0, 1}, {}, 0);
  const std::vector<double> w{1.0, 3.0};
  const std::vector<double> theta{0.5};
  DenseMatrix smat(1, 1, 0.2);
  MaskMoments mom;
  mom.e_one_minus_outer = DenseMatrix(1, 1, 0.3);
  mom.cov_mask = DenseMatrix(1, 1, 0.04);

  const double a2_1 = subpop::models::glm_a2(0.5);  // z = 1 * 0.5
  const double a2_2 = subpop::models::glm_a2(1.0);  // z = 2 * 0.5
  const double mean_a2 = (1.0 * a2_1 + 3.0 * a2_2) / 2.0;
  const double var_term = (1.0 * (0.25 * 1.0 * 0.04) + 3.0 * (0.25 * 4.0 * 0.04)) / 2.0;
  const double expect = mean_a2 * (0.2 * 0.25 + var_term);
  CHECK(w_gamma_value(ds, w, theta, smat, mom) == doctest::Approx(expect).epsilon(1e-14));

  CHECK_THROWS_AS(w_gamma_value(ds, {1.0}, theta, smat, mom), std::invalid_argument);
  CHECK_THROWS_AS(w_gamma_value(ds, w, {0.1, 0.2}, smat, mom), std::invalid_argument);
}

TEST_CASE("monte-carlo kernels agree bitwise across execution modes") {
  const MixPolicy pv = vanilla_policy(2.0, 1.0);
  const MixPolicy pc = cutmask_policy(1.0, 1.0);

  const MaskMoments sv = mask_second_moments(pv, 3, 50000, 5, ExecMode::serial);
  const MaskMoments ov = mask_second_moments(pv, 3, 50000, 5, ExecMode::openmp);
  CHECK(sv.e_one_minus_outer.data() == ov.e_one_minus_outer.data());
  CHECK(sv.cov_mask.data() == ov.cov_mask.data());

  const MaskMoments sc = mask_second_moments(pc, 4, 20000, 6, ExecMode::serial);
  const MaskMoments oc = mask_second_moments(pc, 4, 20000, 6, ExecMode::openmp);
  CHECK(sc.e_one_minus_outer.data() == oc.e_one_minus_outer.data());
  CHECK(sc.cov_mask.data() == oc.cov_mask.data());

  DenseMatrix sigma(3, 3, 0.0);
  for (std::size_t a = 0; a < 3; ++a) sigma(a, a) = 1.0 + static_cast<double>(a);
  CHECK(sigma_m(sigma, pv, 30000, 7, ExecMode::serial).data() ==
        sigma_m(sigma, pv, 30000, 7, ExecMode::openmp).data());

  const LabeledDataset ds = centered_moons(64);
  CHECK(estimate_rho(ds, 16, 8, ExecMode::serial) == estimate_rho(ds, 16, 8, ExecMode::openmp));

  const std::vector<double> w(ds.n, 1.0);
  const std::vector<double> theta{0.05, -0.08};
  const ResidualResult rs = regularizer_residual(ds, w, theta, pv, 20000, 9, ExecMode::serial);
  const ResidualResult ro = regularizer_residual(ds, w, theta, pv, 20000, 9, ExecMode::openmp);
  CHECK(rs.residual == ro.residual);
  CHECK(rs.se == ro.se);
  CHECK(rs.e_one_minus_lambda_sq == ro.e_one_minus_lambda_sq);
  CHECK(rs.mc_loss == ro.mc_loss);
  CHECK(rs.base_loss == ro.base_loss);
  CHECK(rs.quad_term == ro.quad_term);
}

TEST_CASE("report serialization and console table") {
  TheoryReport rep;
  rep.n = 10;
  rep.d = 2;
  rep.n_mc = 1000;
  rep.policy_label = "vanilla(2,1)";
  rep.lambda_bar = 2.0 / 3.0;
  rep.e_one_minus_lambda_sq = 1.0 / 6.0;
  rep.sigma_hat = DenseMatrix(2, 2, 0.5);
  rep.sigma_m_mat = DenseMatrix(2, 2, 0.1);
  rep.bound = BoundTerms{1.0, 1.0, std::sqrt(2.0)};
  rep.rho_hat = 0.01;
  rep.w_gamma = 0.2;
  ResidualEntry a;
  a.label = "beta(9,1)";
  a.result.residual = 0.02;
  a.result.se = 0.001;
  a.result.e_one_minus_lambda_sq = 0.2;
  ResidualEntry b;
  b.label = "beta(49,1)";
  b.result.residual = 0.002;
  b.result.se = 0.001;
  b.result.e_one_minus_lambda_sq = 0.04;
  rep.residuals = {a, b};
  rep.gerror = 0.5;

  const nlohmann::json j = rep.to_json();
  CHECK(j.at("n") == 10);
  CHECK(j.at("bound").at("sum") == doctest::Approx(2.0));
  CHECK(j.at("residuals").size() == 2);
  CHECK(j.at("residuals")[0].at("ratio") == doctest::Approx(0.1));
  CHECK(j.at("gerror") == doctest::Approx(0.5));
  TheoryReport no_g = rep;
  no_g.gerror.reset();
  CHECK(no_g.to_json().at("gerror").is_null());

  const std::string table = rep.human_table();
  CHECK(table.find("trace_term + rank_term") != std::string::npos);
  CHECK(table.find("rho_hat") != std::string::npos);
  // ratio ladder 0.1 -> 0.05 is non-increasing
  CHECK(table.find("non-increasing       ok") != std::string::npos);

  TheoryReport bad = rep;
  bad.residuals[1].result.residual = 0.2;  // ratio jumps to 5
  CHECK(bad.human_table().find("non-increasing       FAIL") != std::string::npos);
}
