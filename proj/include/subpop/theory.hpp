#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "subpop/data.hpp"
#include "subpop/linalg.hpp"
#include "subpop/mixing.hpp"
#include "subpop/models.hpp"
#include "subpop/parallel.hpp"

namespace subpop::theory {

// (1/n) sum_i w_i x_i x_i'. Weights positive, one per row.
linalg::DenseMatrix weighted_covariance(const data::LabeledDataset& ds,
                                        const std::vector<double>& w);

// Monte-Carlo second moments of the mixing mask over the conjugate lambda
// decomposition: E[(1-M)(1-M)'] and Cov(M) as d x d matrices (vanilla masks
// make both constant matrices). Sharded; serial and openmp agree bitwise.
struct MaskMoments {
  linalg::DenseMatrix e_one_minus_outer;  // E[(1-M)(1-M)']
  linalg::DenseMatrix cov_mask;           // E[MM'] - E[M]E[M]'
};
MaskMoments mask_second_moments(const mixing::MixPolicy& policy, std::size_t d, std::size_t n_mc,
                                std::uint64_t seed,
                                parallel::ExecMode mode = parallel::ExecMode::serial);

// E[(1-M) Sigma (1-M)'] == E[(1-M)(1-M)'] ⊙ Sigma (mask as a broadcast column).
linalg::DenseMatrix sigma_m(const linalg::DenseMatrix& sigma, const mixing::MixPolicy& policy,
                            std::size_t n_mc, std::uint64_t seed,
                            parallel::ExecMode mode = parallel::ExecMode::serial);

struct BoundTerms {
  double trace_term = 0.0;  // sqrt(tr(pinv(Sigma_M) * Sigma))
  double rank_term = 0.0;   // numerical rank of Sigma
  double sqrt_d = 0.0;      // flat-comparator value
};
BoundTerms bound_terms(const linalg::DenseMatrix& sigma, const linalg::DenseMatrix& sigma_m);

// min over sampled directions v (random unit directions times the norm grid
// {0.1, 0.3, 1, 3}) of (mean_i A''(x_i'v))^2 / min{1, mean_i (v'x_i)^2}.
// Errors if the features are identically zero.
double estimate_rho(const data::LabeledDataset& ds, std::size_t n_dirs, std::uint64_t seed,
                    parallel::ExecMode mode = parallel::ExecMode::serial);

struct ResidualResult {
  double residual = 0.0;             // |MC mixup loss - (L_n + quadratic term)|
  double se = 0.0;                   // standard error of the difference estimate
  double e_one_minus_lambda_sq = 0;  // scaling denominator for ladder studies
  double mc_loss = 0.0;
  double base_loss = 0.0;            // L_n
  double quad_term = 0.0;            // Monte-Carlo estimate of the quadratic term
};

// Second-order check of the mixup objective for the binary GLM on a centered
// dataset: rescaled input x^ = (mixed input)/lambda_bar, lambda from the
// conjugate decomposition, quadratic term (1/(2n lambda_bar^2)) sum_i w_i
// A''(x_i'theta) theta'(E(1-M)Sigma(1-M)' + x_i Var(M) x_i')theta.
// The difference is estimated with a per-draw second-order control variate
// whose mean is exactly L_n + quadratic term (common random numbers), so the
// residual resolves the Taylor remainder instead of raw MC noise.
ResidualResult regularizer_residual(const data::LabeledDataset& ds, const std::vector<double>& w,
                                    const std::vector<double>& theta,
                                    const mixing::MixPolicy& policy, std::size_t n_mc,
                                    std::uint64_t seed,
                                    parallel::ExecMode mode = parallel::ExecMode::serial);

// Mean weighted test loss minus mean weighted train loss; weights come per
// group. Both datasets need group annotations.
double empirical_gerror(const models::Model& model, const data::LabeledDataset& train,
                        const data::LabeledDataset& test,
                        const std::vector<double>& group_weights);

// Realized value of the capacity functional at theta:
// mean_i w_i A''(x_i'theta) * theta'(Sigma_M + mean_i w_i Cov(M)⊙x_i x_i')theta.
double w_gamma_value(const data::LabeledDataset& ds, const std::vector<double>& w,
                     const std::vector<double>& theta, const linalg::DenseMatrix& sigma_m_mat,
                     const MaskMoments& moments);

struct ResidualEntry {
  std::string label;
  ResidualResult result;
};

struct TheoryReport {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t n_mc = 0;
  int shard_count = parallel::kShardCount;
  std::string policy_label;
  double lambda_bar = 0.0;
  double e_one_minus_lambda_sq = 0.0;
  linalg::DenseMatrix sigma_hat;
  linalg::DenseMatrix sigma_m_mat;
  BoundTerms bound;
  double rho_hat = 0.0;
  double w_gamma = 0.0;
  std::vector<ResidualEntry> residuals;
  std::optional<double> gerror;

  nlohmann::json to_json() const;
  // (term, value, comparator, status) rows for the console.
  std::string human_table() const;
};

}  // namespace subpop::theory
