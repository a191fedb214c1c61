#include "subpop/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "subpop/rng.hpp"

namespace subpop::theory {

namespace {

void check_weights(const data::LabeledDataset& ds, const std::vector<double>& w) {
  if (w.size() != ds.n) throw std::invalid_argument("weights: one per sample required");
  for (double v : w)
    if (!(v > 0.0)) throw std::invalid_argument("weights must be positive");
}

linalg::DenseMatrix hadamard(const linalg::DenseMatrix& a, const linalg::DenseMatrix& b) {
  linalg::DenseMatrix out = a;
  for (std::size_t k = 0; k < out.data().size(); ++k) out.data()[k] *= b.data()[k];
  return out;
}

// Cumulative-weight index sampler for the weighted empirical distribution.
class WeightedSampler {
 public:
  explicit WeightedSampler(const std::vector<double>& w) : cdf_(w.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      cdf_[i] = acc;
    }
    total_ = acc;
  }
  std::size_t sample(rng::SplitMix64& gen) const {
    const double u = gen.next_double() * total_;
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
  double total_ = 0.0;
};

}  // namespace

linalg::DenseMatrix weighted_covariance(const data::LabeledDataset& ds,
                                        const std::vector<double>& w) {
  if (ds.n == 0) throw std::invalid_argument("weighted_covariance: empty dataset");
  check_weights(ds, w);
  linalg::DenseMatrix sigma(ds.d, ds.d, 0.0);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double* x = ds.row(i);
    for (std::size_t a = 0; a < ds.d; ++a) {
      const double wx = w[i] * x[a];
      for (std::size_t b = 0; b < ds.d; ++b) sigma(a, b) += wx * x[b];
    }
  }
  const double inv = 1.0 / static_cast<double>(ds.n);
  for (double& v : sigma.data()) v *= inv;
  return sigma;
}

MaskMoments mask_second_moments(const mixing::MixPolicy& policy, std::size_t d, std::size_t n_mc,
                                std::uint64_t seed, parallel::ExecMode mode) {
  policy.validate(d);
  if (n_mc == 0) throw std::invalid_argument("mask_second_moments: n_mc must be > 0");

  const int shards = parallel::kShardCount;
  const bool vanilla = policy.mode == mixing::MixMode::vanilla;

  // vanilla: scalar sums of (1-l)^2, l, l^2; cutmask: full matrices + mean vector
  std::vector<double> one_minus_sq(shards, 0.0), lam(shards, 0.0), lam_sq(shards, 0.0);
  std::vector<linalg::DenseMatrix> outer0(vanilla ? 0 : shards);
  std::vector<linalg::DenseMatrix> outer1(vanilla ? 0 : shards);
  std::vector<std::vector<double>> mean_mask(vanilla ? 0 : shards);

  parallel::for_each_shard(shards, mode, [&](int s) {
    rng::SplitMix64 gen = rng::derive_stream(seed, static_cast<std::uint64_t>(s));
    const long long quota = parallel::shard_quota(static_cast<long long>(n_mc), shards, s);
    if (!vanilla) {
      outer0[s] = linalg::DenseMatrix(d, d, 0.0);
      outer1[s] = linalg::DenseMatrix(d, d, 0.0);
      mean_mask[s].assign(d, 0.0);
    }
    for (long long t = 0; t < quota; ++t) {
      const double l = mixing::sample_lambda_tilde(policy.alpha, policy.beta, gen).lambda;
      if (vanilla) {
        one_minus_sq[s] += (1.0 - l) * (1.0 - l);
        lam[s] += l;
        lam_sq[s] += l * l;
      } else {
        const std::vector<double> m = mixing::sample_mask(policy, l, d, gen);
        for (std::size_t a = 0; a < d; ++a) {
          mean_mask[s][a] += m[a];
          for (std::size_t b = 0; b < d; ++b) {
            outer0[s](a, b) += (1.0 - m[a]) * (1.0 - m[b]);
            outer1[s](a, b) += m[a] * m[b];
          }
        }
      }
    }
  });

  const double inv = 1.0 / static_cast<double>(n_mc);
  MaskMoments out;
  if (vanilla) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (int s = 0; s < shards; ++s) {  // fixed-order combine
      s0 += one_minus_sq[s];
      s1 += lam[s];
      s2 += lam_sq[s];
    }
    const double e_oms = s0 * inv;
    const double var = s2 * inv - (s1 * inv) * (s1 * inv);
    out.e_one_minus_outer = linalg::DenseMatrix(d, d, e_oms);
    out.cov_mask = linalg::DenseMatrix(d, d, var);
  } else {
    linalg::DenseMatrix m0(d, d, 0.0), m1(d, d, 0.0);
    std::vector<double> mm(d, 0.0);
    for (int s = 0; s < shards; ++s) {
      m0 = linalg::add(m0, outer0[s]);
      m1 = linalg::add(m1, outer1[s]);
      for (std::size_t a = 0; a < d; ++a) mm[a] += mean_mask[s][a];
    }
    out.e_one_minus_outer = linalg::scale(m0, inv);
    out.cov_mask = linalg::scale(m1, inv);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        out.cov_mask(a, b) -= (mm[a] * inv) * (mm[b] * inv);
  }
  return out;
}

linalg::DenseMatrix sigma_m(const linalg::DenseMatrix& sigma, const mixing::MixPolicy& policy,
                            std::size_t n_mc, std::uint64_t seed, parallel::ExecMode mode) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("sigma_m: sigma must be square");
  const MaskMoments mom = mask_second_moments(policy, sigma.rows(), n_mc, seed, mode);
  return hadamard(mom.e_one_minus_outer, sigma);
}

BoundTerms bound_terms(const linalg::DenseMatrix& sigma, const linalg::DenseMatrix& sigma_m_mat) {
  if (sigma.rows() != sigma.cols() || sigma_m_mat.rows() != sigma_m_mat.cols() ||
      sigma.rows() != sigma_m_mat.rows())
    throw std::invalid_argument("bound_terms: shape mismatch");
  BoundTerms out;
  out.sqrt_d = std::sqrt(static_cast<double>(sigma.rows()));
  const linalg::PinvResult pinv_m = pinv_rank(sigma_m_mat);
  const double tr = linalg::trace(linalg::matmul(pinv_m.pinv, sigma));
  out.trace_term = std::sqrt(std::max(0.0, tr));
  out.rank_term = static_cast<double>(pinv_rank(sigma).rank);
  return out;
}

double estimate_rho(const data::LabeledDataset& ds, std::size_t n_dirs, std::uint64_t seed,
                    parallel::ExecMode mode) {
  if (ds.n == 0) throw std::invalid_argument("estimate_rho: empty dataset");
  if (n_dirs == 0) throw std::invalid_argument("estimate_rho: n_dirs must be > 0");
  bool any_nonzero = false;
  for (double v : ds.features)
    if (v != 0.0) {
      any_nonzero = true;
      break;
    }
  if (!any_nonzero) throw std::invalid_argument("estimate_rho: features are identically zero");

  // Directions are generated once so the shard split cannot change them.
  const double norms[4] = {0.1, 0.3, 1.0, 3.0};
  rng::SplitMix64 gen(seed);
  std::vector<std::vector<double>> dirs;
  dirs.reserve(n_dirs * 4);
  for (std::size_t k = 0; k < n_dirs; ++k) {
    std::vector<double> unit(ds.d);
    double norm_sq = 0.0;
    do {
      norm_sq = 0.0;
      for (std::size_t a = 0; a < ds.d; ++a) {
        unit[a] = gen.normal();
        norm_sq += unit[a] * unit[a];
      }
    } while (norm_sq == 0.0);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double scale : norms) {
      std::vector<double> v(ds.d);
      for (std::size_t a = 0; a < ds.d; ++a) v[a] = unit[a] * inv * scale;
      dirs.push_back(std::move(v));
    }
  }

  std::vector<double> ratio(dirs.size(), 0.0);
  const int shards = std::min<int>(parallel::kShardCount, static_cast<int>(dirs.size()));
  parallel::for_each_shard(shards, mode, [&](int s) {
    for (std::size_t k = static_cast<std::size_t>(s); k < dirs.size();
         k += static_cast<std::size_t>(shards)) {
      const std::vector<double>& v = dirs[k];
      double mean_a2 = 0.0, mean_sq = 0.0;
      for (std::size_t i = 0; i < ds.n; ++i) {
        const double* x = ds.row(i);
        double z = 0.0;
        for (std::size_t a = 0; a < ds.d; ++a) z += x[a] * v[a];
        mean_a2 += models::glm_a2(z);
        mean_sq += z * z;
      }
      mean_a2 /= static_cast<double>(ds.n);
      mean_sq /= static_cast<double>(ds.n);
      const double den = std::min(1.0, mean_sq);
      ratio[k] = den > 0.0 ? mean_a2 * mean_a2 / den
                           : std::numeric_limits<double>::infinity();
    }
  });
  double rho = std::numeric_limits<double>::infinity();
  for (double r : ratio) rho = std::min(rho, r);
  if (!std::isfinite(rho))
    throw std::runtime_error("estimate_rho: every sampled direction was degenerate");
  return rho;
}

ResidualResult regularizer_residual(const data::LabeledDataset& ds, const std::vector<double>& w,
                                    const std::vector<double>& theta,
                                    const mixing::MixPolicy& policy, std::size_t n_mc,
                                    std::uint64_t seed, parallel::ExecMode mode) {
  if (ds.n == 0) throw std::invalid_argument("regularizer_residual: empty dataset");
  if (ds.class_count != 2)
    throw std::invalid_argument("regularizer_residual: binary GLM analysis needs 2 classes");
  if (theta.size() != ds.d) throw std::invalid_argument("regularizer_residual: theta size mismatch");
  check_weights(ds, w);
  policy.validate(ds.d);
  if (n_mc < 1000)
    throw std::invalid_argument("regularizer_residual: n_mc must be at least 1000");

  // The expansion is around the weighted empirical mean, so the caller must
  // have centered the features under these weights.
  {
    double total_w = 0.0;
    std::vector<double> mean(ds.d, 0.0);
    for (std::size_t i = 0; i < ds.n; ++i) {
      total_w += w[i];
      const double* x = ds.row(i);
      for (std::size_t a = 0; a < ds.d; ++a) mean[a] += w[i] * x[a];
    }
    double norm = 0.0;
    for (double m : mean) norm += (m / total_w) * (m / total_w);
    if (std::sqrt(norm) > 1e-6)
      throw std::invalid_argument(
          "regularizer_residual: dataset must be centered under the supplied weights");
  }

  const mixing::LambdaTildeMoments mom = mixing::lambda_tilde_moments(policy.alpha, policy.beta);
  const double lambda_bar = mom.mean;
  const bool vanilla = policy.mode == mixing::MixMode::vanilla;

  // Per-sample precomputation at theta.
  std::vector<double> z(ds.n), base_l(ds.n), sig(ds.n), a2(ds.n);
  double base_loss = 0.0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double* x = ds.row(i);
    double zi = 0.0;
    for (std::size_t a = 0; a < ds.d; ++a) zi += x[a] * theta[a];
    z[i] = zi;
    base_l[i] = models::glm_partition(zi) - static_cast<double>(ds.labels[i]) * zi;
    sig[i] = models::glm_sigmoid(zi);
    a2[i] = models::glm_a2(zi);
    base_loss += w[i] * base_l[i];
  }
  base_loss /= static_cast<double>(ds.n);

  const WeightedSampler partner(w);
  const int shards = parallel::kShardCount;
  std::vector<double> sum_diff(shards, 0.0), sum_diff_sq(shards, 0.0), sum_quad(shards, 0.0),
      sum_v(shards, 0.0), sum_oms(shards, 0.0);

  parallel::for_each_shard(shards, mode, [&](int s) {
    rng::SplitMix64 gen = rng::derive_stream(seed, static_cast<std::uint64_t>(s));
    const long long quota = parallel::shard_quota(static_cast<long long>(n_mc), shards, s);
    std::vector<double> mask;
    for (long long t = 0; t < quota; ++t) {
      const std::size_t i = static_cast<std::size_t>(gen.next_below(ds.n));
      const std::size_t j = partner.sample(gen);
      const double l = mixing::sample_lambda_tilde(policy.alpha, policy.beta, gen).lambda;

      double delta;  // (x^ - x_i)' theta with x^ = (M⊙x_i + (1-M)⊙x_j)/lambda_bar
      double realized_oms;
      if (vanilla) {
        delta = (l / lambda_bar - 1.0) * z[i] + ((1.0 - l) / lambda_bar) * z[j];
        realized_oms = (1.0 - l) * (1.0 - l);
      } else {
        mask = mixing::sample_mask(policy, l, ds.d, gen);
        const double* xi = ds.row(i);
        const double* xj = ds.row(j);
        double zhat = 0.0, mask_mean = 0.0;
        for (std::size_t a = 0; a < ds.d; ++a) {
          zhat += (mask[a] * xi[a] + (1.0 - mask[a]) * xj[a]) * theta[a];
          mask_mean += mask[a];
        }
        delta = zhat / lambda_bar - z[i];
        const double one_minus = 1.0 - mask_mean / static_cast<double>(ds.d);
        realized_oms = one_minus * one_minus;
      }

      const double zhat = z[i] + delta;
      const double y = static_cast<double>(ds.labels[i]);
      const double v = w[i] * (models::glm_partition(zhat) - y * zhat);
      const double quad_piece = 0.5 * w[i] * a2[i] * delta * delta;
      const double c = w[i] * (base_l[i] + (sig[i] - y) * delta) + quad_piece;
      const double diff = v - c;

      sum_diff[s] += diff;
      sum_diff_sq[s] += diff * diff;
      sum_quad[s] += quad_piece;
      sum_v[s] += v;
      sum_oms[s] += realized_oms;
    }
  });

  double d_sum = 0.0, d_sq = 0.0, q_sum = 0.0, v_sum = 0.0, oms_sum = 0.0;
  for (int s = 0; s < shards; ++s) {  // fixed-order combine
    d_sum += sum_diff[s];
    d_sq += sum_diff_sq[s];
    q_sum += sum_quad[s];
    v_sum += sum_v[s];
    oms_sum += sum_oms[s];
  }
  const double inv = 1.0 / static_cast<double>(n_mc);
  const double mean_diff = d_sum * inv;
  const double var_diff = std::max(0.0, d_sq * inv - mean_diff * mean_diff);

  ResidualResult out;
  out.residual = std::fabs(mean_diff);
  out.se = std::sqrt(var_diff * inv);
  out.e_one_minus_lambda_sq = vanilla ? mom.e_one_minus_sq : oms_sum * inv;
  out.mc_loss = v_sum * inv;
  out.base_loss = base_loss;
  out.quad_term = q_sum * inv;
  return out;
}

double empirical_gerror(const models::Model& model, const data::LabeledDataset& train,
                        const data::LabeledDataset& test,
                        const std::vector<double>& group_weights) {
  if (!train.has_groups() || !test.has_groups())
    throw std::invalid_argument("empirical_gerror: both splits need group annotations");
  if (static_cast<int>(group_weights.size()) < std::max(train.group_count, test.group_count))
    throw std::invalid_argument("empirical_gerror: one weight per group required");

  auto weighted_mean_loss = [&](const data::LabeledDataset& ds) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) {
      const double wg = group_weights[static_cast<std::size_t>(ds.groups[i])];
      acc += wg * models::loss_grad(model, ds.row(i), ds.labels[i], 1.0).value;
    }
    return acc / static_cast<double>(ds.n);
  };
  return weighted_mean_loss(test) - weighted_mean_loss(train);
}

double w_gamma_value(const data::LabeledDataset& ds, const std::vector<double>& w,
                     const std::vector<double>& theta, const linalg::DenseMatrix& sigma_m_mat,
                     const MaskMoments& moments) {
  check_weights(ds, w);
  if (theta.size() != ds.d) throw std::invalid_argument("w_gamma_value: theta size mismatch");

  double mean_a2 = 0.0, var_term = 0.0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double* x = ds.row(i);
    double z = 0.0;
    for (std::size_t a = 0; a < ds.d; ++a) z += x[a] * theta[a];
    mean_a2 += w[i] * models::glm_a2(z);
    // theta' (Cov(M) ⊙ x x') theta
    double q = 0.0;
    for (std::size_t a = 0; a < ds.d; ++a) {
      const double ta = theta[a] * x[a];
      for (std::size_t b = 0; b < ds.d; ++b) q += ta * moments.cov_mask(a, b) * x[b] * theta[b];
    }
    var_term += w[i] * q;
  }
  const double n = static_cast<double>(ds.n);
  mean_a2 /= n;
  var_term /= n;
  return mean_a2 * (linalg::quadratic_form(sigma_m_mat, theta) + var_term);
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}
}  // namespace

nlohmann::json TheoryReport::to_json() const {
  auto matrix_json = [](const linalg::DenseMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  nlohmann::json j{
      {"n", n},
      {"d", d},
      {"n_mc", n_mc},
      {"shard_count", shard_count},
      {"policy", policy_label},
      {"lambda_bar", lambda_bar},
      {"e_one_minus_lambda_sq", e_one_minus_lambda_sq},
      {"sigma_hat", matrix_json(sigma_hat)},
      {"sigma_m", matrix_json(sigma_m_mat)},
      {"bound",
       {{"trace_term", bound.trace_term},
        {"rank_term", bound.rank_term},
        {"sqrt_d", bound.sqrt_d},
        {"sum", bound.trace_term + bound.rank_term}}},
      {"rho_hat", rho_hat},
      {"w_gamma_functional", w_gamma},
      {"constants",
       {{"L", "not estimated"},
        {"L_A", "not estimated"},
        {"B", "not estimated"},
        {"gamma", "not estimated"}}},
  };
  nlohmann::json res = nlohmann::json::array();
  for (const ResidualEntry& e : residuals) {
    res.push_back({{"label", e.label},
                   {"residual", e.result.residual},
                   {"se", e.result.se},
                   {"e_one_minus_lambda_sq", e.result.e_one_minus_lambda_sq},
                   {"ratio", e.result.e_one_minus_lambda_sq > 0.0
                                 ? e.result.residual / e.result.e_one_minus_lambda_sq
                                 : 0.0},
                   {"mc_loss", e.result.mc_loss},
                   {"base_loss", e.result.base_loss},
                   {"quad_term", e.result.quad_term}});
  }
  j["residuals"] = std::move(res);
  j["gerror"] = gerror ? nlohmann::json(*gerror) : nlohmann::json(nullptr);
  return j;
}

std::string TheoryReport::human_table() const {
  std::ostringstream out;
  out << "term                      value          comparator           status\n";
  out << "------------------------  -------------  -------------------  ------\n";
  const double sum = bound.trace_term + bound.rank_term;
  out << "trace_term + rank_term    " << fmt(sum) << "  vs sqrt(d) = " << fmt(bound.sqrt_d)
      << "    " << (sum < bound.sqrt_d ? "ok" : "above") << "\n";
  out << "rho_hat                   " << fmt(rho_hat) << "  > 0                  "
      << (rho_hat > 0.0 ? "ok" : "FAIL") << "\n";
  out << "w_gamma(theta)            " << fmt(w_gamma) << "  (report only)        -\n";
  double prev_ratio = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (const ResidualEntry& e : residuals) {
    const double ratio = e.result.e_one_minus_lambda_sq > 0.0
                             ? e.result.residual / e.result.e_one_minus_lambda_sq
                             : 0.0;
    const bool noise_floor = e.result.residual <= 3.0 * e.result.se;
    out << "residual " << e.label << "   " << fmt(e.result.residual) << "  3*SE = "
        << fmt(3.0 * e.result.se) << "     " << (noise_floor ? "noise" : "resolved") << "\n";
    if (ratio > prev_ratio + 1e-12) monotone = false;
    prev_ratio = ratio;
  }
  if (residuals.size() > 1)
    out << "residual/E[(1-l)^2]       ladder         non-increasing       "
        << (monotone ? "ok" : "FAIL") << "\n";
  if (gerror) out << "gerror                    " << fmt(*gerror) << "  (report only)        -\n";
  return out.str();
}

}  // namespace subpop::theory
