#include "subpop/mixing.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace subpop::mixing {

void MixPolicy::validate(std::size_t d) const {
  std::string problems;
  auto complain = [&problems](const std::string& msg) {
    if (!problems.empty()) problems += "; ";
    problems += msg;
  };
  if (!(alpha > 0.0)) complain("alpha must be > 0");
  if (!(beta > 0.0)) complain("beta must be > 0");
  if (!(sigma >= 0.0 && sigma <= 1.0)) complain("sigma must be in [0,1]");
  if (grid && grid->first * grid->second != d)
    complain("grid " + std::to_string(grid->first) + "x" + std::to_string(grid->second) +
             " does not flatten to d=" + std::to_string(d));
  if (grid && mode == MixMode::vanilla) complain("grid only applies to cutmask mode");
  if (!problems.empty()) throw std::invalid_argument("MixPolicy: " + problems);
}

double sample_lambda(const MixPolicy& policy, rng::SplitMix64& gen) {
  return gen.beta(policy.alpha, policy.beta);
}

std::vector<double> sample_mask(const MixPolicy& policy, double lambda, std::size_t d,
                                rng::SplitMix64& gen) {
  if (d == 0) throw std::invalid_argument("sample_mask: d must be > 0");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("sample_mask: lambda must be in [0,1]");

  if (policy.mode == MixMode::vanilla) return std::vector<double>(d, lambda);

  std::vector<double> mask(d, 0.0);
  if (!policy.grid) {
    const std::size_t ones =
        static_cast<std::size_t>(std::llround(lambda * static_cast<double>(d)));
    // Partial Fisher-Yates: pick `ones` distinct coordinates uniformly.
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < ones; ++k) {
      const std::size_t j = k + gen.next_below(d - k);
      std::swap(idx[k], idx[j]);
      mask[idx[k]] = 1.0;
    }
    return mask;
  }

  const std::size_t H = policy.grid->first, W = policy.grid->second;
  const double side = std::sqrt(lambda);
  // llround rounds halves away from zero, i.e. toward the larger box.
  const std::size_t h =
      std::min<std::size_t>(H, static_cast<std::size_t>(std::llround(side * static_cast<double>(H))));
  const std::size_t w =
      std::min<std::size_t>(W, static_cast<std::size_t>(std::llround(side * static_cast<double>(W))));
  if (h == 0 || w == 0) return mask;
  const std::size_t top = gen.next_below(H - h + 1);
  const std::size_t left = gen.next_below(W - w + 1);
  for (std::size_t r = top; r < top + h; ++r)
    for (std::size_t c = left; c < left + w; ++c) mask[r * W + c] = 1.0;
  return mask;
}

MixDraw draw_mix(const MixPolicy& policy, std::size_t d, rng::SplitMix64& gen) {
  MixDraw out;
  const double nominal = sample_lambda(policy, gen);
  out.mask = sample_mask(policy, nominal, d, gen);
  if (policy.mode == MixMode::vanilla) {
    out.lambda = nominal;
  } else {
    double s = 0.0;
    for (double m : out.mask) s += m;
    out.lambda = s / static_cast<double>(d);
  }
  return out;
}

std::vector<double> mix_inputs(const std::vector<double>& mask, const double* xi, const double* xj) {
  std::vector<double> out(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k)
    out[k] = mask[k] * xi[k] + (1.0 - mask[k]) * xj[k];
  return out;
}

std::vector<double> mix_labels(double lambda, int y_i, int y_j, int class_count) {
  if (y_i < 0 || y_i >= class_count || y_j < 0 || y_j >= class_count)
    throw std::invalid_argument("mix_labels: label out of range");
  std::vector<double> out(static_cast<std::size_t>(class_count), 0.0);
  out[static_cast<std::size_t>(y_i)] += lambda;
  out[static_cast<std::size_t>(y_j)] += 1.0 - lambda;
  return out;
}

LambdaTildeDraw sample_lambda_tilde(double alpha, double beta, rng::SplitMix64& gen) {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("sample_lambda_tilde: alpha and beta must be > 0");
  LambdaTildeDraw out;
  out.branch = gen.next_double() < alpha / (alpha + beta) ? 1 : 0;
  out.lambda = out.branch == 1 ? gen.beta(alpha + 1.0, beta) : gen.beta(alpha, beta + 1.0);
  return out;
}

namespace {
double beta_mean(double a, double b) { return a / (a + b); }
double beta_sq(double a, double b) { return a * (a + 1.0) / ((a + b) * (a + b + 1.0)); }
double beta_one_minus_sq(double a, double b) { return b * (b + 1.0) / ((a + b) * (a + b + 1.0)); }
}  // namespace

LambdaTildeMoments lambda_tilde_moments(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("lambda_tilde_moments: alpha and beta must be > 0");
  const double p = alpha / (alpha + beta);
  LambdaTildeMoments m;
  m.mean = p * beta_mean(alpha + 1.0, beta) + (1.0 - p) * beta_mean(alpha, beta + 1.0);
  const double second =
      p * beta_sq(alpha + 1.0, beta) + (1.0 - p) * beta_sq(alpha, beta + 1.0);
  m.e_one_minus_sq = p * beta_one_minus_sq(alpha + 1.0, beta) +
                     (1.0 - p) * beta_one_minus_sq(alpha, beta + 1.0);
  m.var = second - m.mean * m.mean;
  return m;
}

}  // namespace subpop::mixing
