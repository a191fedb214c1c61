#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "subpop/rng.hpp"

namespace subpop::mixing {

enum class MixMode { vanilla, cutmask };

// Unified mixing policy. vanilla fills the mask with the scalar lambda;
// cutmask draws a binary mask — a uniformly placed coordinate subset, or a
// box when a [H, W] grid shape is supplied (grid H*W must equal d).
struct MixPolicy {
  MixMode mode = MixMode::vanilla;
  double alpha = 1.0;
  double beta = 1.0;
  double sigma = 1.0;  // probability that a pair is mixed at all
  std::optional<std::pair<std::size_t, std::size_t>> grid;

  // Throws listing every violation (alpha/beta positive, sigma in [0,1],
  // grid product == d when present).
  void validate(std::size_t d) const;
};

struct MixDraw {
  double lambda = 1.0;        // realized mixing proportion (mask mean for cutmask)
  std::vector<double> mask;   // length d
};

// Beta(alpha, beta) draw in the open interval (0,1).
double sample_lambda(const MixPolicy& policy, rng::SplitMix64& gen);

// Mask for a given lambda. cutmask without a grid places exactly
// round(lambda*d) ones uniformly; with a grid it places a box with side
// lengths round(sqrt(lambda)*H) x round(sqrt(lambda)*W) (ties round toward
// the larger area) at a uniform position, flattened row-major.
std::vector<double> sample_mask(const MixPolicy& policy, double lambda, std::size_t d,
                                rng::SplitMix64& gen);

// sample_lambda + sample_mask; for cutmask the recorded lambda is the realized
// mask mean so that label mixing uses the realized proportion.
MixDraw draw_mix(const MixPolicy& policy, std::size_t d, rng::SplitMix64& gen);

// mask ⊙ x_i + (1 - mask) ⊙ x_j
std::vector<double> mix_inputs(const std::vector<double>& mask, const double* xi, const double* xj);

// lambda * onehot(y_i) + (1 - lambda) * onehot(y_j) over class_count classes.
std::vector<double> mix_labels(double lambda, int y_i, int y_j, int class_count);

struct LambdaTildeDraw {
  double lambda = 0.0;
  int branch = 0;  // 1 with probability alpha/(alpha+beta)
};

// Conjugate two-component decomposition of Beta(alpha, beta): branch ~
// Bernoulli(alpha/(alpha+beta)); lambda ~ Beta(alpha+1, beta) on branch 1,
// Beta(alpha, beta+1) on branch 0.
LambdaTildeDraw sample_lambda_tilde(double alpha, double beta, rng::SplitMix64& gen);

struct LambdaTildeMoments {
  double mean = 0.0;            // lambda_bar
  double e_one_minus_sq = 0.0;  // E[(1-lambda)^2]
  double var = 0.0;
};

// Closed-form moments of the sample_lambda_tilde marginal (mixture of the two
// conjugate components).
LambdaTildeMoments lambda_tilde_moments(double alpha, double beta);

}  // namespace subpop::mixing
