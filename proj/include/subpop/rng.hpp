#pragma once

#include <cstdint>

namespace subpop::rng {

// SplitMix64 finalizer: bijective avalanche mix of a 64-bit word.
std::uint64_t mix64(std::uint64_t z);

// Counter-based 64-bit generator (SplitMix64). The state is a plain counter
// advanced by a fixed odd increment; every output is mix64(counter), so
// seeding and stream-splitting are cheap and order-independent.
class SplitMix64 {
 public:
  SplitMix64() : state_(0) {}
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_double();

  // Uniform integer in [0, n), unbiased (rejection). n must be > 0.
  std::uint64_t next_below(std::uint64_t n);

  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (sine partner discarded: keeps the
  // draw count per call fixed, which matters for reproducible streams).
  double normal();

  // Gamma(shape, 1). Marsaglia-Tsang squeeze for shape >= 1, with the
  // U^(1/shape) boost below 1. shape must be > 0.
  double gamma(double shape);

  // Beta(a, b) as a ratio of two Gammas, clamped into the open interval.
  double beta(double a, double b);

 private:
  std::uint64_t state_;
};

// Independent substream for (seed, stream). Used to give each Monte-Carlo
// shard / run its own generator without coordinating draw counts.
SplitMix64 derive_stream(std::uint64_t seed, std::uint64_t stream);

}  // namespace subpop::rng
