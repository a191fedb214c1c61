#include "subpop/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace subpop::rng {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

std::uint64_t SplitMix64::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double SplitMix64::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t SplitMix64::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_below: n must be > 0");
  // Rejection below the largest multiple of n, so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit || limit == 0) return x % n;
  }
}

double SplitMix64::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double SplitMix64::normal() {
  const double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
  const double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double SplitMix64::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    const double u = 1.0 - next_double();  // (0, 1]
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = 1.0 - next_double();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double SplitMix64::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  double r = x / (x + y);
  // Keep strictly inside (0,1): downstream log/mask code assumes the open interval.
  if (!(r > 0.0)) r = std::numeric_limits<double>::min();
  if (!(r < 1.0)) r = std::nextafter(1.0, 0.0);
  return r;
}

SplitMix64 derive_stream(std::uint64_t seed, std::uint64_t stream) {
  return SplitMix64(mix64(seed + kGolden * (stream + 1)));
}

}  // namespace subpop::rng
