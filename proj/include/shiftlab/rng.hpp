#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace shiftlab {

// FNV-1a 64-bit string hash. Non-cryptographic; used to turn names into
// stream keys and file bytes into manifest content hashes.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic named RNG streams on SplitMix64 (Steele/Lea/Vigna, public
// domain). One generator everywhere so identical (seed, keys...) produce
// identical draws on every platform; samplers below are hand-rolled because
// std::*_distribution algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x6a09e667f3bcc908ULL)) {}

  // Derive an independent stream addressed by (seed, key0, key1, ...).
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) : Rng(seed) {
    for (std::uint64_t k : keys) state_ = mix(state_ ^ mix(k + kGamma));
  }

  std::uint64_t next() {
    state_ += kGamma;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection below the first multiple of n.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t min = (0 - n) % n;
    std::uint64_t r;
    while ((r = next()) < min) {
    }
    return r % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller (uses two uniforms; no state caching so
  // draw counts stay predictable).
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double lognormal(double median, double sigma) {
    return std::exp(std::log(median) + sigma * normal());
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  // SplitMix64 output function.
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

// Stream purpose tags (stable across releases; changing one changes every
// downstream draw).
namespace stream {
inline constexpr std::uint64_t kTruth = fnv1a64("truth");
inline constexpr std::uint64_t kFeatureParams = fnv1a64("feature_params");
inline constexpr std::uint64_t kOutcome = fnv1a64("outcome");
inline constexpr std::uint64_t kExtractLag = fnv1a64("extract_lag");
inline constexpr std::uint64_t kBootstrap = fnv1a64("bootstrap");
inline constexpr std::uint64_t kSubsample = fnv1a64("subsample");
inline constexpr std::uint64_t kDrift = fnv1a64("drift");
}  // namespace stream

}  // namespace shiftlab
