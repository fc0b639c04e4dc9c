#pragma once

#include <cstdint>
#include <random>

namespace hvae {

// Seeded random source. Every sampler in the library draws from one of
// these; identical seeds give bit-identical streams. Distributions are
// implemented here rather than taken from <random> so the stream does not
// depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1), 53 random mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe to pass through log().
  double uniform_positive() { return 1.0 - uniform(); }

  // Standard normal via Box-Muller (no cached spare).
  double normal();

  // Gamma(alpha, 1), alpha > 0. Marsaglia-Tsang squeeze for alpha >= 1 and
  // the U^{1/alpha} boost below it.
  double gamma(double alpha);

  // Beta(alpha, alpha) as G1 / (G1 + G2) from two gamma draws.
  double beta_symmetric(double alpha);

  // Derive an independent stream, e.g. per example or per worker.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace hvae
