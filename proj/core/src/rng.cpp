#include "hvae/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hvae {

double Rng::normal() {
  const double u1 = uniform_positive();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double alpha) {
  if (!(alpha > 0.0)) throw std::domain_error("Rng::gamma: alpha must be positive");
  if (alpha < 1.0) {
    const double boost = std::pow(uniform_positive(), 1.0 / alpha);
    return gamma(alpha + 1.0) * boost;
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, t;
    do {
      x = normal();
      t = 1.0 + c * x;
    } while (t <= 0.0);
    const double v = t * t * t;
    const double u = uniform_positive();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta_symmetric(double alpha) {
  const double g1 = gamma(alpha);
  const double g2 = gamma(alpha);
  return g1 / (g1 + g2);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over seed ^ stream; decorrelates nearby streams.
  std::uint64_t z = seed ^ (stream + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace hvae
