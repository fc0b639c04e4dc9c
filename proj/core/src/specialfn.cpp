#include "hvae/specialfn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hvae::specialfn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// The power series costs O(kappa) terms but cannot overflow in log space,
// so it carries everything up to a comfortably large cutoff and the
// asymptotic expansion only has to be good beyond it.
constexpr double kSeriesCutoff = 600.0;

// Terms this far below the running maximum no longer move the sum.
constexpr double kSeriesLogTolerance = 36.0;

void check_inputs(double v, double kappa) {
  if (std::isnan(v) || std::isnan(kappa)) {
    throw std::domain_error("log_bessel_i: NaN input");
  }
  if (v < 0.0) {
    throw std::domain_error("log_bessel_i: order must be non-negative");
  }
  if (kappa < 0.0 || std::isinf(kappa) || std::isinf(v)) {
    throw std::domain_error("log_bessel_i: kappa must be finite and non-negative");
  }
}

// Hankel large-argument expansion: I_v(k) ~ e^k / sqrt(2 pi k) * S where
// S = 1 - (mu-1)/(8k) + (mu-1)(mu-9)/(2!(8k)^2) - ..., mu = 4v^2.
// Truncates at the smallest term; only adequate when mu << 8k.
double log_bessel_hankel(double v, double kappa) {
  const double mu = 4.0 * v * v;
  double term = 1.0;
  double sum = 1.0;
  double prev_abs = std::numeric_limits<double>::max();
  for (int k = 1; k <= 40; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * kappa * k);
    if (std::abs(term) >= prev_abs) break;  // divergent tail reached
    sum += term;
    prev_abs = std::abs(term);
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return kappa - 0.5 * std::log(2.0 * std::numbers::pi * kappa) + std::log(sum);
}

// Olver's uniform expansion for large order: with z = kappa / v,
// p = (1+z^2)^{-1/2}, eta = sqrt(1+z^2) + log(z / (1 + sqrt(1+z^2))),
// I_v(kappa) ~ e^{v eta} / (sqrt(2 pi v) (1+z^2)^{1/4}) * sum_k U_k(p)/v^k.
double log_bessel_uniform(double v, double kappa) {
  const double z = kappa / v;
  const double r = std::hypot(1.0, z);  // sqrt(1+z^2)
  const double p = 1.0 / r;
  const double eta = r + std::log(z / (1.0 + r));

  const double p2 = p * p;
  const double u1 = p * (3.0 - 5.0 * p2) / 24.0;
  const double u2 = p2 * (81.0 + p2 * (-462.0 + 385.0 * p2)) / 1152.0;
  const double u3 =
      p * p2 * (30375.0 + p2 * (-369603.0 + p2 * (765765.0 - 425425.0 * p2))) / 414720.0;
  const double u4 = p2 * p2 *
                    (4465125.0 +
                     p2 * (-94121676.0 +
                           p2 * (349922430.0 + p2 * (-446185740.0 + 185910725.0 * p2)))) /
                    39813120.0;

  const double correction = 1.0 + ((((u4 / v) + u3) / v + u2) / v + u1) / v;
  return v * eta - 0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * std::log(r) +
         std::log(correction);
}

}  // namespace

double LogDomainValue::value() const {
  if (is_zero()) return 0.0;
  if (log_value >= std::log(std::numeric_limits<double>::max())) {
    return std::numeric_limits<double>::max();
  }
  return std::exp(log_value);
}

double series_cutoff() { return kSeriesCutoff; }

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

namespace detail {

// log I_v(kappa) = logsumexp_m [(2m+v) log(kappa/2) - lgamma(m+1) - lgamma(m+v+1)].
// Terms rise to a peak near m = kappa/2 and then decay factorially; the sum
// stops once a term drops kSeriesLogTolerance below the running maximum on
// the decaying side.
double log_bessel_i_series(double v, double kappa) {
  const double log_half_kappa = std::log(0.5 * kappa);
  double max_log = kNegInf;
  double acc = 0.0;  // sum of exp(log_term - max_log)
  double prev_log = kNegInf;
  for (int m = 0; m < 100000; ++m) {
    const double log_term =
        (2.0 * m + v) * log_half_kappa - std::lgamma(m + 1.0) - std::lgamma(m + v + 1.0);
    if (log_term > max_log) {
      acc = acc * std::exp(max_log - log_term) + 1.0;
      max_log = log_term;
    } else {
      acc += std::exp(log_term - max_log);
      if (log_term < prev_log && log_term < max_log - kSeriesLogTolerance) break;
    }
    prev_log = log_term;
  }
  return max_log + std::log(acc);
}

double log_bessel_i_asymptotic(double v, double kappa) {
  // Hankel needs mu = 4v^2 small against 8 kappa; past that the uniform
  // expansion in the order takes over.
  if (v < 15.0) return log_bessel_hankel(v, kappa);
  return log_bessel_uniform(v, kappa);
}

}  // namespace detail

LogDomainValue log_bessel_i(double v, double kappa) {
  check_inputs(v, kappa);
  if (kappa == 0.0) {
    return v == 0.0 ? LogDomainValue::from_log(0.0) : LogDomainValue::zero();
  }
  if (kappa <= kSeriesCutoff) {
    return LogDomainValue::from_log(detail::log_bessel_i_series(v, kappa));
  }
  return LogDomainValue::from_log(detail::log_bessel_i_asymptotic(v, kappa));
}

double bessel_ratio(int d, double kappa) {
  if (d < 2) throw std::domain_error("bessel_ratio: dimension must be >= 2");
  if (!(kappa > 0.0)) throw std::domain_error("bessel_ratio: kappa must be positive");
  const double half_d = 0.5 * d;
  const double log_ratio =
      log_bessel_i(half_d, kappa).log_value - log_bessel_i(half_d - 1.0, kappa).log_value;
  double ratio = std::exp(log_ratio);
  // Mathematically in (0,1); keep rounding at extreme kappa inside the
  // open interval.
  ratio = std::min(ratio, 1.0 - std::numeric_limits<double>::epsilon() / 2);
  ratio = std::max(ratio, std::numeric_limits<double>::min());
  return ratio;
}

LogDomainValue log_bessel_i_derivative(double v, double kappa) {
  if (!(v >= 1.0)) {
    throw std::domain_error("log_bessel_i_derivative: order must be >= 1");
  }
  check_inputs(v, kappa);
  const double lo = log_bessel_i(v - 1.0, kappa).log_value;
  const double hi = log_bessel_i(v + 1.0, kappa).log_value;
  if (lo == kNegInf && hi == kNegInf) return LogDomainValue::zero();
  return LogDomainValue::from_log(log_add_exp(lo, hi) - std::numbers::ln2);
}

double bessel_i_derivative(double v, double kappa) {
  return log_bessel_i_derivative(v, kappa).value();
}

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: argument must be positive");
  // Lanczos, g = 7, n = 9 (Godfrey's coefficients).
  static constexpr double g = 7.0;
  static constexpr double coeff[9] = {
      0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
      771.32342877765313,      -176.61502916214059,   12.507343278686905,
      -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // Reflection keeps the approximation on its accurate half-line.
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double sum = coeff[0];
  for (int i = 1; i < 9; ++i) sum += coeff[i] / (z + i);
  const double t = z + g + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(sum);
}

}  // namespace hvae::specialfn
