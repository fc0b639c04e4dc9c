#pragma once

#include <limits>

// Scalar kernels for the modified Bessel function of the first kind and
// log-gamma. All Bessel work happens in log space: I_v(k) grows like e^k
// and overflows doubles long before the concentrations this library uses.

namespace hvae::specialfn {

// Log of a non-negative quantity. -inf encodes log(0); never NaN.
struct LogDomainValue {
  double log_value = -std::numeric_limits<double>::infinity();

  static LogDomainValue from_log(double lv) { return LogDomainValue{lv}; }
  static LogDomainValue zero() { return LogDomainValue{}; }

  bool is_zero() const { return log_value == -std::numeric_limits<double>::infinity(); }

  // exp(log_value), saturating at the largest finite double on overflow.
  double value() const;
};

// log I_v(kappa), v >= 0, kappa >= 0.
// Power series in log space for kappa <= series_cutoff(), uniform asymptotic
// expansion above. Throws std::domain_error on negative or NaN input.
LogDomainValue log_bessel_i(double v, double kappa);

// Branch boundary between the log-space power series and the asymptotic
// expansion. Exposed for the branch-overlap tests.
double series_cutoff();

// Internal branch entry points, exposed so tests can drive each branch
// on both sides of the cutoff.
namespace detail {
double log_bessel_i_series(double v, double kappa);
double log_bessel_i_asymptotic(double v, double kappa);
}  // namespace detail

// A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa), strictly inside (0,1).
// Requires d >= 2 and kappa > 0 (callers own the kappa -> 0 limit).
double bessel_ratio(int d, double kappa);

// d/dkappa I_v(kappa) = (I_{v-1}(kappa) + I_{v+1}(kappa)) / 2, assembled by
// log-sum-exp. Requires v >= 1 so both neighbor orders are non-negative.
LogDomainValue log_bessel_i_derivative(double v, double kappa);

// Linear-domain convenience for the above, saturating on overflow.
double bessel_i_derivative(double v, double kappa);

// log Gamma(x) for x > 0 via a Lanczos approximation (g = 7, 9 terms).
double log_gamma(double x);

// log(e^a + e^b) without intermediate overflow.
double log_add_exp(double a, double b);

}  // namespace hvae::specialfn
