#pragma once

#include <string>
#include <vector>

// Built-in self-checks behind the `selftest` command: quick consistency
// sweeps a user can run on their own machine to confirm the numerics hold
// under the local compiler and libm.

namespace hvae::diagnostics {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;  // one line: worst statistic and its bound
};

// Three-term recurrence I_{v-1} = (2v/k) I_v + I_{v+1} across both
// evaluation branches, plus agreement of the two branches near the cutoff.
SuiteResult bessel_recurrence_suite();

// KS test of the sampler's change-magnitude marginal against a quadrature
// CDF, mean alignment against the analytic ratio, and unit norms.
SuiteResult sampler_ks_suite();

// Finite-difference sweeps over every tape primitive, the reparameterized
// draw, and both trainers end to end on a toy vocabulary.
SuiteResult gradient_suite();

// All suites in a fixed order.
std::vector<SuiteResult> run_all();

}  // namespace hvae::diagnostics
