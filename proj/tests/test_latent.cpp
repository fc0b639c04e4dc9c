#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "hvae/errors.hpp"
#include "hvae/latent.hpp"
#include "hvae/specialfn.hpp"
#include "support/checks.hpp"
#include "support/gradcheck.hpp"

using namespace hvae;
using namespace hvae::latent;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

UnitVector basis_vector(int d) {
  UnitVector mu;
  mu.components.assign(static_cast<std::size_t>(d), 0.0);
  mu.components[0] = 1.0;
  return mu;
}

}  // namespace

TEST_CASE("unit vectors normalize and validate") {
  UnitVector v = UnitVector::normalized({3.0, 4.0});
  CHECK(v.components[0] == doctest::Approx(0.6));
  CHECK(v.components[1] == doctest::Approx(0.8));
  CHECK(v.dim() == 2);
  v.validate();

  CHECK_THROWS_AS(UnitVector::normalized({0.0, 0.0, 0.0}), NumericError);
  CHECK_THROWS_AS(UnitVector::normalized({1e-13, 0.0}), NumericError);

  UnitVector bad;
  bad.components = {1.0};  // dimension 1 is not a sphere here
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.components = {0.9, 0.1};  // norm far from 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("uniform density matches the sphere surface area") {
  CHECK(uniform_sphere_log_density(2) ==
        doctest::Approx(-1.8378770664093454836).epsilon(1e-13));
  CHECK(uniform_sphere_log_density(3) ==
        doctest::Approx(-2.5310242469692907930).epsilon(1e-13));
  CHECK(uniform_sphere_log_density(8) ==
        doctest::Approx(-3.4803072547294910052).epsilon(1e-13));
  CHECK(uniform_sphere_log_density(50) ==
        doctest::Approx(25.473335071317369527).epsilon(1e-13));
}

TEST_CASE("vmf log pdf matches references and the kappa = 0 limit") {
  VmfParams params;
  params.mu = basis_vector(5);
  params.kappa = 3.0;
  UnitVector x;
  x.components = {0.4, std::sqrt(1.0 - 0.16), 0.0, 0.0, 0.0};
  CHECK(vmf_log_pdf(params, x) ==
        doctest::Approx(-2.8780097037658036244).epsilon(1e-12));

  params.kappa = 0.0;
  CHECK(vmf_log_pdf(params, x) == doctest::Approx(uniform_sphere_log_density(5)));
}

TEST_CASE("kl against the uniform prior is exactly zero at kappa = 0") {
  for (int d = 2; d <= 200; ++d) {
    CHECK(vmf_kl_uniform(d, 0.0) == 0.0);
  }
}

TEST_CASE("kl matches references and increases with kappa") {
  CHECK(vmf_kl_uniform(3, 2.0) == doctest::Approx(0.47940924940087337112).epsilon(1e-12));
  CHECK(vmf_kl_uniform(8, 8.0) == doctest::Approx(2.0043781827037438634).epsilon(1e-12));
  CHECK(vmf_kl_uniform(8, 40.0) == doctest::Approx(6.6815915190118326492).epsilon(1e-12));
  CHECK(vmf_kl_uniform(16, 40.0) == doctest::Approx(8.9440234464110096131).epsilon(1e-12));
  CHECK(vmf_kl_uniform(2, 5.0) == doctest::Approx(1.1622339093978926741).epsilon(1e-12));
  CHECK(vmf_kl_uniform(200, 10.0) == doctest::Approx(0.24907680577862099402).epsilon(1e-12));
  CHECK(vmf_kl_uniform(25, 100.0) < vmf_kl_uniform(25, 150.0));

  for (int d : {2, 3, 8, 25, 200}) {
    double previous = 0.0;
    for (double kappa : {0.1, 0.5, 2.0, 10.0, 50.0, 250.0}) {
      const double kl = vmf_kl_uniform(d, kappa);
      CAPTURE(d);
      CAPTURE(kappa);
      CHECK(kl > previous);
      previous = kl;
    }
  }
}

TEST_CASE("kl kappa gradient matches references and finite differences") {
  CHECK(vmf_kl_kappa_gradient(3, 2.0) ==
        doctest::Approx(0.34795634032385780149).epsilon(1e-10));
  CHECK(vmf_kl_kappa_gradient(8, 40.0) ==
        doctest::Approx(0.081832188864420383491).epsilon(1e-10));
  CHECK(vmf_kl_kappa_gradient(2, 5.0) ==
        doctest::Approx(0.11594971518226099784).epsilon(1e-10));
  CHECK(vmf_kl_kappa_gradient(200, 10.0) ==
        doctest::Approx(0.049631720665348716882).epsilon(1e-10));

  // The d = 2 and d = 3 rows exercise the low-order branch of the
  // derivative assembly.
  for (int d : {2, 3, 4, 8, 25, 200}) {
    for (double kappa : {0.1, 0.5, 2.0, 10.0, 50.0, 250.0}) {
      const double h = 1e-5 * std::max(1.0, kappa);
      const double fd = (vmf_kl_uniform(d, kappa + h) - vmf_kl_uniform(d, kappa - h)) /
                        (2.0 * h);
      CAPTURE(d);
      CAPTURE(kappa);
      CHECK(vmf_kl_kappa_gradient(d, kappa) == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("uniform sphere samples are unit norm with centered mean") {
  Rng rng(5);
  const int n = 20000, d = 4;
  std::vector<double> mean(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const UnitVector z = sample_uniform_sphere(d, rng);
    double norm_sq = 0.0;
    for (int j = 0; j < d; ++j) {
      norm_sq += z.components[j] * z.components[j];
      mean[j] += z.components[j] / n;
    }
    REQUIRE(std::fabs(std::sqrt(norm_sq) - 1.0) < 1e-12);
  }
  for (int j = 0; j < d; ++j) {
    CHECK(std::fabs(mean[j]) < 4.0 / std::sqrt(static_cast<double>(n * d)));
  }
}

TEST_CASE("rejection sampler passes distribution checks at moderate scale") {
  for (const auto& [d, kappa] : std::vector<std::pair<int, double>>{
           {3, 10.0}, {10, 0.5}, {10, 10.0}, {50, 100.0}}) {
    CAPTURE(d);
    CAPTURE(kappa);
    const testsupport::SamplerCheck check =
        testsupport::check_sampler(d, kappa, 20000, 1234);
    CHECK(check.ks_stat < check.ks_critical);
    CHECK(check.mean_cos_gap_sigmas < 3.0);
    CHECK(check.worst_norm_gap < 1e-9);
  }
}

TEST_CASE("sampler handles kappa = 0 and records a faithful trace") {
  VmfParams params;
  params.mu = UnitVector::normalized({1.0, 2.0, -1.0});
  SUBCASE("uniform route") { params.kappa = 0.0; }
  SUBCASE("rejection route") { params.kappa = 7.5; }

  Rng rng(9);
  double mean_cos = 0.0;
  const int n = 5000;
  for (int i = 0; i < n; ++i) {
    RejectionSampleTrace trace;
    const UnitVector z = sample_vmf(params, rng, &trace);
    const double cos = dot(params.mu.components, z.components);
    CHECK(std::fabs(cos - trace.w) < 1e-9);
    CHECK(trace.proposals_used >= 1);
    mean_cos += cos / n;
  }
  if (params.kappa == 0.0) {
    CHECK(std::fabs(mean_cos) < 0.05);
  } else {
    CHECK(mean_cos > 0.5);
  }
}

TEST_CASE("reparameterized draw reproduces the pinned-noise composition") {
  const int d = 4;
  Tensor raw = Tensor::param({d}, "raw");
  raw.values_mutable() = {0.3, -1.2, 0.5, 2.0};

  FixedVmfNoise fixed;
  fixed.w = 0.83;
  fixed.epsilon = {0.1, -0.4, 1.3, 0.2};

  Tape tape;
  Rng untouched(0);
  Tensor mu_node = tape.l2_normalize(raw);
  Tensor z = latent::sample_vmf_reparameterized(tape, mu_node, 12.0, untouched,
                                                nullptr, &fixed);

  // Manual composition: z = w mu + sqrt(1-w^2) * unit tangent part of eps.
  const auto& mu = mu_node.values();
  const double overlap = dot(mu, fixed.epsilon);
  std::vector<double> tangent(d);
  double tangent_norm = 0.0;
  for (int i = 0; i < d; ++i) {
    tangent[i] = fixed.epsilon[i] - overlap * mu[i];
    tangent_norm += tangent[i] * tangent[i];
  }
  tangent_norm = std::sqrt(tangent_norm);
  double norm_sq = 0.0;
  for (int i = 0; i < d; ++i) {
    const double want =
        fixed.w * mu[i] + std::sqrt(1.0 - fixed.w * fixed.w) * tangent[i] / tangent_norm;
    CHECK(z.values()[i] == doctest::Approx(want).epsilon(1e-12));
    norm_sq += z.values()[i] * z.values()[i];
  }
  CHECK(std::sqrt(norm_sq) == doctest::Approx(1.0).epsilon(1e-12));
  tape.clear();
}

TEST_CASE("reparameterized gradients survive finite differences") {
  CHECK(testsupport::reparam_gradient_max_rel(6, 77) < 1e-4);
}

TEST_CASE("gaussian kl matches the closed form on and off the tape") {
  GaussianParams params;
  params.mu = {0.5, -1.0, 2.0};
  params.log_var = {0.0, 0.4, -0.8};
  double want = 0.0;
  for (int i = 0; i < 3; ++i) {
    want += 0.5 * (std::exp(params.log_var[i]) + params.mu[i] * params.mu[i] - 1.0 -
                   params.log_var[i]);
  }
  CHECK(gaussian_kl_standard(params) == doctest::Approx(want).epsilon(1e-12));

  Tape tape;
  Tensor mu = Tensor::from_values({3}, params.mu, true);
  Tensor lv = Tensor::from_values({3}, params.log_var, true);
  Tensor kl = gaussian_kl_node(tape, mu, lv);
  CHECK(kl.value() == doctest::Approx(want).epsilon(1e-12));
  tape.clear();

  GaussianParams zero;
  zero.mu = {0.0, 0.0};
  zero.log_var = {0.0, 0.0};
  CHECK(gaussian_kl_standard(zero) == 0.0);
}

TEST_CASE("gaussian kl and sampler gradients survive finite differences") {
  Tensor mu = Tensor::param({3}, "mu");
  Tensor lv = Tensor::param({3}, "lv");
  mu.values_mutable() = {0.5, -1.0, 2.0};
  lv.values_mutable() = {0.0, 0.4, -0.8};
  std::vector<Tensor> params = {mu, lv};

  auto kl_build = [&](Tape& t) { return gaussian_kl_node(t, mu, lv); };
  CHECK(testsupport::check_gradients(std::span<Tensor>(params), kl_build).max_rel < 1e-6);

  const std::vector<double> eps = {0.3, -0.9, 1.1};
  Tensor pick = Tensor::from_values({3}, {1.0, -2.0, 0.5});
  Rng untouched(0);
  auto sample_build = [&](Tape& t) {
    Tensor z = sample_gaussian_reparameterized(t, mu, lv, untouched, &eps);
    return t.sum(t.multiply(z, pick));
  };
  CHECK(testsupport::check_gradients(std::span<Tensor>(params), sample_build).max_rel <
        1e-6);
}

TEST_CASE("log variance clamp saturates values and passes gradients through") {
  Tape tape;
  Tensor lv = Tensor::from_values({3}, {0.5, 14.0, -22.0}, true);
  Tensor clamped = clamp_log_var_node(tape, lv);
  CHECK(clamped.values()[0] == 0.5);
  CHECK(clamped.values()[1] == 10.0);
  CHECK(clamped.values()[2] == -10.0);
  tape.clear();
}

TEST_CASE("posterior contracts sample their own family and reject the other") {
  Rng rng(31);
  VmfParams vmf;
  vmf.mu = basis_vector(4);
  vmf.kappa = 20.0;
  GaussianParams gauss;
  gauss.mu = {0.0, 1.0};
  gauss.log_var = {0.0, -1.0};

  VmfPosterior vmf_contract;
  GaussianPosterior gauss_contract;

  const PosteriorDraw draw = vmf_contract.sample(PosteriorParams(vmf), rng);
  CHECK(draw.code.size() == 4);
  double norm_sq = 0.0;
  for (double c : draw.code) norm_sq += c * c;
  CHECK(std::sqrt(norm_sq) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(vmf_contract.kl(PosteriorParams(vmf)) ==
        doctest::Approx(vmf_kl_uniform(4, 20.0)));
  CHECK(vmf_contract.is_kl_constant());
  CHECK_FALSE(VmfPosterior(true).is_kl_constant());

  const PosteriorDraw gdraw = gauss_contract.sample(PosteriorParams(gauss), rng);
  CHECK(gdraw.code.size() == 2);
  CHECK(gauss_contract.kl(PosteriorParams(gauss)) ==
        doctest::Approx(gaussian_kl_standard(gauss)));
  CHECK_FALSE(gauss_contract.is_kl_constant());

  CHECK_THROWS_AS(vmf_contract.sample(PosteriorParams(gauss), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(gauss_contract.kl(PosteriorParams(vmf)), std::invalid_argument);
}
