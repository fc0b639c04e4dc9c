#pragma once

#include <variant>
#include <vector>

#include "hvae/rng.hpp"
#include "hvae/tensor.hpp"

// The two variational families: von Mises-Fisher on the unit sphere with a
// uniform prior, and a diagonal Gaussian with a standard normal prior.
// Log-densities, KL against the prior, and reparameterized sampling.

namespace hvae::latent {

// Point on the sphere S^{d-1}, d >= 2. Norm stays within 1e-9 of 1.
struct UnitVector {
  std::vector<double> components;

  // Scales a raw vector to unit norm. Throws NumericError below norm 1e-12.
  static UnitVector normalized(std::vector<double> raw);

  int dim() const { return static_cast<int>(components.size()); }
  void validate() const;
};

struct VmfParams {
  UnitVector mu;
  double kappa = 0.0;  // >= 0; kappa = 0 is the uniform distribution

  void validate() const;
};

struct GaussianParams {
  std::vector<double> mu;
  std::vector<double> log_var;  // clamped to [-10, 10] before any use

  void validate() const;
};

// Randomness consumed by one vMF draw, kept for diagnostics and for
// replaying a draw through the differentiable path.
struct RejectionSampleTrace {
  double w = 1.0;                // change magnitude, mu.z component
  std::vector<double> epsilon;   // raw tangent noise
  int proposals_used = 1;
};

// log density of the uniform distribution on S^{d-1}
// (negative log surface area).
double uniform_sphere_log_density(int d);

// log f_d(x; mu, kappa). kappa = 0 returns the uniform log density.
double vmf_log_pdf(const VmfParams& params, const UnitVector& x);

// KL(vMF(mu, kappa) || uniform on S^{d-1}). Depends on kappa only.
// Exactly 0 at kappa = 0 (special-cased; two terms diverge individually).
double vmf_kl_uniform(int d, double kappa);

// d/dkappa of vmf_kl_uniform, assembled from the Bessel derivative and the
// chain rule over every kappa-dependent term. Requires kappa > 0.
double vmf_kl_kappa_gradient(int d, double kappa);

// Uniform draw on S^{d-1}: normalized standard normal vector.
UnitVector sample_uniform_sphere(int d, Rng& rng);

// Rejection-samples z ~ vMF(mu, kappa). kappa = 0 routes to the uniform
// sphere. Throws NumericError after 1e6 rejected proposals.
UnitVector sample_vmf(const VmfParams& params, Rng& rng,
                      RejectionSampleTrace* trace = nullptr);

// Caller-pinned randomness for gradient checks: the change magnitude and
// raw tangent noise that sample_vmf_reparameterized would otherwise draw.
struct FixedVmfNoise {
  double w = 1.0;
  std::vector<double> epsilon;
};

// Differentiable draw: samples (w, epsilon) as constants, then builds
// z = w mu + sqrt(1-w^2) normalize(epsilon - (mu.epsilon) mu) out of tape
// ops, so gradients reach mu through the direct term and the projection.
// mu_node must hold a unit vector (normalized upstream, on the tape).
// kappa = 0 returns a constant uniform draw carrying no gradient.
Tensor sample_vmf_reparameterized(Tape& tape, const Tensor& mu_node, double kappa,
                                  Rng& rng, RejectionSampleTrace* trace = nullptr,
                                  const FixedVmfNoise* fixed = nullptr);

// KL(N(mu, diag(exp(log_var))) || N(0, I)).
double gaussian_kl_standard(const GaussianParams& params);

// Same KL assembled from tape ops so gradients reach both parameter nodes.
Tensor gaussian_kl_node(Tape& tape, const Tensor& mu_node, const Tensor& log_var_node);

// z = mu + exp(log_var / 2) * eps with eps ~ N(0, I) drawn as a constant
// (or supplied through fixed_eps for gradient checks).
Tensor sample_gaussian_reparameterized(Tape& tape, const Tensor& mu_node,
                                       const Tensor& log_var_node, Rng& rng,
                                       const std::vector<double>* fixed_eps = nullptr);

// Hard clamp of log_var values into [-10, 10], gradient passed through
// unchanged (the clamp is an additive constant correction on the tape).
Tensor clamp_log_var_node(Tape& tape, const Tensor& log_var_node);

using PosteriorParams = std::variant<VmfParams, GaussianParams>;

struct PosteriorDraw {
  std::vector<double> code;
  RejectionSampleTrace trace;  // for the Gaussian family: w = 0, one proposal
};

// What the ELBO needs from a variational family, detached from the tape.
// Evaluation and probes consume this; training uses the reparameterized
// samplers above directly.
class PosteriorContract {
 public:
  virtual ~PosteriorContract() = default;

  virtual PosteriorDraw sample(const PosteriorParams& params, Rng& rng) const = 0;
  virtual double kl(const PosteriorParams& params) const = 0;
  // True when kl ignores everything but fixed hyperparameters (vMF with
  // fixed kappa): collapse cannot reduce it.
  virtual bool is_kl_constant() const = 0;
};

class VmfPosterior final : public PosteriorContract {
 public:
  // learned_kappa = true marks kl as example-dependent.
  explicit VmfPosterior(bool learned_kappa = false) : learned_kappa_(learned_kappa) {}

  PosteriorDraw sample(const PosteriorParams& params, Rng& rng) const override;
  double kl(const PosteriorParams& params) const override;
  bool is_kl_constant() const override { return !learned_kappa_; }

 private:
  bool learned_kappa_;
};

class GaussianPosterior final : public PosteriorContract {
 public:
  PosteriorDraw sample(const PosteriorParams& params, Rng& rng) const override;
  double kl(const PosteriorParams& params) const override;
  bool is_kl_constant() const override { return false; }
};

}  // namespace hvae::latent
