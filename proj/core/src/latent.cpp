#include "hvae/latent.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hvae/errors.hpp"
#include "hvae/specialfn.hpp"

namespace hvae::latent {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxProposals = 1'000'000;
constexpr double kLogVarClip = 10.0;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Wood's rejection scheme for the change magnitude w. The envelope constant
// b is the root (-2k + sqrt(4k^2 + (d-1)^2)) / (d-1), rearranged to avoid
// cancellation at large kappa.
double sample_change_magnitude(int d, double kappa, Rng& rng, int* proposals_used) {
  const double dm1 = static_cast<double>(d - 1);
  const double b = dm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);
  const double alpha = dm1 / 2.0;

  for (int attempt = 1; attempt <= kMaxProposals; ++attempt) {
    const double z = rng.beta_symmetric(alpha);
    const double w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = rng.uniform_positive();
    if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) {
      *proposals_used = attempt;
      return w;
    }
  }
  throw NumericError("vmf sampler: 1e6 proposals rejected; parameters corrupt");
}

std::vector<double> clamped(const std::vector<double>& log_var) {
  std::vector<double> out = log_var;
  for (double& v : out) v = std::min(kLogVarClip, std::max(-kLogVarClip, v));
  return out;
}

}  // namespace

UnitVector UnitVector::normalized(std::vector<double> raw) {
  const double n = norm(raw);
  if (!(n >= 1e-12)) throw NumericError("unit vector: input norm below 1e-12");
  for (double& v : raw) v /= n;
  return UnitVector{std::move(raw)};
}

void UnitVector::validate() const {
  if (dim() < 2) throw std::invalid_argument("unit vector: dimension must be >= 2");
  for (double v : components) {
    if (!std::isfinite(v)) throw std::invalid_argument("unit vector: non-finite component");
  }
  if (std::abs(norm(components) - 1.0) > 1e-9) {
    throw std::invalid_argument("unit vector: norm deviates from 1 by more than 1e-9");
  }
}

void VmfParams::validate() const {
  mu.validate();
  if (!std::isfinite(kappa) || kappa < 0.0) {
    throw std::invalid_argument("vmf params: kappa must be finite and >= 0");
  }
}

void GaussianParams::validate() const {
  if (mu.size() != log_var.size() || mu.empty()) {
    throw std::invalid_argument("gaussian params: mu and log_var lengths must match");
  }
  for (double v : mu) {
    if (!std::isfinite(v)) throw std::invalid_argument("gaussian params: non-finite mean");
  }
  for (double v : log_var) {
    if (!std::isfinite(v)) throw std::invalid_argument("gaussian params: non-finite log_var");
  }
}

double uniform_sphere_log_density(int d) {
  if (d < 2) throw std::invalid_argument("uniform sphere: dimension must be >= 2");
  const double half_d = 0.5 * static_cast<double>(d);
  return -(std::log(2.0) + half_d * std::log(kPi) - specialfn::log_gamma(half_d));
}

double vmf_log_pdf(const VmfParams& params, const UnitVector& x) {
  params.validate();
  x.validate();
  const int d = params.mu.dim();
  if (x.dim() != d) throw std::invalid_argument("vmf log pdf: dimension mismatch");
  if (params.kappa == 0.0) return uniform_sphere_log_density(d);

  const double v = 0.5 * d - 1.0;
  const double log_norm = v * std::log(params.kappa) -
                          (0.5 * d) * std::log(2.0 * kPi) -
                          specialfn::log_bessel_i(v, params.kappa).log_value;
  return log_norm + params.kappa * dot(params.mu.components, x.components);
}

double vmf_kl_uniform(int d, double kappa) {
  if (d < 2) throw std::invalid_argument("vmf kl: dimension must be >= 2");
  if (!std::isfinite(kappa) || kappa < 0.0) {
    throw std::invalid_argument("vmf kl: kappa must be finite and >= 0");
  }
  if (kappa == 0.0) return 0.0;  // posterior equals prior; limit of the formula

  const double half_d = 0.5 * static_cast<double>(d);
  const double v = half_d - 1.0;
  return kappa * specialfn::bessel_ratio(d, kappa) + v * std::log(kappa) -
         half_d * std::log(2.0 * kPi) -
         specialfn::log_bessel_i(v, kappa).log_value + half_d * std::log(kPi) +
         std::log(2.0) - specialfn::log_gamma(half_d);
}

double vmf_kl_kappa_gradient(int d, double kappa) {
  if (d < 2) throw std::invalid_argument("vmf kl gradient: dimension must be >= 2");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) {
    throw std::invalid_argument("vmf kl gradient: kappa must be finite and > 0");
  }

  const double v = 0.5 * d - 1.0;
  const double a = specialfn::bessel_ratio(d, kappa);

  // r_v = I'_v / I_v at the two orders bracketing the ratio.
  const double r_hi = std::exp(specialfn::log_bessel_i_derivative(v + 1.0, kappa).log_value -
                               specialfn::log_bessel_i(v + 1.0, kappa).log_value);
  // The symmetric derivative form needs order v-1 >= 0; below that use
  // I'_v = I_{v+1} + (v/kappa) I_v, whose first term is the ratio itself.
  const double r_lo =
      v >= 1.0 ? std::exp(specialfn::log_bessel_i_derivative(v, kappa).log_value -
                          specialfn::log_bessel_i(v, kappa).log_value)
               : a + v / kappa;

  const double a_prime = a * (r_hi - r_lo);
  // Terms: d/dk [k A] = A + k A', d/dk [v log k] = v/k, d/dk [-log I_v] = -r_lo.
  return a + kappa * a_prime + v / kappa - r_lo;
}

UnitVector sample_uniform_sphere(int d, Rng& rng) {
  if (d < 2) throw std::invalid_argument("uniform sphere: dimension must be >= 2");
  std::vector<double> raw(d);
  for (;;) {
    for (double& v : raw) v = rng.normal();
    if (norm(raw) >= 1e-12) break;
  }
  return UnitVector::normalized(std::move(raw));
}

UnitVector sample_vmf(const VmfParams& params, Rng& rng, RejectionSampleTrace* trace) {
  params.validate();
  const int d = params.mu.dim();
  const auto& mu = params.mu.components;

  if (params.kappa == 0.0) {
    UnitVector z = sample_uniform_sphere(d, rng);
    if (trace) {
      trace->w = dot(mu, z.components);
      trace->epsilon = z.components;
      trace->proposals_used = 1;
    }
    return z;
  }

  int proposals = 0;
  const double w = sample_change_magnitude(d, params.kappa, rng, &proposals);

  // Tangent direction: project noise off mu, renormalize.
  std::vector<double> eps(d), tangent(d);
  for (;;) {
    for (double& v : eps) v = rng.normal();
    const double overlap = dot(mu, eps);
    for (int i = 0; i < d; ++i) tangent[i] = eps[i] - overlap * mu[i];
    const double tn = norm(tangent);
    if (tn >= 1e-12) {
      for (double& v : tangent) v /= tn;
      break;
    }
  }

  const double tangent_scale = std::sqrt(std::max(0.0, 1.0 - w * w));
  std::vector<double> z(d);
  for (int i = 0; i < d; ++i) z[i] = w * mu[i] + tangent_scale * tangent[i];

  if (trace) {
    trace->w = w;
    trace->epsilon = std::move(eps);
    trace->proposals_used = proposals;
  }
  return UnitVector{std::move(z)};
}

Tensor sample_vmf_reparameterized(Tape& tape, const Tensor& mu_node, double kappa,
                                  Rng& rng, RejectionSampleTrace* trace,
                                  const FixedVmfNoise* fixed) {
  if (mu_node.shape().size() != 1 || mu_node.shape()[0] < 2) {
    throw std::invalid_argument("vmf reparameterized: mu must be rank 1, dim >= 2");
  }
  const int d = mu_node.shape()[0];
  const auto& mu = mu_node.values();

  if (kappa < 0.0 || !std::isfinite(kappa)) {
    throw std::invalid_argument("vmf reparameterized: kappa must be finite and >= 0");
  }
  if (kappa == 0.0) {
    UnitVector z = sample_uniform_sphere(d, rng);
    if (trace) {
      trace->w = dot(mu, z.components);
      trace->epsilon = z.components;
      trace->proposals_used = 1;
    }
    return Tensor::from_values({d}, std::move(z.components));
  }

  double w;
  int proposals = 1;
  std::vector<double> eps(d);
  if (fixed) {
    w = fixed->w;
    eps = fixed->epsilon;
    if (static_cast<int>(eps.size()) != d) {
      throw std::invalid_argument("vmf reparameterized: fixed noise dimension mismatch");
    }
  } else {
    w = sample_change_magnitude(d, kappa, rng, &proposals);
    // Redraw eps up front if its projection off mu is degenerate, so the
    // tape sees exactly one graph.
    for (;;) {
      for (double& v : eps) v = rng.normal();
      const double overlap = dot(mu, eps);
      double proj_norm_sq = 0.0;
      for (int i = 0; i < d; ++i) {
        const double t = eps[i] - overlap * mu[i];
        proj_norm_sq += t * t;
      }
      if (std::sqrt(proj_norm_sq) >= 1e-12) break;
    }
  }
  if (trace) {
    trace->w = w;
    trace->epsilon = eps;
    trace->proposals_used = proposals;
  }

  Tensor eps_const = Tensor::from_values({d}, eps);
  Tensor eps_col = Tensor::from_values({d, 1}, std::move(eps));
  Tensor ones_col = Tensor::from_values({d, 1}, std::vector<double>(d, 1.0));

  // overlap = mu . eps as a 1-tensor, replicated across d to scale mu.
  Tensor overlap = tape.matmul(mu_node, eps_col);
  Tensor overlap_repl = tape.matmul(ones_col, overlap);
  Tensor tangent_raw = tape.sub(eps_const, tape.multiply(overlap_repl, mu_node));
  Tensor tangent = tape.l2_normalize(tangent_raw);

  const double tangent_scale = std::sqrt(std::max(0.0, 1.0 - w * w));
  return tape.add(tape.scale(mu_node, w), tape.scale(tangent, tangent_scale));
}

double gaussian_kl_standard(const GaussianParams& params) {
  params.validate();
  const std::vector<double> lv = clamped(params.log_var);
  double acc = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    acc += std::exp(lv[i]) + params.mu[i] * params.mu[i] - 1.0 - lv[i];
  }
  return 0.5 * acc;
}

Tensor gaussian_kl_node(Tape& tape, const Tensor& mu_node, const Tensor& log_var_node) {
  if (mu_node.shape() != log_var_node.shape()) {
    throw std::invalid_argument("gaussian kl: mu and log_var shapes differ");
  }
  Tensor lv = clamp_log_var_node(tape, log_var_node);
  Tensor ones = Tensor::from_values(lv.shape(), std::vector<double>(lv.size(), 1.0));
  Tensor inner = tape.sub(tape.add(tape.exp(lv), tape.multiply(mu_node, mu_node)),
                          tape.add(lv, ones));
  return tape.scale(tape.sum(inner), 0.5);
}

Tensor clamp_log_var_node(Tape& tape, const Tensor& log_var_node) {
  std::vector<double> correction(log_var_node.size(), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < correction.size(); ++i) {
    const double v = log_var_node.values()[i];
    const double c = std::min(kLogVarClip, std::max(-kLogVarClip, v));
    if (c != v) {
      correction[i] = c - v;
      any = true;
    }
  }
  if (!any) return log_var_node;
  return tape.add(log_var_node,
                  Tensor::from_values(log_var_node.shape(), std::move(correction)));
}

Tensor sample_gaussian_reparameterized(Tape& tape, const Tensor& mu_node,
                                       const Tensor& log_var_node, Rng& rng,
                                       const std::vector<double>* fixed_eps) {
  if (mu_node.shape() != log_var_node.shape()) {
    throw std::invalid_argument("gaussian reparameterized: shapes differ");
  }
  std::vector<double> eps(mu_node.size());
  if (fixed_eps) {
    if (fixed_eps->size() != eps.size()) {
      throw std::invalid_argument("gaussian reparameterized: fixed noise length mismatch");
    }
    eps = *fixed_eps;
  } else {
    for (double& v : eps) v = rng.normal();
  }
  Tensor lv = clamp_log_var_node(tape, log_var_node);
  Tensor sigma = tape.exp(tape.scale(lv, 0.5));
  Tensor noise = Tensor::from_values(mu_node.shape(), std::move(eps));
  return tape.add(mu_node, tape.multiply(sigma, noise));
}

PosteriorDraw VmfPosterior::sample(const PosteriorParams& params, Rng& rng) const {
  const auto* p = std::get_if<VmfParams>(&params);
  if (!p) throw std::invalid_argument("vmf posterior: wrong parameter family");
  PosteriorDraw draw;
  UnitVector z = sample_vmf(*p, rng, &draw.trace);
  draw.code = std::move(z.components);
  return draw;
}

double VmfPosterior::kl(const PosteriorParams& params) const {
  const auto* p = std::get_if<VmfParams>(&params);
  if (!p) throw std::invalid_argument("vmf posterior: wrong parameter family");
  return vmf_kl_uniform(p->mu.dim(), p->kappa);
}

PosteriorDraw GaussianPosterior::sample(const PosteriorParams& params, Rng& rng) const {
  const auto* p = std::get_if<GaussianParams>(&params);
  if (!p) throw std::invalid_argument("gaussian posterior: wrong parameter family");
  p->validate();
  const std::vector<double> lv = clamped(p->log_var);
  PosteriorDraw draw;
  draw.code.resize(p->mu.size());
  draw.trace.epsilon.resize(p->mu.size());
  draw.trace.w = 0.0;
  draw.trace.proposals_used = 1;
  for (std::size_t i = 0; i < draw.code.size(); ++i) {
    const double e = rng.normal();
    draw.trace.epsilon[i] = e;
    draw.code[i] = p->mu[i] + std::exp(0.5 * lv[i]) * e;
  }
  return draw;
}

double GaussianPosterior::kl(const PosteriorParams& params) const {
  const auto* p = std::get_if<GaussianParams>(&params);
  if (!p) throw std::invalid_argument("gaussian posterior: wrong parameter family");
  return gaussian_kl_standard(*p);
}

}  // namespace hvae::latent
