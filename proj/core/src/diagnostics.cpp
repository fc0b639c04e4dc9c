#include "hvae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <span>
#include <vector>

#include "hvae/latent.hpp"
#include "hvae/models.hpp"
#include "hvae/rng.hpp"
#include "hvae/specialfn.hpp"
#include "hvae/tensor.hpp"

namespace hvae::diagnostics {

namespace {

std::string fmt(const char* pattern, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

// ---- gradient machinery ----------------------------------------------

double relative_gap(double fd, double analytic, double floor) {
  return std::fabs(fd - analytic) /
         std::max({std::fabs(fd), std::fabs(analytic), floor});
}

// Central finite differences of a freshly rebuilt loss against the tape
// gradients from one backward pass. The builder must be a pure function
// of the parameter values.
double fd_max_rel(std::span<Tensor> params,
                  const std::function<Tensor(Tape&)>& build, double h,
                  double floor) {
  for (Tensor& p : params) p.zero_grad();
  std::vector<std::vector<double>> grads;
  {
    Tape tape;
    Tensor loss = build(tape);
    tape.backward(loss);
  }
  for (Tensor& p : params) grads.push_back(p.grad());

  auto loss_value = [&]() {
    Tape tape;
    const double v = build(tape).value();
    tape.clear();
    return v;
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].values_mutable();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double keep = values[j];
      values[j] = keep + h;
      const double up = loss_value();
      values[j] = keep - h;
      const double down = loss_value();
      values[j] = keep;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, relative_gap(fd, grads[pi][j], floor));
    }
  }
  for (Tensor& p : params) p.zero_grad();
  return worst;
}

Tensor filled_param(std::vector<int> shape, const char* name, Rng& rng) {
  Tensor t = Tensor::param(std::move(shape), name);
  for (double& v : t.values_mutable()) v = rng.normal();
  return t;
}

Tensor random_const(std::vector<int> shape, Rng& rng) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  std::vector<double> values(n);
  for (double& v : values) v = rng.normal();
  return Tensor::from_values(std::move(shape), std::move(values));
}

// Worst gap over every primitive, exercised through a random linear
// reduction so each output component carries distinct sensitivity.
double primitive_sweep(int instances, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    const int m = 2 + static_cast<int>(rng.bits() % 3);
    const int k = 2 + static_cast<int>(rng.bits() % 3);
    const int n = 2 + static_cast<int>(rng.bits() % 3);

    auto run = [&](std::span<Tensor> params, auto&& body) {
      auto build = [&](Tape& tape) { return body(tape); };
      worst = std::max(worst, fd_max_rel(params, build, 1e-5, 1e-6));
    };

    {
      Tensor a = filled_param({m, k}, "a", rng);
      Tensor b = filled_param({k, n}, "b", rng);
      Tensor v = filled_param({k}, "v", rng);
      Tensor pick_mn = random_const({m, n}, rng);
      Tensor pick_m = random_const({m}, rng);
      std::vector<Tensor> both = {a, b};
      run(both, [&](Tape& t) {
        return t.sum(t.multiply(t.matmul(a, b), pick_mn));
      });
      std::vector<Tensor> mat_vec = {a, v};
      run(mat_vec, [&](Tape& t) {
        return t.sum(t.multiply(t.matmul(a, v), pick_m));
      });
    }
    {
      Tensor x = filled_param({m, n}, "x", rng);
      Tensor row = filled_param({n}, "row", rng);
      Tensor pick = random_const({m, n}, rng);
      std::vector<Tensor> params = {x, row};
      run(params, [&](Tape& t) {
        Tensor broadcast = t.add(x, row);
        Tensor mixed = t.multiply(broadcast, t.negate(x));
        Tensor warped = t.tanh(t.scale(mixed, 0.7));
        return t.sum(t.multiply(warped, pick));
      });
      run(params, [&](Tape& t) {
        Tensor s = t.sigmoid(x);
        Tensor soft = t.softplus(t.sub(s, row));
        return t.mean(t.multiply(soft, pick));
      });
      run(params, [&](Tape& t) {
        Tensor e = t.exp(t.scale(x, 0.3));
        Tensor l = t.log(e);  // positive by construction
        return t.sum(t.multiply(t.log_softmax(l), pick));
      });
    }
    {
      Tensor u = filled_param({k}, "u", rng);
      Tensor w = filled_param({k}, "w", rng);
      u.values_mutable()[0] += 2.0;  // keep the norm off zero
      Tensor pick = random_const({2 * k}, rng);
      std::vector<Tensor> params = {u, w};
      run(params, [&](Tape& t) {
        Tensor joined = t.concat(t.l2_normalize(u), w);
        return t.sum(t.multiply(joined, pick));
      });
    }
    {
      Tensor table = filled_param({5, k}, "table", rng);
      const std::vector<int> ids = {1, 3, 1, 4};
      Tensor pick = random_const({4, k}, rng);
      std::vector<Tensor> params = {table};
      run(params, [&](Tape& t) {
        Tensor rows = t.embedding_lookup(table, ids);
        Tensor one = t.embedding_row(table, 2);
        return t.add(t.sum(t.multiply(rows, pick)), t.mean(one));
      });
    }
    {
      Tensor logits = filled_param({3, 4}, "logits", rng);
      const std::vector<int> targets = {2, 0, 3};
      const std::vector<double> mask = {1.0, 0.0, 1.0};
      std::vector<Tensor> params = {logits};
      run(params, [&](Tape& t) { return t.masked_nll(logits, targets, mask); });
    }
    {
      Tensor x = filled_param({1}, "x", rng);
      std::vector<Tensor> params = {x};
      run(params, [&](Tape& t) {
        const double v = x.value();
        Tensor y = t.scalar_chain(x, std::sin(v), std::cos(v));
        return t.multiply(y, y);
      });
    }
  }
  return worst;
}

double reparam_sweep(int instances, std::uint64_t seed) {
  constexpr double kKappas[] = {0.5, 4.0, 40.0, 200.0};
  double worst = 0.0;
  Rng meta(seed);
  for (int i = 0; i < instances; ++i) {
    const int d = 3 + static_cast<int>(meta.bits() % 6);
    const double kappa = kKappas[i % 4];
    Tensor raw = Tensor::param({d}, "raw");
    for (double& v : raw.values_mutable()) v = meta.normal();
    raw.values_mutable()[0] += 1.5;

    latent::RejectionSampleTrace trace;
    {
      Tape tape;
      Rng draw(Rng::derive(seed, 500 + static_cast<std::uint64_t>(i)));
      latent::sample_vmf_reparameterized(tape, tape.l2_normalize(raw), kappa, draw,
                                         &trace);
      tape.clear();
    }
    const latent::FixedVmfNoise fixed{trace.w, trace.epsilon};
    Tensor pick = random_const({d}, meta);
    Rng untouched(0);
    std::vector<Tensor> params = {raw};
    auto build = [&](Tape& tape) -> Tensor {
      Tensor z = latent::sample_vmf_reparameterized(tape, tape.l2_normalize(raw),
                                                    kappa, untouched, nullptr, &fixed);
      return tape.sum(tape.multiply(z, pick));
    };
    worst = std::max(worst, fd_max_rel(params, build, 1e-5, 1e-6));
  }
  return worst;
}

double model_sweep(std::uint64_t seed) {
  corpus::Document doc;
  doc.ids = {4, 6, 5, 8, 6};
  doc.raw_len = 5;
  double worst = 0.0;

  for (const auto family : {models::Family::kVmf, models::Family::kGaussian}) {
    {
      models::NvdmConfig config;
      config.vocab_size = 9;  // five content words plus the reserved ids
      config.hidden = 5;
      config.latent_dim = 4;
      config.family = family;
      config.kappa = 3.0;
      models::NvdmModel model(config, seed);
      auto build = [&](Tape& tape) {
        Rng rng(Rng::derive(seed, 7));
        return model.forward(tape, doc, rng, 0.7).loss;
      };
      worst = std::max(worst,
                       fd_max_rel(model.parameters(), build, 3e-5, 1e-5));
    }
    {
      models::NvrnnConfig config;
      config.vocab_size = 9;
      config.embed_dim = 4;
      config.hidden = 5;
      config.latent_dim = 3;
      config.family = family;
      config.kappa = 3.0;
      models::NvrnnModel model(config, seed);
      auto build = [&](Tape& tape) {
        Rng rng(Rng::derive(seed, 8));
        return model.forward(tape, doc, rng, 0.7).loss;
      };
      worst = std::max(worst,
                       fd_max_rel(model.parameters(), build, 3e-5, 1e-5));
    }
  }
  return worst;
}

// ---- sampler machinery -----------------------------------------------

// CDF of the change magnitude w with density proportional to
// (1-w^2)^{(d-3)/2} e^{kappa w}, integrated in t = asin(w) where the
// density becomes cos(t)^{d-2} e^{kappa sin t} and the d = 2 endpoint
// singularity disappears.
class MagnitudeCdf {
 public:
  MagnitudeCdf(int d, double kappa, int grid = 120001) : ts_(grid), cum_(grid) {
    const long double half_pi = std::acos(-1.0L) / 2.0L;
    const long double step = 2.0L * half_pi / (grid - 1);
    std::vector<long double> density(static_cast<std::size_t>(grid));
    for (int i = 0; i < grid; ++i) {
      const long double t = -half_pi + step * i;
      ts_[static_cast<std::size_t>(i)] = t;
      const long double power = static_cast<long double>(d - 2);
      const long double c = std::cos(t);
      // exponent shifted by -kappa so the integrand never overflows
      const long double log_density =
          power * std::log(std::max(c, 1e-300L)) +
          static_cast<long double>(kappa) * (std::sin(t) - 1.0L);
      density[static_cast<std::size_t>(i)] =
          (power > 0.0L && c <= 0.0L) ? 0.0L : std::exp(log_density);
    }
    cum_[0] = 0.0L;
    for (int i = 1; i < grid; ++i) {
      cum_[static_cast<std::size_t>(i)] =
          cum_[static_cast<std::size_t>(i - 1)] +
          0.5L * (density[static_cast<std::size_t>(i - 1)] +
                  density[static_cast<std::size_t>(i)]) *
              step;
    }
    const long double total = cum_.back();
    for (auto& c : cum_) c /= total;
  }

  double operator()(double w) const {
    const long double t = std::asin(std::clamp(w, -1.0, 1.0));
    const auto it = std::lower_bound(ts_.begin(), ts_.end(), t);
    if (it == ts_.begin()) return 0.0;
    if (it == ts_.end()) return 1.0;
    const std::size_t hi = static_cast<std::size_t>(it - ts_.begin());
    const long double t0 = ts_[hi - 1], t1 = ts_[hi];
    const long double frac = (t - t0) / (t1 - t0);
    return static_cast<double>(cum_[hi - 1] + frac * (cum_[hi] - cum_[hi - 1]));
  }

 private:
  std::vector<long double> ts_, cum_;
};

struct SamplerStats {
  double ks = 0.0;
  double ks_critical = 0.0;
  double mean_gap_sigmas = 0.0;
  double worst_norm = 0.0;
};

SamplerStats sampler_stats(int d, double kappa, int n, std::uint64_t seed) {
  latent::VmfParams params;
  params.mu.components.assign(static_cast<std::size_t>(d), 0.0);
  params.mu.components[0] = 1.0;
  params.kappa = kappa;

  Rng rng(seed);
  std::vector<double> ws(static_cast<std::size_t>(n));
  double mean = 0.0, m2 = 0.0;
  SamplerStats out;
  for (int i = 0; i < n; ++i) {
    const latent::UnitVector z = latent::sample_vmf(params, rng);
    double norm_sq = 0.0;
    for (double c : z.components) norm_sq += c * c;
    out.worst_norm = std::max(out.worst_norm, std::fabs(std::sqrt(norm_sq) - 1.0));
    const double w = z.components[0];
    ws[static_cast<std::size_t>(i)] = w;
    const double delta = w - mean;
    mean += delta / (i + 1);
    m2 += delta * (w - mean);
  }
  std::sort(ws.begin(), ws.end());
  const MagnitudeCdf cdf(d, kappa);
  for (int i = 0; i < n; ++i) {
    const double f = cdf(ws[static_cast<std::size_t>(i)]);
    out.ks = std::max(out.ks, std::max(f - static_cast<double>(i) / n,
                                       static_cast<double>(i + 1) / n - f));
  }
  out.ks_critical = 1.628 / std::sqrt(static_cast<double>(n));  // alpha = 0.01
  const double std_err = std::sqrt(m2 / (n - 1) / n);
  out.mean_gap_sigmas = std::fabs(mean - specialfn::bessel_ratio(d, kappa)) / std_err;
  return out;
}

}  // namespace

SuiteResult bessel_recurrence_suite() {
  using namespace specialfn;
  SuiteResult result;
  result.name = "bessel-recurrence";

  double worst = 0.0;
  for (double v : {1.0, 1.5, 3.0, 12.0, 25.0, 99.0}) {
    for (double kappa : {0.5, 1.0, 10.0, 80.0, 150.0, 500.0, 590.0, 610.0, 900.0}) {
      const double lhs = log_bessel_i(v - 1.0, kappa).log_value;
      const double rhs =
          log_add_exp(std::log(2.0 * v / kappa) + log_bessel_i(v, kappa).log_value,
                      log_bessel_i(v + 1.0, kappa).log_value);
      // compare linear-domain values through the log gap
      worst = std::max(worst, std::expm1(std::fabs(lhs - rhs)));
    }
  }

  double overlap_worst = 0.0;
  const double cutoff = series_cutoff();
  for (double v : {0.0, 0.5, 1.0, 11.5, 24.0, 50.0}) {
    for (double factor : {0.95, 1.0, 1.05}) {
      const double kappa = cutoff * factor;
      const double a = detail::log_bessel_i_series(v, kappa);
      const double b = detail::log_bessel_i_asymptotic(v, kappa);
      overlap_worst = std::max(overlap_worst, std::expm1(std::fabs(a - b)));
    }
  }

  result.passed = worst < 1e-8 && overlap_worst < 1e-7;
  result.detail = fmt("recurrence rel %.3g (bound 1e-8), branch overlap rel %.3g (bound 1e-7)",
                      worst, overlap_worst);
  return result;
}

SuiteResult sampler_ks_suite() {
  SuiteResult result;
  result.name = "sampler-ks";
  double worst_ks_margin = 0.0, worst_sigmas = 0.0, worst_norm = 0.0;
  const std::pair<int, double> grid[] = {{3, 10.0}, {10, 0.5}, {25, 50.0}};
  std::uint64_t seed = 20240901;
  for (const auto& [d, kappa] : grid) {
    const SamplerStats stats = sampler_stats(d, kappa, 20000, seed++);
    worst_ks_margin = std::max(worst_ks_margin, stats.ks / stats.ks_critical);
    worst_sigmas = std::max(worst_sigmas, stats.mean_gap_sigmas);
    worst_norm = std::max(worst_norm, stats.worst_norm);
  }
  result.passed = worst_ks_margin < 1.0 && worst_sigmas < 3.0 && worst_norm < 1e-9;
  result.detail =
      fmt("KS %.3g of critical, mean %.3g sigma (bound 3)", worst_ks_margin,
          worst_sigmas) +
      fmt(", norm gap %.3g (bound 1e-9)", worst_norm, 0.0);
  return result;
}

SuiteResult gradient_suite() {
  SuiteResult result;
  result.name = "gradient-check";
  const double primitives = primitive_sweep(6, 11);
  const double reparam = reparam_sweep(6, 12);
  const double models_rel = model_sweep(13);
  result.passed = primitives < 1e-4 && reparam < 1e-4 && models_rel < 1e-3;
  result.detail = fmt("primitives rel %.3g, reparam rel %.3g", primitives, reparam) +
                  fmt(" (bound 1e-4), models rel %.3g (bound 1e-3)", models_rel, 0.0);
  return result;
}

std::vector<SuiteResult> run_all() {
  return {bessel_recurrence_suite(), sampler_ks_suite(), gradient_suite()};
}

}  // namespace hvae::diagnostics
