#include <benchmark/benchmark.h>

#include "hvae/latent.hpp"
#include "hvae/rng.hpp"

namespace {

using namespace hvae;

void args_dim_kappa(benchmark::internal::Benchmark* b) {
  for (int d : {3, 8, 50}) {
    for (int kappa : {0, 10, 100}) {
      b->Args({d, kappa});
    }
  }
}

latent::VmfParams params_for(int d, double kappa, Rng& rng) {
  latent::VmfParams params;
  params.mu = latent::sample_uniform_sphere(d, rng);
  params.kappa = kappa;
  return params;
}

void bm_sample_vmf(benchmark::State& state) {
  Rng rng(20240817);
  const auto params =
      params_for(static_cast<int>(state.range(0)),
                 static_cast<double>(state.range(1)), rng);
  long proposals = 0;
  long draws = 0;
  for (auto _ : state) {
    latent::RejectionSampleTrace trace;
    benchmark::DoNotOptimize(latent::sample_vmf(params, rng, &trace));
    proposals += trace.proposals_used;
    ++draws;
  }
  state.counters["proposals_per_draw"] =
      draws > 0 ? static_cast<double>(proposals) / static_cast<double>(draws) : 0.0;
}
BENCHMARK(bm_sample_vmf)->Apply(args_dim_kappa);

void bm_sample_uniform_sphere(benchmark::State& state) {
  Rng rng(20240817);
  const int d = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(latent::sample_uniform_sphere(d, rng));
  }
}
BENCHMARK(bm_sample_uniform_sphere)->Arg(3)->Arg(8)->Arg(50);

// Full differentiable draw: tape construction plus backward through
// z = w mu + sqrt(1 - w^2) tangent.
void bm_sample_vmf_reparameterized(benchmark::State& state) {
  Rng rng(20240817);
  const int d = static_cast<int>(state.range(0));
  const double kappa = static_cast<double>(state.range(1));
  std::vector<double> raw(d);
  for (double& c : raw) c = rng.normal();
  for (auto _ : state) {
    Tape tape;
    Tensor mu_raw = Tensor::from_values({d}, raw, true);
    Tensor mu = tape.l2_normalize(mu_raw);
    Tensor z = latent::sample_vmf_reparameterized(tape, mu, kappa, rng);
    Tensor loss = tape.sum(z);
    tape.backward(loss);
    benchmark::DoNotOptimize(mu_raw.grad().data());
    mu_raw.zero_grad();
  }
}
BENCHMARK(bm_sample_vmf_reparameterized)->Args({8, 10})->Args({50, 100});

void bm_posterior_contract_sample(benchmark::State& state) {
  Rng rng(20240817);
  const int d = static_cast<int>(state.range(0));
  const double kappa = static_cast<double>(state.range(1));
  const latent::VmfPosterior posterior;
  const latent::PosteriorParams params = params_for(d, kappa, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(posterior.sample(params, rng).code.data());
  }
}
BENCHMARK(bm_posterior_contract_sample)->Args({8, 10})->Args({50, 100});

}  // namespace
