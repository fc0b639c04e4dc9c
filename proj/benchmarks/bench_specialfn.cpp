#include <benchmark/benchmark.h>

#include "hvae/latent.hpp"
#include "hvae/specialfn.hpp"

namespace {

using hvae::specialfn::bessel_ratio;
using hvae::specialfn::log_bessel_i;

// Arguments: order v = d/2 - 1 scaled by 2 (integer args only), kappa.
void args_order_kappa(benchmark::internal::Benchmark* b) {
  for (int two_v : {0, 23, 48, 98}) {
    for (int kappa : {1, 20, 160, 500}) {
      b->Args({two_v, kappa});
    }
  }
}

void bm_log_bessel_i(benchmark::State& state) {
  const double v = state.range(0) / 2.0;
  const double kappa = static_cast<double>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_bessel_i(v, kappa).log_value);
  }
}
BENCHMARK(bm_log_bessel_i)->Apply(args_order_kappa);

void bm_bessel_ratio(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const double kappa = static_cast<double>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(bessel_ratio(d, kappa));
  }
}
BENCHMARK(bm_bessel_ratio)
    ->Args({8, 10})
    ->Args({25, 80})
    ->Args({100, 160})
    ->Args({100, 500});

void bm_vmf_kl_uniform(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const double kappa = static_cast<double>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(hvae::latent::vmf_kl_uniform(d, kappa));
  }
}
BENCHMARK(bm_vmf_kl_uniform)
    ->Args({8, 10})
    ->Args({25, 80})
    ->Args({100, 160});

void bm_vmf_kl_kappa_gradient(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const double kappa = static_cast<double>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(hvae::latent::vmf_kl_kappa_gradient(d, kappa));
  }
}
BENCHMARK(bm_vmf_kl_kappa_gradient)
    ->Args({8, 10})
    ->Args({25, 80})
    ->Args({100, 160});

}  // namespace
