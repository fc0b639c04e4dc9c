#include <benchmark/benchmark.h>

#include <vector>

#include "hvae/rng.hpp"
#include "hvae/tensor.hpp"

namespace {

using namespace hvae;

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  std::vector<double> values(n);
  for (double& v : values) v = rng.normal();
  return Tensor::from_values(std::move(shape), std::move(values), requires_grad);
}

// Matrix-vector product at the layer widths the desk-scale models use.
void bm_matvec_forward(benchmark::State& state) {
  Rng rng(1);
  const int rows = static_cast<int>(state.range(0));
  const int cols = static_cast<int>(state.range(1));
  Tensor w = random_tensor({rows, cols}, rng, false);
  Tensor x = random_tensor({cols}, rng, false);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.matmul(w, x).values().data());
  }
}
BENCHMARK(bm_matvec_forward)->Args({32, 16})->Args({48, 48})->Args({64, 8})->Args({256, 64});

void bm_matvec_backward(benchmark::State& state) {
  Rng rng(1);
  const int rows = static_cast<int>(state.range(0));
  const int cols = static_cast<int>(state.range(1));
  Tensor w = random_tensor({rows, cols}, rng, true);
  Tensor x = random_tensor({cols}, rng, true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = tape.sum(tape.matmul(w, x));
    tape.backward(loss);
    benchmark::DoNotOptimize(w.grad().data());
    w.zero_grad();
    x.zero_grad();
  }
}
BENCHMARK(bm_matvec_backward)->Args({32, 16})->Args({48, 48})->Args({256, 64});

void bm_log_softmax_nll(benchmark::State& state) {
  Rng rng(1);
  const int vocab = static_cast<int>(state.range(0));
  Tensor logits = random_tensor({vocab}, rng, true);
  const int targets[] = {static_cast<int>(vocab / 2)};
  for (auto _ : state) {
    Tape tape;
    Tensor loss = tape.masked_nll(logits, targets);
    tape.backward(loss);
    benchmark::DoNotOptimize(logits.grad().data());
    logits.zero_grad();
  }
}
BENCHMARK(bm_log_softmax_nll)->Arg(64)->Arg(1000)->Arg(10000);

// One recurrent cell step: h' = tanh(W [x; h] + b), forward and backward,
// the inner loop of the sequence model.
void bm_rnn_cell_step(benchmark::State& state) {
  Rng rng(1);
  const int hidden = static_cast<int>(state.range(0));
  const int embed = static_cast<int>(state.range(1));
  Tensor w = random_tensor({hidden, embed + hidden}, rng, true);
  Tensor b = random_tensor({hidden}, rng, true);
  Tensor x = random_tensor({embed}, rng, false);
  Tensor h = random_tensor({hidden}, rng, false);
  for (auto _ : state) {
    Tape tape;
    Tensor joined = tape.concat(x, h);
    Tensor next = tape.tanh(tape.add(tape.matmul(w, joined), b));
    tape.backward(tape.sum(next));
    benchmark::DoNotOptimize(w.grad().data());
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(bm_rnn_cell_step)->Args({32, 16})->Args({128, 64});

void bm_embedding_lookup(benchmark::State& state) {
  Rng rng(1);
  const int vocab = 1000;
  const int embed = static_cast<int>(state.range(0));
  const int seq = static_cast<int>(state.range(1));
  Tensor table = random_tensor({vocab, embed}, rng, true);
  std::vector<int> ids(static_cast<std::size_t>(seq));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ids[i] = static_cast<int>(rng.bits() % static_cast<std::uint64_t>(vocab));
  }
  for (auto _ : state) {
    Tape tape;
    Tensor rows = tape.embedding_lookup(table, ids);
    tape.backward(tape.sum(rows));
    benchmark::DoNotOptimize(table.grad().data());
    table.zero_grad();
  }
}
BENCHMARK(bm_embedding_lookup)->Args({16, 8})->Args({64, 36});

void bm_sgd_step(benchmark::State& state) {
  Rng rng(1);
  const int rows = static_cast<int>(state.range(0));
  Tensor w = random_tensor({rows, rows}, rng, true);
  Tensor b = random_tensor({rows}, rng, true);
  std::vector<Tensor> params = {w, b};
  Tensor x = random_tensor({rows}, rng, false);
  for (auto _ : state) {
    Tape tape;
    tape.backward(tape.sum(tape.add(tape.matmul(w, x), b)));
    sgd_step(params, 1e-6, 5.0);
  }
}
BENCHMARK(bm_sgd_step)->Arg(32)->Arg(128);

}  // namespace
