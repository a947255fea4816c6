// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "forgetlab/ndgrad.hpp"
#include "forgetlab/rng.hpp"

namespace {

using forgetlab::Rng;
using forgetlab::ndgrad::Graph;
using forgetlab::ndgrad::Tensor;

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({r, c});
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor(n, 32, 1), w = random_tensor(32, 32, 2);
  w.set_requires_grad(true);
  for (auto _ : state) {
    w.zero_grad();
    Graph g;
    auto y = forgetlab::ndgrad::sum(forgetlab::ndgrad::matmul(g.input(a), g.parameter(w)));
    g.backward(y);
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * 32 * 32));
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(64)->Arg(512);

void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor(n, 64, 3);
  for (auto _ : state) {
    Graph g(false);
    auto y = forgetlab::ndgrad::softmax(g.input(x), 1);
    benchmark::DoNotOptimize(y.value().values().data());
  }
}
BENCHMARK(BM_Softmax)->Arg(64)->Arg(512);

void BM_Attention(benchmark::State& state) {
  const std::size_t batch = 32, len = 12, d = 32;
  Tensor q = random_tensor(batch * len, d, 4), k = random_tensor(batch * len, d, 5), v = random_tensor(batch * len, d, 6);
  forgetlab::ndgrad::AttentionMask mask;
  mask.batch = batch;
  mask.query_len = len;
  mask.key_len = len;
  mask.key_lengths.assign(batch, len);
  mask.causal = state.range(0) != 0;
  for (auto _ : state) {
    Graph g(false);
    auto y = forgetlab::ndgrad::attention(g.input(q), g.input(k), g.input(v), mask);
    benchmark::DoNotOptimize(y.value().values().data());
  }
}
BENCHMARK(BM_Attention)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
