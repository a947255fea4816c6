// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "forgetlab/corpusgen.hpp"
#include "forgetlab/forensics.hpp"
#include "forgetlab/metrics.hpp"
#include "forgetlab/nanoformer.hpp"
#include "forgetlab/trainer.hpp"

namespace {

namespace cg = forgetlab::corpusgen;
namespace nf = forgetlab::nanoformer;

struct Fixture {
  cg::DomainPair pair = cg::make_domain_pair(7, 0.7);
  cg::ParallelCorpus corpus = cg::sample_corpus(pair.general, 256, 3);
  nf::Model model{nf::ModelConfig::tiny(pair.vocab.source_size, pair.vocab.target_size)};
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_TrainStep(benchmark::State& state) {
  auto& f = fixture();
  const auto batches = cg::encode_batches(
      f.corpus.train, {static_cast<std::size_t>(state.range(0)), f.pair.vocab.source_size, f.pair.vocab.target_size});
  nf::Model model = f.model;
  model.set_requires_grad(true);
  forgetlab::trainer::Adam adam(model, std::vector<bool>(model.params().size(), true), {});
  std::size_t i = 0;
  for (auto _ : state) {
    model.zero_grad();
    forgetlab::ndgrad::Graph g;
    auto loss = nf::loss_on_batch(g, model, batches[i++ % batches.size()]);
    g.backward(loss);
    adam.step(model);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  auto& f = fixture();
  std::vector<cg::Sentence> sources;
  for (std::size_t i = 0; i < 64; ++i) sources.push_back(f.corpus.train[i].source);
  for (auto _ : state) {
    auto out = forgetlab::metrics::greedy_decode_all(f.model, sources, f.model.config().max_len);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

void BM_ImportancePerSentence(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto map = forgetlab::forensics::accumulate_importance(f.model, f.corpus.train, {32, 1.0}, "G");
    benchmark::DoNotOptimize(map.scores.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_ImportancePerSentence)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
