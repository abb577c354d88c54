// benchmarks/bench_core.cc

// Copyright 2026  The dropclass Authors

// See the LICENSE file in the top-level directory for the full text.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include <vector>

#include "dropclass/corpus.h"
#include "dropclass/embedder.h"
#include "dropclass/eval.h"
#include "dropclass/head.h"
#include "dropclass/rng.h"
#include "dropclass/schedule.h"
#include "dropclass/trainer.h"

namespace dc = dropclass;

namespace {

dc::FeatureSequence RandomFrames(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  dc::Rng rng(seed);
  dc::FeatureSequence seq{frames, dim, std::vector<float>(frames * dim)};
  for (float &v : seq.values) v = static_cast<float>(rng.Normal());
  return seq;
}

std::vector<double> RandomVector(std::size_t n, dc::Rng &rng) {
  std::vector<double> v(n);
  for (double &x : v) x = rng.Normal();
  return v;
}

void BM_Forward(benchmark::State &state) {
  const dc::EmbedderConfig config;
  const auto params = dc::EmbedderParams::Initialize(config, 1);
  const auto x = RandomFrames(static_cast<std::size_t>(state.range(0)), config.feat_dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dc::Forward(params, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(50)->Arg(350);

void BM_ForwardBackward(benchmark::State &state) {
  const dc::EmbedderConfig config;
  const auto params = dc::EmbedderParams::Initialize(config, 1);
  const auto x = RandomFrames(static_cast<std::size_t>(state.range(0)), config.feat_dim, 2);
  dc::Rng rng(3);
  const auto g = RandomVector(config.embed_dim, rng);
  auto grads = dc::ZeroTensors(config);
  dc::ForwardCache cache;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dc::Forward(params, x, &cache));
    dc::Backward(cache, g, &grads);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(50)->Arg(350);

void BM_Loss(benchmark::State &state) {
  const auto kind = static_cast<dc::LossKind>(state.range(0));
  const std::size_t classes = static_cast<std::size_t>(state.range(1));
  const auto head = dc::HeadMatrix::Initialize(classes, 32, 4);
  dc::Rng rng(5);
  const auto h = RandomVector(32, rng);
  const auto spec = dc::LossSpec::Defaults(kind, classes);
  state.SetLabel(dc::LossKindName(kind));
  for (auto _ : state) benchmark::DoNotOptimize(dc::LossAndGrads(h, head.weights, 0, spec));
}
BENCHMARK(BM_Loss)->ArgsProduct({{0, 1, 2, 3, 4}, {40, 1000}});

void BM_Eer(benchmark::State &state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  dc::Rng rng(6);
  std::vector<double> tar(n), non(n);
  for (double &v : tar) v = rng.Normal() + 1.0;
  for (double &v : non) v = rng.Normal();
  for (auto _ : state) benchmark::DoNotOptimize(dc::ComputeEer(tar, non));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Eer)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);

void BM_TrainStep(benchmark::State &state) {
  dc::CorpusSpec spec;
  spec.n_speakers = 40;
  spec.utts_per_speaker = 5;
  const auto corpus = dc::GenerateCorpus(spec);
  auto model = dc::Model::Initialize(dc::EmbedderConfig{}, 40, 7);
  auto velocity = dc::Velocity::ZerosFor(model);
  std::vector<int> rows(40);
  for (int i = 0; i < 40; ++i) rows[i] = i;
  const auto view = dc::FilterData(corpus, rows);
  dc::Rng rng(8);
  auto loss = dc::LossSpec::Defaults(dc::LossKind::kCosFace);
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    state.PauseTiming();
    const auto batch = dc::ComposeBatch(view, 16, 50, rng);
    state.ResumeTiming();
    benchmark::DoNotOptimize(
        dc::Step(&model, &velocity, batch, &loss, rows, 0.01, 0.5, threads));
  }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_PAverage(benchmark::State &state) {
  dc::CorpusSpec spec;
  spec.n_speakers = 40;
  spec.utts_per_speaker = 10;
  const auto corpus = dc::GenerateCorpus(spec);
  const auto model = dc::Model::Initialize(dc::EmbedderConfig{}, 40, 9);
  for (auto _ : state) benchmark::DoNotOptimize(dc::PAverage(model, corpus));
}
BENCHMARK(BM_PAverage)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
