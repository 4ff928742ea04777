// benchmarks/confsv_bench.cc

// Copyright 2026  The confsv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include <vector>

#include "confsv/autodiff.h"
#include "confsv/conformer.h"
#include "confsv/datapipe.h"
#include "confsv/losses.h"
#include "confsv/nn_ops.h"
#include "confsv/random.h"
#include "confsv/scoring.h"

namespace confsv {
namespace {

Tensor noise(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = state.range(0);
  Rng rng(1);
  const Var a = constant(noise({n, n}, rng)), b = constant(noise({n, n}, rng));
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).value()[0]);
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(176)->Arg(256);

void BM_ConformerBlock(benchmark::State& state) {
  const bool train = state.range(1) != 0;
  BlockConfig cfg;
  ConformerBlock block(cfg);
  block.initialize(2);
  Rng rng(3);
  const Var x(noise({1, static_cast<std::size_t>(state.range(0)), cfg.dim}, rng), train);
  for (auto _ : state) {
    if (train) {
      ForwardCtx ctx{true, &rng};
      block.zero_grad();
      backward(mean(square(block.forward(x, ctx))));
    } else {
      NoGradGuard g;
      benchmark::DoNotOptimize(block.forward(x, ForwardCtx{}).value()[0]);
    }
  }
}
BENCHMARK(BM_ConformerBlock)->Args({125, 0})->Args({125, 1})->Args({250, 0})->Unit(benchmark::kMillisecond);

void BM_CtcLoss(benchmark::State& state) {
  const std::size_t T = state.range(0), V = 27;
  Rng rng(4);
  const Var logits(noise({T, V + 1}, rng), true);
  std::vector<int> target;
  for (std::size_t i = 0; i < T / 4; ++i) target.push_back(1 + static_cast<int>(rng.below(V)));
  for (auto _ : state) {
    Var l = ctc_loss(logits, target);
    backward(l);
    benchmark::DoNotOptimize(l.item());
  }
}
BENCHMARK(BM_CtcLoss)->Arg(50)->Arg(200);

void BM_LogMel(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> wave(static_cast<std::size_t>(state.range(0)) * 16000);
  for (double& s : wave) s = 0.1 * rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(compute_features(wave).numel());
}
BENCHMARK(BM_LogMel)->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Eer(benchmark::State& state) {
  Rng rng(6);
  const std::size_t n = state.range(0);
  std::vector<double> scores(n);
  std::vector<bool> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 10 == 0;
    scores[i] = rng.normal() + (labels[i] ? 2.0 : 0.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(eer(scores, labels) + min_dcf(scores, labels));
}
BENCHMARK(BM_Eer)->Arg(1000)->Arg(100000);

}  // namespace
}  // namespace confsv

BENCHMARK_MAIN();
