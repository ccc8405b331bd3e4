/* Copyright 2026 The mdecode Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Serial versus OpenMP frontier expansion, and per-mode decode cost.

#include <random>

#include <benchmark/benchmark.h>

#include "mdecode/engine.hpp"
#include "mdecode/harness.hpp"
#include "mdecode/revision.hpp"

namespace {

using namespace mdecode;

struct RevisionFixture {
  std::shared_ptr<const TableLm> target;
  std::shared_ptr<const TableLm> reference;
  TokenSeq prompt{1, 2, 3};
  DecodeConfig config;

  explicit RevisionFixture(std::size_t vocab) {
    std::mt19937_64 rng(vocab);
    target = random_table_lm(rng, vocab, 64, 2, true);
    reference = random_table_lm(rng, vocab, 64, 2, true);
    config.block_size_m = 4;
    config.branch_n = 4;
    config.keep_k = 8;
  }
};

void BM_ReviseBlock(benchmark::State& state, Execution execution) {
  const RevisionFixture fx(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto result = revise_block(*fx.target, *fx.reference, fx.prompt, TokenSeq{}, fx.config, execution);
    benchmark::DoNotOptimize(result.score);
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_ReviseSerial(benchmark::State& state) { BM_ReviseBlock(state, Execution::kSerial); }
void BM_ReviseParallel(benchmark::State& state) { BM_ReviseBlock(state, Execution::kParallel); }

BENCHMARK(BM_ReviseSerial)->Arg(256)->Arg(4096)->Arg(32768)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ReviseParallel)->Arg(256)->Arg(4096)->Arg(32768)->Unit(benchmark::kMicrosecond)->UseRealTime();

const SynthSuite& suite() {
  static const SynthSuite s = synth_hallucination_suite(17, 50, 128, 0.5, 0.9);
  return s;
}

void BM_Decode(benchmark::State& state, DecodeMode mode) {
  const auto& s = suite();
  DecodeConfig config;
  config.max_tokens = 16;
  BenchmarkOptions options;
  options.mode = mode;
  for (auto _ : state) {
    auto report = run_benchmark(s.corpus, *s.target, *s.reference, config, options);
    benchmark::DoNotOptimize(report.aggregates.em_rate);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.corpus.size()));
}

void BM_DecodeGreedy(benchmark::State& state) { BM_Decode(state, DecodeMode::kGreedy); }
void BM_DecodeMd(benchmark::State& state) { BM_Decode(state, DecodeMode::kMd); }
void BM_DecodeBon(benchmark::State& state) { BM_Decode(state, DecodeMode::kBon); }

BENCHMARK(BM_DecodeGreedy)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DecodeMd)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DecodeBon)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
