// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "sipreward/grpo.hpp"
#include "sipreward/pairs.hpp"
#include "sipreward/trajectory.hpp"
#include "synthetic.hpp"
#include "test_data.hpp"

namespace sipreward {
namespace {

void BM_ParseAndMeasure(benchmark::State& state) {
  const std::string raw = testing::read_data("grimmo_baseline.txt");
  for (auto _ : state) {
    const auto t = parse_trajectory(raw);
    benchmark::DoNotOptimize(compute_stats(t));
  }
}
BENCHMARK(BM_ParseAndMeasure);

void BM_OptionMentions(benchmark::State& state) {
  const auto inst = parse_dataset(testing::read_data("grimmo.jsonl")).at(0);
  const auto t = parse_trajectory(testing::read_data("grimmo_option_shortcut.txt"));
  for (auto _ : state) benchmark::DoNotOptimize(count_option_mentions(t, inst.options));
}
BENCHMARK(BM_OptionMentions);

void BM_RepetitionRatio(benchmark::State& state) {
  const auto inst = testing::synthetic_dataset(1, 0)[0];
  const TrajectorySynthesizer synth;
  Rng rng(1);
  const std::string text = synth.thinking(inst, 'A', TemplateFamily::Verbose, rng);
  const auto words = default_tokenizer().split(text);
  for (auto _ : state) benchmark::DoNotOptimize(repetition_ratio(words, 3));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(words.size()));
}
BENCHMARK(BM_RepetitionRatio);

void BM_GroupAdvantages(benchmark::State& state) {
  std::vector<double> r(static_cast<std::size_t>(state.range(0)));
  Rng rng(3);
  for (auto& x : r) x = rng.uniform01();
  for (auto _ : state) benchmark::DoNotOptimize(group_advantages(r, 1e-8));
}
BENCHMARK(BM_GroupAdvantages)->Arg(5)->Arg(64);

void BM_BuildPairs(benchmark::State& state) {
  Rng rng(4);
  std::vector<ScoredSegment> segs;
  for (int i = 0; i < state.range(0); ++i) {
    segs.push_back({"q" + std::to_string(i % 20), "r" + std::to_string(i), static_cast<int>(rng.uniform_index(2)),
                    rng.uniform01(), rng.uniform_index(600), 200 + rng.uniform_index(3000), rng.uniform_index(10) == 0});
  }
  for (auto _ : state) benchmark::DoNotOptimize(build_pairs(segs));
}
BENCHMARK(BM_BuildPairs)->Arg(200)->Arg(2000);

}  // namespace
}  // namespace sipreward

BENCHMARK_MAIN();
