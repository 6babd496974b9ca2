#include <benchmark/benchmark.h>

#include <random>

#include "ldt/evalkit.hpp"

namespace {

void BM_PerLabelPrf(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const int n = static_cast<int>(state.range(0));
  std::vector<int> preds(n), gold(n);
  for (int i = 0; i < n; ++i) {
    preds[i] = static_cast<int>(rng() % 10);
    gold[i] = static_cast<int>(rng() % 10);
  }
  for (auto _ : state) {
    auto rows = ldt::per_label_prf(preds, gold, 10);
    benchmark::DoNotOptimize(rows);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_PerLabelPrf)->Arg(10000)->Arg(100000);

void BM_StratifiedSubsample(benchmark::State& state) {
  std::mt19937_64 rng(2);
  ldt::LabeledCorpus corpus{ldt::DatasetId::Yahoo, ldt::Split::Test, {}};
  for (int i = 0; i < 60000; ++i)
    corpus.records.push_back({"text " + std::to_string(i), static_cast<int>(rng() % 10)});
  for (auto _ : state) {
    auto sub = ldt::stratified_subsample(corpus, 1000, 0);
    benchmark::DoNotOptimize(sub);
  }
}
BENCHMARK(BM_StratifiedSubsample);

}  // namespace
