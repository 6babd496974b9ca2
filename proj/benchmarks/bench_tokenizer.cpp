#include <benchmark/benchmark.h>

#include "helpers.hpp"
#include "ldt/tokenizer.hpp"

namespace {

const std::string kParagraph =
    "The match was great, although the first half dragged. Overpriced seats, "
    "awful parking, and yet the crowd stayed loud until the final whistle. "
    "Overall, a good night out for everyone who likes sports and bad weather.";

void BM_EncodeParagraph(benchmark::State& state) {
  ldt::ByteLevelBpe tok = ldt::test::make_test_tokenizer();
  for (auto _ : state) {
    auto ids = tok.encode(kParagraph);
    benchmark::DoNotOptimize(ids);
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations()) * kParagraph.size());
}
BENCHMARK(BM_EncodeParagraph);

void BM_Pretokenize(benchmark::State& state) {
  for (auto _ : state) {
    auto parts = ldt::ByteLevelBpe::pretokenize(kParagraph);
    benchmark::DoNotOptimize(parts);
  }
}
BENCHMARK(BM_Pretokenize);

}  // namespace
