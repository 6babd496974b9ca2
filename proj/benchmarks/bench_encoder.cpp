#include <benchmark/benchmark.h>

#include "helpers.hpp"
#include "ldt/encoder.hpp"
#include "ldt/optimizer.hpp"
#include "ldt/prompting.hpp"
#include "ldt/trainer.hpp"

namespace {

using namespace ldt;

EncodedInput input_of_length(const MaskedLmEncoder& model, int words) {
  std::string text;
  for (int i = 0; i < words; ++i) text += i % 2 ? " great" : " bad";
  auto cat = pattern_catalog(TaskKind::Sentiment);
  return model.tokenize_with_mask(render(*find_pattern(cat, "prompt3"), text));
}

void BM_MaskForward(benchmark::State& state) {
  MaskedLmEncoder model = ldt::test::make_tiny_model(1);
  EncodedInput in = input_of_length(model, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    VecF logits = model.mask_distribution(in);
    benchmark::DoNotOptimize(logits);
  }
  state.SetLabel(std::to_string(in.ids.size()) + " tokens");
}
BENCHMARK(BM_MaskForward)->Arg(8)->Arg(32)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
  MaskedLmEncoder model = ldt::test::make_tiny_model(1);
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Yelp2), model.tokenizer());
  EncodedInput in = input_of_length(model, 16);
  AdamW opt(model.parameters(), {1e-4});
  for (auto _ : state) {
    opt.zero_grad();
    ForwardCache cache;
    VecF logits = model.mlm_logits(in, cache);
    auto [loss, grad] = restricted_cross_entropy(logits, vmap.token_ids, 0);
    benchmark::DoNotOptimize(loss);
    std::vector<std::pair<int, float>> dlogits;
    for (size_t i = 0; i < vmap.token_ids.size(); ++i)
      dlogits.emplace_back(vmap.token_ids[i], grad[i]);
    model.mlm_backward(cache, dlogits);
    opt.step();
  }
}
BENCHMARK(BM_TrainStep);

void BM_PooledForward(benchmark::State& state) {
  MaskedLmEncoder model = ldt::test::make_tiny_model(1);
  EncodedInput in = model.tokenize_plain("a short line of text to embed");
  for (auto _ : state) {
    VecF pooled = model.pooled_representation(in);
    benchmark::DoNotOptimize(pooled);
  }
}
BENCHMARK(BM_PooledForward);

}  // namespace
