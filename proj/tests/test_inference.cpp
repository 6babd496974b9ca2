#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ldt/inference.hpp"
#include "ldt/trainer.hpp"
#include "ldt/util.hpp"

using namespace ldt;
using ldt::test::make_tiny_model;
using ldt::test::synthetic_keyword_corpus;

namespace {

Pattern sentiment_pattern(const std::string& key) {
  return *find_pattern(pattern_catalog(TaskKind::Sentiment), key);
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("argmax breaks ties toward the lowest label index") {
  CHECK(argmax_lowest({1.0f, 3.0f, 2.0f}) == 1);
  CHECK(argmax_lowest({2.0f, 2.0f, 2.0f}) == 0);
  CHECK(argmax_lowest({1.0f, 2.0f, 2.0f}) == 1);
  CHECK_THROWS_AS(argmax_lowest({}), Error);
}

TEST_CASE("a singleton verbalizer map always predicts that label") {
  MaskedLmEncoder model = make_tiny_model();
  VerbalizerMap vmap;
  vmap.entries = {{"Only", "great"}};
  vmap.token_ids = {*model.tokenizer().single_token_id_in_mask_context("great")};
  for (const char* text : {"bad game", "great movie", "whatever"}) {
    Prediction p = classify_mlm(model, text, sentiment_pattern("prompt3"), vmap);
    CHECK(p.label_index == 0);
    CHECK(p.scores.size() == 1);
  }
}

TEST_CASE("classify_mlm equals an independent gather over the mask scores") {
  MaskedLmEncoder model = make_tiny_model(77);  // fixed weights fixture
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Yelp5), model.tokenizer());
  Pattern pattern = sentiment_pattern("prompt3");
  std::string text = "great movie";

  Prediction pred = classify_mlm(model, text, pattern, vmap);

  // Oracle: recompute via the raw pieces the prediction is defined by.
  EncodedInput input = model.tokenize_with_mask(render(pattern, text));
  VecF logits = model.mask_distribution(input);
  int best = 0;
  for (size_t i = 0; i < vmap.token_ids.size(); ++i) {
    CHECK(pred.scores[i] == logits[vmap.token_ids[i]]);
    if (logits[vmap.token_ids[i]] > logits[vmap.token_ids[best]]) best = static_cast<int>(i);
  }
  CHECK(pred.label_index == best);

  VerbalizerMap unvalidated = verbalizers_for(DatasetId::Yelp5);
  CHECK_THROWS_AS(classify_mlm(model, text, pattern, unvalidated), Error);
}

TEST_CASE("adding a constant to all scores keeps the argmax") {
  std::vector<float> scores = {0.3f, -1.0f, 2.5f, 2.4f};
  int base = argmax_lowest(scores);
  for (auto& s : scores) s += 123.0f;
  CHECK(argmax_lowest(scores) == base);
}

TEST_CASE("predict_corpus is order-preserving and batch-size invariant") {
  MaskedLmEncoder model = make_tiny_model(13);
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Sst2), model.tokenizer());
  auto corpus = synthetic_keyword_corpus(DatasetId::Sst2, 8, 3);  // 16 records
  Pattern pattern = sentiment_pattern("qa1");

  auto b1 = predict_corpus(model, corpus, pattern, vmap, 1);
  auto b8 = predict_corpus(model, corpus, pattern, vmap, 8);
  REQUIRE(b1.size() == corpus.records.size());
  REQUIRE(b8.size() == b1.size());
  for (size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i].label_index == b8[i].label_index);
    for (size_t s = 0; s < b1[i].scores.size(); ++s) {
      float rel = std::abs(b1[i].scores[s] - b8[i].scores[s]) /
                  std::max(1.0f, std::abs(b1[i].scores[s]));
      CHECK(rel <= 1e-5f);
    }
  }

  // Sharded execution reassembles the same order.
  auto threaded = predict_corpus(model, corpus, pattern, vmap, 1, 4);
  for (size_t i = 0; i < b1.size(); ++i)
    CHECK(threaded[i].label_index == b1[i].label_index);

  // predict_corpus == map(classify_mlm).
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    Prediction one = classify_mlm(model, corpus.records[i].text, pattern, vmap);
    CHECK(one.label_index == b1[i].label_index);
  }
}

TEST_CASE("empty text classifies on the pattern frame alone") {
  MaskedLmEncoder model = make_tiny_model();
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Sst2), model.tokenizer());
  Prediction p = classify_mlm(model, "", sentiment_pattern("prompt3"), vmap);
  CHECK(p.label_index >= 0);
  CHECK(p.scores.size() == 2);
}

TEST_CASE("classify_pooled needs a head and is deterministic") {
  MaskedLmEncoder model = make_tiny_model(41);
  CHECK_THROWS_AS(classify_pooled(model, "text"), Error);
  model.attach_classifier_head(2, 7);
  Prediction a = classify_pooled(model, "same text");
  Prediction b = classify_pooled(model, "same text");
  CHECK(a.label_index == b.label_index);
  CHECK(a.scores == b.scores);
}

TEST_CASE("a trained classifier separates disjoint keyword families") {
  MaskedLmEncoder model = make_tiny_model(55);
  // 50 examples per label from the generator, trained through the head.
  auto train = synthetic_keyword_corpus(DatasetId::Sst2, 50, 11);
  LabelDescSet as_set;
  as_set.task_id = "synthetic";
  as_set.label_names = {"Negative", "Positive"};
  for (const auto& r : train.records)
    as_set.examples.push_back({r.label_index, r.text, DescSource::Term});

  TrainConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.max_steps = 250;
  cfg.seed = 1;
  train_classifier(model, as_set, cfg);

  auto held_out = synthetic_keyword_corpus(DatasetId::Sst2, 40, 999);
  long correct = 0;
  for (const auto& r : held_out.records)
    if (classify_pooled(model, r.text).label_index == r.label_index) ++correct;
  double acc = static_cast<double>(correct) / static_cast<double>(held_out.records.size());
  CHECK(acc >= 0.95);  // oracle: the generator's own labels
}

TEST_CASE("predictions file round-trips") {
  auto dir = ldt::test::fresh_temp_dir("preds");
  std::vector<Prediction> preds = {{0, {0.5f, -0.25f}}, {1, {-1.0f, 2.0f}}};
  save_predictions(preds, dir / "p.tsv");
  auto loaded = load_predictions(dir / "p.tsv");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].label_index == 0);
  CHECK(loaded[1].label_index == 1);
  REQUIRE(loaded[0].scores.size() == 2);
  CHECK(loaded[0].scores[0] == doctest::Approx(0.5f));
  CHECK(loaded[1].scores[1] == doctest::Approx(2.0f));
}

}  // TEST_SUITE
