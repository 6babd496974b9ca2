#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <set>

#include "helpers.hpp"
#include "ldt/defaults.hpp"
#include "ldt/inference.hpp"
#include "ldt/labeldesc.hpp"
#include "ldt/prompting.hpp"
#include "ldt/trainer.hpp"
#include "ldt/util.hpp"

using namespace ldt;
using ldt::test::make_tiny_model;
using ldt::test::synthetic_keyword_corpus;

namespace {

LabelDescSet tiny_binary_set() {
  // Balanced two-label description set over the fixture tokenizer's merged words.
  LabelDescSet set;
  set.task_id = "tiny2";
  set.label_names = {"Negative", "Positive"};
  auto add = [&](int label, const std::string& text) {
    set.examples.push_back({label, text, DescSource::Term});
  };
  add(0, "awful");
  add(0, "terrible");
  add(0, "bad");
  add(0, "It was terrible.");
  add(1, "great");
  add(1, "good");
  add(1, "okay");
  add(1, "It was great.");
  return set;
}

Pattern sentiment_pattern(const std::string& key) {
  return *find_pattern(pattern_catalog(TaskKind::Sentiment), key);
}

TrainConfig smoke_config(int steps, uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.learning_rate = 5e-3;
  cfg.max_steps = steps;
  cfg.batch_size = 1;
  cfg.seed = seed;
  return cfg;
}

bool params_identical(const std::map<std::string, MatF>& a,
                      const std::map<std::string, MatF>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, value] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.size() != value.size()) return false;
    if (std::memcmp(value.data(), it->second.data(), sizeof(float) * value.size()) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("restricted loss ignores non-candidate logits") {
  VecF logits = VecF::Zero(50);
  logits[10] = 1.0f;
  logits[20] = -0.5f;
  logits[30] = 0.25f;
  std::vector<int> candidates = {10, 20, 30};
  auto [loss, grad] = restricted_cross_entropy(logits, candidates, 0);

  VecF shifted = logits;
  for (int i = 0; i < shifted.size(); ++i)
    if (i != 10 && i != 20 && i != 30) shifted[i] += 100.0f;
  auto [loss2, grad2] = restricted_cross_entropy(shifted, candidates, 0);
  CHECK(loss == loss2);
  CHECK(grad == grad2);

  // Shifting every candidate by a constant also changes nothing (softmax
  // invariance), and the gradient sums to zero.
  VecF all_shift = logits;
  for (int id : candidates) all_shift[id] += 3.0f;
  auto [loss3, grad3] = restricted_cross_entropy(all_shift, candidates, 0);
  CHECK(loss3 == doctest::Approx(loss).epsilon(1e-6));
  float gsum = 0;
  for (float g : grad) gsum += g;
  CHECK(gsum == doctest::Approx(0.0f).epsilon(1e-5));

  CHECK_THROWS_AS(restricted_cross_entropy(logits, {}, 0), Error);
  CHECK_THROWS_AS(restricted_cross_entropy(logits, candidates, 5), Error);
}

TEST_CASE("epoch stream is balanced over every full epoch") {
  LabelDescSet set = tiny_binary_set();
  EpochStream stream(set.examples.size(), 42);
  for (int epoch = 0; epoch < 5; ++epoch) {
    std::vector<long> counts(2, 0);
    std::set<size_t> seen;
    for (size_t i = 0; i < set.examples.size(); ++i) {
      size_t idx = stream.next();
      seen.insert(idx);
      ++counts[set.examples[idx].label_index];
    }
    CHECK(seen.size() == set.examples.size());  // a permutation, not sampling
    CHECK(counts[0] == counts[1]);
  }
}

TEST_CASE("zero training steps leave the model parameter-identical") {
  MaskedLmEncoder model = make_tiny_model(31);
  auto before = model.snapshot();
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Yelp2), model.tokenizer());
  TrainResult r = train_label_desc(model, tiny_binary_set(), sentiment_pattern("prompt3"),
                                   vmap, smoke_config(0));
  CHECK(r.steps_run == 0);
  CHECK(params_identical(before, model.snapshot()));
}

TEST_CASE("training reduces the loss on a separable toy set") {
  MaskedLmEncoder model = make_tiny_model(31);
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Yelp2), model.tokenizer());
  TrainResult r = train_label_desc(model, tiny_binary_set(), sentiment_pattern("prompt3"),
                                   vmap, smoke_config(60));
  REQUIRE(r.loss_trace.size() == 60);
  float first = 0, last = 0;
  for (int i = 0; i < 8; ++i) {
    first += r.loss_trace[i].loss;
    last += r.loss_trace[r.loss_trace.size() - 1 - i].loss;
  }
  CHECK(last < first);
}

TEST_CASE("training steers held-out keyword texts to the right verbalizer") {
  MaskedLmEncoder model = make_tiny_model(37);
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Yelp2), model.tokenizer());
  Pattern pattern = sentiment_pattern("prompt3");

  // A randomly initialized encoder only generalizes over token compositions
  // it has geometry for, so the set covers one- and two-word texts; the
  // held-out probe is the unseen two-word recombinations.
  LabelDescSet set;
  set.task_id = "tiny2x";
  set.label_names = {"Negative", "Positive"};
  auto add = [&](int l, const std::string& t) {
    set.examples.push_back({l, t, DescSource::Term});
  };
  add(0, "awful");
  add(0, "terrible");
  add(0, "bad");
  add(0, "terrible awful");
  add(0, "bad terrible");
  add(0, "It was terrible.");
  add(1, "great");
  add(1, "good");
  add(1, "okay");
  add(1, "good great");
  add(1, "great okay");
  add(1, "It was great.");

  TrainConfig cfg = smoke_config(240, 5);
  cfg.learning_rate = 3e-3;
  train_label_desc(model, set, pattern, vmap, cfg);

  const std::vector<std::vector<std::string>> pools = {{"awful", "terrible", "bad"},
                                                       {"great", "good", "okay"}};
  long correct = 0, total = 0;
  for (int label = 0; label < 2; ++label) {
    for (const auto& a : pools[label])
      for (const auto& b : pools[label]) {
        ++total;
        if (classify_mlm(model, a + " " + b, pattern, vmap).label_index == label) ++correct;
      }
  }
  double acc = static_cast<double>(correct) / static_cast<double>(total);
  CHECK(acc >= 0.9);
}

TEST_CASE("identical seeds give bit-identical checkpoints, different seeds differ") {
  VerbalizerMap vmap;
  auto run = [&](uint64_t seed) {
    MaskedLmEncoder model = make_tiny_model(31);
    vmap = validate_single_token(verbalizers_for(DatasetId::Yelp2), model.tokenizer());
    train_label_desc(model, tiny_binary_set(), sentiment_pattern("prompt3"), vmap,
                     smoke_config(12, seed));
    return model.snapshot();
  };
  auto a = run(0);
  auto b = run(0);
  auto c = run(1);
  CHECK(params_identical(a, b));
  CHECK_FALSE(params_identical(a, c));
}

TEST_CASE("frozen groups stay bit-identical through training, others move") {
  MaskedLmEncoder model = make_tiny_model(31);
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Yelp2), model.tokenizer());
  auto before = model.snapshot();

  TrainConfig cfg = smoke_config(25);
  cfg.freeze = FreezePolicy::lower_half(model.num_layers());  // layer_0 of 2
  train_label_desc(model, tiny_binary_set(), sentiment_pattern("prompt3"), vmap, cfg);
  auto after = model.snapshot();

  bool layer0_same = true, layer1_same = true;
  for (const auto& [name, value] : after) {
    bool same = std::memcmp(value.data(), before.at(name).data(),
                            sizeof(float) * value.size()) == 0;
    if (name.find("encoder.layer.0.") != std::string::npos) layer0_same &= same;
    if (name.find("encoder.layer.1.") != std::string::npos) layer1_same &= same;
  }
  CHECK(layer0_same);
  CHECK_FALSE(layer1_same);
}

TEST_CASE("training requires a validated map and a balanced set") {
  MaskedLmEncoder model = make_tiny_model();
  VerbalizerMap raw = verbalizers_for(DatasetId::Yelp2);  // not validated
  CHECK_THROWS_AS(train_label_desc(model, tiny_binary_set(), sentiment_pattern("prompt3"),
                                   raw, smoke_config(1)),
                  Error);
  VerbalizerMap vmap = validate_single_token(raw, model.tokenizer());
  LabelDescSet unbalanced = tiny_binary_set();
  unbalanced.examples.pop_back();
  CHECK_THROWS_AS(train_label_desc(model, unbalanced, sentiment_pattern("prompt3"), vmap,
                                   smoke_config(1)),
                  Error);
  LabelDescSet empty;
  empty.label_names = {"Negative", "Positive"};
  CHECK_THROWS_AS(
      train_label_desc(model, empty, sentiment_pattern("prompt3"), vmap, smoke_config(1)),
      Error);
}

TEST_CASE("random verbalizers extend the vocabulary and come pre-validated") {
  MaskedLmEncoder model = make_tiny_model();
  int v0 = model.vocab_size();
  auto labels = dataset_spec(DatasetId::AgNews).label_names;
  VerbalizerMap vmap = random_verbalizers(model, labels, 7);
  REQUIRE(vmap.validated());
  CHECK(vmap.entries[0].label == "World");
  CHECK(vmap.entries[0].word == "RANDOM1");
  CHECK(vmap.entries[3].label == "Sci/Tech");
  CHECK(vmap.entries[3].word == "RANDOM4");
  CHECK(vmap.token_ids == std::vector<int>{v0, v0 + 1, v0 + 2, v0 + 3});
  CHECK(model.vocab_size() == v0 + 4);
  CHECK_THROWS_AS(random_verbalizers(model, {}, 0), Error);
}

TEST_CASE("derangement of two labels is the swap") {
  VerbalizerMap vmap;
  vmap.entries = {{"Negative", "awful"}, {"Positive", "great"}};
  VerbalizerMap deranged = derange_verbalizers(vmap, 0);
  CHECK(deranged.entries[0].label == "Negative");
  CHECK(deranged.entries[0].word == "great");
  CHECK(deranged.entries[1].word == "awful");

  VerbalizerMap single;
  single.entries = {{"Only", "word"}};
  CHECK_THROWS_AS(derange_verbalizers(single, 0), Error);
}

TEST_CASE("derangements of four labels hit all nine assignments and only those") {
  // Oracle: enumerate the 24 permutations of 4 and keep the fixed-point-free
  // ones.
  std::set<std::vector<int>> expected;
  std::vector<int> perm = {0, 1, 2, 3};
  do {
    bool fixed = false;
    for (int i = 0; i < 4; ++i)
      if (perm[i] == i) fixed = true;
    if (!fixed) expected.insert(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  REQUIRE(expected.size() == 9);

  VerbalizerMap vmap = verbalizers_for(DatasetId::AgNews);
  std::set<std::vector<int>> seen;
  for (uint64_t seed = 0; seed < 400; ++seed) {
    VerbalizerMap d = derange_verbalizers(vmap, seed);
    std::vector<int> assignment(4);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j)
        if (d.entries[i].word == vmap.entries[j].word) assignment[i] = j;
      CHECK(d.entries[i].word != vmap.entries[i].word);  // no fixed points, ever
    }
    seen.insert(assignment);
  }
  CHECK(seen == expected);
}

TEST_CASE("derangement permutes token ids together with words") {
  MaskedLmEncoder model = make_tiny_model();
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Yelp2), model.tokenizer());
  VerbalizerMap d = derange_verbalizers(vmap, 3);
  REQUIRE(d.validated());
  for (size_t i = 0; i < d.entries.size(); ++i)
    CHECK(*model.tokenizer().single_token_id_in_mask_context(d.entries[i].word) ==
          d.token_ids[i]);
}

TEST_CASE("classifier training learns a separable toy set") {
  MaskedLmEncoder model = make_tiny_model(9);
  LabelDescSet set = tiny_binary_set();
  TrainConfig cfg = smoke_config(80);
  cfg.learning_rate = 1e-2;
  TrainResult r = train_classifier(model, set, cfg);
  CHECK(model.has_classifier_head());
  CHECK(r.steps_run == 80);
  float first = r.loss_trace.front().loss;
  float last = r.loss_trace.back().loss;
  CHECK(last < first);
}

TEST_CASE("untrained classifier head sits at chance on balanced data") {
  MaskedLmEncoder model = make_tiny_model(19);
  model.attach_classifier_head(2, 3);
  auto corpus = synthetic_keyword_corpus(DatasetId::Sst2, 200, 5);
  long correct = 0;
  for (const auto& rec : corpus.records)
    if (classify_pooled(model, rec.text).label_index == rec.label_index) ++correct;
  double acc = static_cast<double>(correct) / static_cast<double>(corpus.records.size());
  // 99% binomial interval around 0.5 for n=400 is roughly +-0.065.
  CHECK(acc > 0.35);
  CHECK(acc < 0.65);
}

TEST_CASE("few-shot training tracks dev accuracy and restores the best epoch") {
  MaskedLmEncoder model = make_tiny_model(23);
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Sst2), model.tokenizer());
  auto train = synthetic_keyword_corpus(DatasetId::Sst2, 6, 1);
  auto dev = synthetic_keyword_corpus(DatasetId::Sst2, 4, 2);

  TrainConfig cfg = smoke_config(0, 11);
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 2;
  cfg.epochs = 4;
  Pattern pattern = sentiment_pattern("prompt3");
  TrainResult r = train_supervised_fewshot(model, train, dev, pattern, vmap, cfg);
  REQUIRE(r.dev_trace.size() == 4);
  REQUIRE(r.best_epoch >= 1);

  double best = 0.0;
  for (const auto& p : r.dev_trace) best = std::max(best, p.accuracy);
  CHECK(r.dev_trace[r.best_epoch - 1].accuracy == best);
  // First epoch reaching the maximum wins.
  for (int e = 0; e < r.best_epoch - 1; ++e) CHECK(r.dev_trace[e].accuracy < best);

  // The restored parameters reproduce the recorded best dev accuracy.
  long correct = 0;
  for (const auto& rec : dev.records) {
    auto pred = classify_mlm(model, rec.text, pattern, vmap);
    if (pred.label_index == rec.label_index) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(dev.records.size()) ==
        doctest::Approx(best));

  LabeledCorpus empty_dev{DatasetId::Sst2, Split::Dev, {}};
  CHECK_THROWS_AS(train_supervised_fewshot(model, train, empty_dev, pattern, vmap, cfg),
                  Error);
}

TEST_CASE("a one-record dev set degenerates to the first peak epoch") {
  MaskedLmEncoder model = make_tiny_model(29);
  VerbalizerMap vmap =
      validate_single_token(verbalizers_for(DatasetId::Sst2), model.tokenizer());
  auto train = synthetic_keyword_corpus(DatasetId::Sst2, 3, 1);
  LabeledCorpus dev{DatasetId::Sst2, Split::Dev, {{"great great great", 1}}};
  TrainConfig cfg = smoke_config(0, 2);
  cfg.epochs = 3;
  cfg.batch_size = 1;
  TrainResult r = train_supervised_fewshot(model, train, dev, sentiment_pattern("prompt3"),
                                           vmap, cfg);
  REQUIRE(r.dev_trace.size() == 3);
  double best = 0;
  for (const auto& p : r.dev_trace) best = std::max(best, p.accuracy);
  CHECK(r.dev_trace[r.best_epoch - 1].accuracy == best);
}

TEST_CASE("paper defaults table matches the tuned hyperparameters") {
  CHECK(paper_default("ldt", ModelSize::Base).learning_rate == 5e-7);
  CHECK(paper_default("ldt", ModelSize::Base).steps == 2160);
  CHECK(paper_default("ldt", ModelSize::Large).steps == 1920);
  CHECK(paper_default("mismatched", ModelSize::Base).learning_rate == 5e-5);
  CHECK(paper_default("mismatched", ModelSize::Large).learning_rate == 5e-6);
  CHECK(paper_default("mismatched", ModelSize::Large).steps == 3000);
  CHECK(paper_default("random", ModelSize::Base).learning_rate == 5e-5);
  CHECK(paper_default("random", ModelSize::Base).steps == 2160);
  CHECK(paper_default("random", ModelSize::Large).learning_rate == 5e-6);
  CHECK(paper_default("random", ModelSize::Large).steps == 3240);
  CHECK(paper_default("classifier", ModelSize::Base).learning_rate == 1e-5);
  CHECK(paper_default("classifier", ModelSize::Base).steps == 1920);
  CHECK(paper_default("classifier", ModelSize::Large).learning_rate == 1e-6);
  CHECK(paper_default("classifier", ModelSize::Large).steps == 2280);

  CHECK(learning_rate_grid() == std::vector<double>{5e-7, 1e-6, 5e-6, 1e-5, 5e-5});
  CHECK(fewshot_batch_size(10) == 1);
  CHECK(fewshot_batch_size(100) == 2);
  CHECK(fewshot_batch_size(500) == 4);
  CHECK(kFewshotEpochs == 15);

  CHECK(tuned_pattern_key("ldt", ModelSize::Base) == "prompt9");
  CHECK(tuned_pattern_key("ldt", ModelSize::Large) == "prompt7");
  CHECK(tuned_pattern_key("mismatched", ModelSize::Base) == "qa3");
  CHECK(tuned_pattern_key("random", ModelSize::Large) == "prompt6");
}

TEST_CASE("the shipped profile file equals the generated profile text") {
  auto path =
      std::filesystem::path(LDT_SOURCE_DIR) / "data" / "profiles" / "paper-defaults.profile";
  CHECK(read_file(path) == paper_defaults_profile_text());
}

}  // TEST_SUITE
