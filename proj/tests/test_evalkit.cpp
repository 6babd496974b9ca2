#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "ldt/evalkit.hpp"
#include "ldt/util.hpp"

using namespace ldt;

namespace {

RunResult quick_result(double acc, const std::string& pattern, std::optional<uint64_t> seed) {
  RunResult r;
  r.dataset = DatasetId::AgNews;
  r.model = ModelSize::Base;
  r.variant = "zeroshot";
  r.pattern = pattern;
  r.seed = seed;
  r.accuracy = acc;
  return r;
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("accuracy counts matches") {
  CHECK(accuracy({0, 1, 2}, {0, 1, 2}) == 1.0);
  // Oracle: 3 of 4 agree.
  CHECK(accuracy({0, 1, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(accuracy({}, {}), Error);
  CHECK_THROWS_AS(accuracy({0}, {0, 1}), Error);
}

TEST_CASE("per-label prf matches hand-counted confusion cells") {
  // gold A A B, pred A B B: for A, TP=1 FP=0 FN=1.
  auto rows = per_label_prf({0, 1, 1}, {0, 0, 1}, 2);
  CHECK(rows[0].precision == doctest::Approx(1.0));
  CHECK(rows[0].recall == doctest::Approx(0.5));
  CHECK(rows[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(rows[0].support == 2);
  CHECK(rows[1].precision == doctest::Approx(0.5));
  CHECK(rows[1].recall == doctest::Approx(1.0));
  CHECK(rows[1].support == 1);

  auto perfect = per_label_prf({0, 1, 2}, {0, 1, 2}, 3);
  for (const auto& row : perfect) {
    CHECK(row.precision == 1.0);
    CHECK(row.recall == 1.0);
    CHECK(row.f1 == 1.0);
  }

  // Absent label: zero everywhere with support 0.
  auto absent = per_label_prf({0, 0}, {0, 0}, 2);
  CHECK(absent[1].precision == 0.0);
  CHECK(absent[1].recall == 0.0);
  CHECK(absent[1].f1 == 0.0);
  CHECK(absent[1].support == 0);

  CHECK_THROWS_AS(per_label_prf({5}, {0}, 2), Error);
}

TEST_CASE("micro consistency and f1 bounds hold on random confusions") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    int labels = 2 + static_cast<int>(rng() % 5);
    int n = 20 + static_cast<int>(rng() % 200);
    std::vector<int> preds(n), gold(n);
    for (int i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng() % labels);
      gold[i] = static_cast<int>(rng() % labels);
    }
    auto rows = per_label_prf(preds, gold, labels);
    double tp_sum = 0;
    for (const auto& row : rows) {
      tp_sum += row.recall * static_cast<double>(row.support);
      CHECK(row.f1 <= std::max(row.precision, row.recall) + 1e-12);
      if (row.precision * row.recall == 0.0) CHECK(row.f1 == 0.0);
      else CHECK(row.f1 > 0.0);
    }
    CHECK(tp_sum / n == doctest::Approx(accuracy(preds, gold)));

    DatasetSpec pseudo{DatasetId::Yelp5,
                       std::vector<std::string>(labels, ""),
                       {}};
    for (int l = 0; l < labels; ++l) pseudo.label_names[l] = "L" + std::to_string(l);
    RunResult rr = make_run_result(preds, gold, pseudo);
    CHECK(rr.accuracy == doctest::Approx(accuracy(preds, gold)));
  }
}

TEST_CASE("two-point aggregation matches the closed form") {
  std::vector<RunResult> results = {quick_result(0.6, "qa1", std::nullopt),
                                    quick_result(0.8, "qa2", std::nullopt)};
  auto agg = aggregate(results, AggregateMode::ZeroshotOverPatterns);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].mean == doctest::Approx(0.7));
  // Oracle: sample std of {a, b} is |a - b| / sqrt(2).
  CHECK(agg[0].stddev == doctest::Approx(0.2 / std::sqrt(2.0)));
  CHECK(agg[0].n == 2);

  std::vector<RunResult> same = {quick_result(0.5, "qa1", std::nullopt),
                                 quick_result(0.5, "qa2", std::nullopt),
                                 quick_result(0.5, "qa3", std::nullopt)};
  CHECK(aggregate(same, AggregateMode::ZeroshotOverPatterns)[0].stddev == 0.0);
}

TEST_CASE("aggregation is permutation-invariant") {
  std::vector<RunResult> results;
  for (int i = 0; i < 6; ++i)
    results.push_back(quick_result(0.5 + 0.05 * i, "qa" + std::to_string(i), std::nullopt));
  auto forward = aggregate(results, AggregateMode::ZeroshotOverPatterns);
  std::reverse(results.begin(), results.end());
  auto backward = aggregate(results, AggregateMode::ZeroshotOverPatterns);
  CHECK(forward[0].mean == doctest::Approx(backward[0].mean));
  CHECK(forward[0].stddev == doctest::Approx(backward[0].stddev));
}

TEST_CASE("pattern-by-seed aggregation gives one std per seed plus a grand mean") {
  std::vector<RunResult> results;
  std::mt19937_64 rng(9);
  for (uint64_t seed = 0; seed < 3; ++seed)
    for (int p = 1; p <= 14; ++p) {
      auto r = quick_result(0.5 + 0.01 * static_cast<double>(rng() % 20),
                            "prompt" + std::to_string(p), seed);
      r.variant = "ldt";
      results.push_back(r);
    }
  auto agg = aggregate(results, AggregateMode::LdtPatternsBySeed);
  REQUIRE(agg.size() == 4);
  CHECK(agg[0].group_key == "overall");
  CHECK(agg[0].n == 42);
  for (int s = 1; s <= 3; ++s) {
    CHECK(agg[s].group_key == msg("seed=", s - 1));
    CHECK(agg[s].n == 14);
  }

  // Missing keys are an error.
  std::vector<RunResult> bad = {quick_result(0.5, "qa1", std::nullopt)};
  CHECK_THROWS_AS(aggregate(bad, AggregateMode::LdtPatternsBySeed), Error);
  CHECK_THROWS_AS(aggregate({}, AggregateMode::ZeroshotOverPatterns), Error);
}

TEST_CASE("single-pattern aggregation averages over seeds") {
  std::vector<RunResult> results = {quick_result(0.6, "prompt9", 0),
                                    quick_result(0.7, "prompt9", 1),
                                    quick_result(0.8, "prompt9", 2)};
  auto agg = aggregate(results, AggregateMode::SeedsSinglePattern);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].n == 3);
  CHECK(agg[0].mean == doctest::Approx(0.7));

  results.push_back(quick_result(0.5, "prompt8", 0));
  CHECK_THROWS_AS(aggregate(results, AggregateMode::SeedsSinglePattern), Error);
}

TEST_CASE("plateau selection takes the midpoint of the widest window") {
  // Oracle: scan of the synthetic curve; the flat tail within 0.5 points of
  // the max spans the last 10 points, so the midpoint is the 5th of those.
  std::vector<DevPoint> curve;
  for (int i = 1; i <= 20; ++i)
    curve.push_back({24 * i, 0.50 + 0.01 * i});  // rises to 0.70
  for (int i = 21; i <= 30; ++i) curve.push_back({24 * i, 0.698});
  // points within 0.005 of max 0.70: steps 24*20 (0.70) and the 10-point tail
  // => window covers indices 19..29 (11 points), midpoint index 24.
  PlateauChoice c = select_plateau(curve, 0.005);
  CHECK(c.width == 11);
  CHECK(c.step == 24 * 25);

  // A strictly rising curve has a single-point plateau at the peak.
  std::vector<DevPoint> rising;
  for (int i = 1; i <= 10; ++i) rising.push_back({i, 0.1 * i});
  PlateauChoice r = select_plateau(rising, 0.005);
  CHECK(r.width == 1);
  CHECK(r.step == 10);

  // Ties go to the first widest window.
  std::vector<DevPoint> twin = {{1, 0.9}, {2, 0.9}, {3, 0.1}, {4, 0.9}, {5, 0.9}};
  PlateauChoice t = select_plateau(twin, 0.005);
  CHECK(t.step == 1);

  CHECK_THROWS_AS(select_plateau({}, 0.005), Error);
}

TEST_CASE("learning-rate selection prefers the best plateau") {
  TuneCurve weak{1e-6, {}};
  TuneCurve strong{5e-7, {}};
  for (int i = 1; i <= 10; ++i) {
    weak.points.push_back({i, 0.4});
    strong.points.push_back({i, i <= 5 ? 0.81 : 0.8});
  }
  auto [lr, steps] = select_lr_and_steps({weak, strong}, 0.02);
  CHECK(lr == 5e-7);
  CHECK(steps == 5);  // midpoint of the 10-point window
}

TEST_CASE("the full tuning protocol returns a grid point and one curve per rate") {
  ByteLevelBpe tok = ldt::test::make_test_tokenizer();
  EncoderConfig cfg = ldt::test::tiny_config(tok.vocab_size());
  BackendFactory factory = [&] {
    return MaskedLmEncoder(cfg, ldt::test::make_test_tokenizer(), 5);
  };

  LabelDescSet set;
  set.task_id = "tiny2";
  set.label_names = {"Negative", "Positive"};
  set.examples = {{0, "awful", DescSource::Term}, {0, "bad", DescSource::Term},
                  {1, "great", DescSource::Term}, {1, "good", DescSource::Term}};
  LabeledCorpus dev = ldt::test::synthetic_keyword_corpus(DatasetId::Sst2, 3, 4);

  auto catalog = pattern_catalog(TaskKind::Sentiment);
  std::vector<Pattern> patterns = {*find_pattern(catalog, "prompt3"),
                                   *find_pattern(catalog, "prompt7")};
  VerbalizerMap vmap = verbalizers_for(DatasetId::Sst2);

  TuneOutcome outcome = tune_on_20ng(factory, set, patterns, vmap, dev, {1e-3, 1e-2},
                                     /*max_steps=*/8, /*eval_every=*/4, 0.005);
  REQUIRE(outcome.curves.size() == 2);
  for (const auto& c : outcome.curves) {
    REQUIRE(c.points.size() == 2);  // eval at steps 4 and 8
    CHECK(c.points[0].step == 4);
    CHECK(c.points[1].step == 8);
  }
  CHECK((outcome.learning_rate == 1e-3 || outcome.learning_rate == 1e-2));
  CHECK((outcome.steps == 4 || outcome.steps == 8));
}

TEST_CASE("pattern selection takes the dev argmax with first-entry ties") {
  CHECK(select_pattern({{"qa1", 0.5}, {"prompt9", 0.9}, {"prompt7", 0.7}}) == "prompt9");
  CHECK(select_pattern({{"qa1", 0.5}, {"qa2", 0.5}}) == "qa1");
  CHECK_THROWS_AS(select_pattern({}), Error);
}

TEST_CASE("results tsv round-trips") {
  RunResult r = quick_result(0.625, "prompt9", 2);
  r.variant = "ldt";
  r.per_label = {{1.0, 0.5, 2.0 / 3.0, 10}, {0.5, 1.0, 2.0 / 3.0, 5},
                 {0.0, 0.0, 0.0, 0}, {1.0, 1.0, 1.0, 3}};
  std::string tsv = results_to_tsv({r}, dataset_spec(DatasetId::AgNews).label_names);
  auto rows = results_from_tsv(tsv);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].dataset == DatasetId::AgNews);
  CHECK(rows[0].model == ModelSize::Base);
  CHECK(rows[0].variant == "ldt");
  CHECK(rows[0].pattern == std::optional<std::string>("prompt9"));
  CHECK(rows[0].seed == std::optional<uint64_t>(2));
  CHECK(rows[0].accuracy == doctest::Approx(0.625));
  REQUIRE(rows[0].per_label.size() == 4);
  CHECK(rows[0].per_label[0].recall == doctest::Approx(0.5));
  CHECK(rows[0].per_label[3].support == 3);
}

TEST_CASE("table renderers produce readable rows") {
  auto table = render_accuracy_table({{"patterns", 0.627, 0.074, 14}}, "zero-shot");
  CHECK(table.find("62.7") != std::string::npos);
  CHECK(table.find("7.4") != std::string::npos);
  CHECK(table.find("n=14") != std::string::npos);

  RunResult r = quick_result(0.8, "qa1", std::nullopt);
  r.per_label = {{0.9, 0.8, 0.85, 100}, {0.7, 0.6, 0.65, 50}};
  auto prf = render_prf_table(r, {"World", "Sports"});
  CHECK(prf.find("World") != std::string::npos);
  CHECK(prf.find("90.0") != std::string::npos);
}

}  // TEST_SUITE
