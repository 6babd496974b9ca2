#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ldt/corpus.hpp"
#include "ldt/encoder.hpp"
#include "ldt/labeldesc.hpp"
#include "ldt/prompting.hpp"
#include "ldt/trainer.hpp"

namespace ldt {

double accuracy(const std::vector<int>& preds, const std::vector<int>& gold);

struct PrfRow {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

// Per-label precision/recall/F1; a zero denominator yields 0.
std::vector<PrfRow> per_label_prf(const std::vector<int>& preds, const std::vector<int>& gold,
                                  int num_labels);

struct RunResult {
  DatasetId dataset = DatasetId::AgNews;
  ModelSize model = ModelSize::Other;
  std::string variant;  // zeroshot | ldt | random | mismatched | classifier | fewshot | ldt20ng
  std::optional<std::string> pattern;  // e.g. "prompt9"
  std::optional<uint64_t> seed;
  double accuracy = 0.0;
  std::vector<PrfRow> per_label;
};

// Builds a result whose accuracy and per-label table come from one confusion
// pass, keeping the micro consistency invariant by construction.
RunResult make_run_result(const std::vector<int>& preds, const std::vector<int>& gold,
                          const DatasetSpec& spec);

enum class AggregateMode {
  ZeroshotOverPatterns,  // mean/std over patterns
  LdtPatternsBySeed,     // grand mean over all runs + one std over patterns per seed
  SeedsSinglePattern,    // mean/std over seeds for one pattern
};

struct AggregateResult {
  std::string group_key;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 when n < 2
  int n = 0;
};

std::vector<AggregateResult> aggregate(const std::vector<RunResult>& results,
                                       AggregateMode mode);

double sample_stddev(const std::vector<double>& values);

// --- tuning-task protocol ---

struct PlateauChoice {
  int step = 0;       // midpoint of the widest tolerance window
  double value = 0.0; // accuracy at that point
  int width = 0;      // points in the window
  double window_mean = 0.0;
};

// The widest run of eval points within `tolerance` of the curve's maximum;
// the training-step budget is the midpoint of that run.
PlateauChoice select_plateau(const std::vector<DevPoint>& curve, double tolerance);

struct TuneCurve {
  double learning_rate = 0.0;
  std::vector<DevPoint> points;  // averaged over patterns
};

// Ranks learning rates by their plateau quality and returns (lr, steps).
std::pair<double, int> select_lr_and_steps(const std::vector<TuneCurve>& curves,
                                           double tolerance);

using BackendFactory = std::function<MaskedLmEncoder()>;

struct TuneOutcome {
  double learning_rate = 0.0;
  int steps = 0;
  std::vector<TuneCurve> curves;
};

// Full tuning protocol: for every grid learning rate, train one model per
// pattern on the label-description set, evaluating dev accuracy every
// eval_every steps; curves are averaged over patterns and the plateau rule
// picks the final (lr, steps).
TuneOutcome tune_on_20ng(const BackendFactory& factory, const LabelDescSet& labeldesc,
                         const std::vector<Pattern>& patterns, const VerbalizerMap& vmap,
                         const LabeledCorpus& dev_corpus,
                         const std::vector<double>& learning_rate_grid, int max_steps,
                         int eval_every, double tolerance);

// Highest dev accuracy wins; earlier entry on ties.
std::string select_pattern(const std::vector<std::pair<std::string, double>>& dev_accuracies);

// --- report emitters ---

std::string results_to_tsv(const std::vector<RunResult>& results,
                           const std::vector<std::string>& label_names);
std::vector<RunResult> results_from_tsv(const std::string& tsv);

// "77.4 ±4.9"-style cells, one row per (variant, model), one column per group.
std::string render_accuracy_table(const std::vector<AggregateResult>& aggregates,
                                  const std::string& title);
std::string render_prf_table(const RunResult& result, const std::vector<std::string>& labels);

}  // namespace ldt
