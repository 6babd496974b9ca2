#include "ldt/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ldt/util.hpp"

namespace ldt {

double accuracy(const std::vector<int>& preds, const std::vector<int>& gold) {
  if (preds.size() != gold.size())
    fail("prediction/gold length mismatch: ", preds.size(), " vs ", gold.size());
  if (preds.empty()) fail("empty prediction lists");
  long correct = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == gold[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::vector<PrfRow> per_label_prf(const std::vector<int>& preds, const std::vector<int>& gold,
                                  int num_labels) {
  if (preds.size() != gold.size()) fail("prediction/gold length mismatch");
  std::vector<long> tp(num_labels, 0), fp(num_labels, 0), fn(num_labels, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    int p = preds[i], g = gold[i];
    if (p < 0 || p >= num_labels) fail("prediction label ", p, " out of range");
    if (g < 0 || g >= num_labels) fail("gold label ", g, " out of range");
    if (p == g) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  std::vector<PrfRow> out(num_labels);
  for (int l = 0; l < num_labels; ++l) {
    out[l].support = tp[l] + fn[l];
    double pden = static_cast<double>(tp[l] + fp[l]);
    double rden = static_cast<double>(tp[l] + fn[l]);
    out[l].precision = pden > 0 ? tp[l] / pden : 0.0;
    out[l].recall = rden > 0 ? tp[l] / rden : 0.0;
    double fden = out[l].precision + out[l].recall;
    out[l].f1 = fden > 0 ? 2.0 * out[l].precision * out[l].recall / fden : 0.0;
  }
  return out;
}

RunResult make_run_result(const std::vector<int>& preds, const std::vector<int>& gold,
                          const DatasetSpec& spec) {
  RunResult r;
  r.dataset = spec.dataset_id;
  r.per_label = per_label_prf(preds, gold, spec.num_labels());
  long tp_sum = 0;
  for (int l = 0; l < spec.num_labels(); ++l) {
    // recompute TP from the rows to keep micro consistency explicit
    tp_sum += static_cast<long>(std::lround(r.per_label[l].recall *
                                            static_cast<double>(r.per_label[l].support)));
  }
  r.accuracy = static_cast<double>(tp_sum) / static_cast<double>(gold.size());
  double direct = accuracy(preds, gold);
  if (std::abs(direct - r.accuracy) > 1e-9) fail("micro consistency violated");
  return r;
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

namespace {

double mean_of(const std::vector<double>& values) {
  double m = 0.0;
  for (double v : values) m += v;
  return values.empty() ? 0.0 : m / static_cast<double>(values.size());
}

}  // namespace

std::vector<AggregateResult> aggregate(const std::vector<RunResult>& results,
                                       AggregateMode mode) {
  if (results.empty()) fail("nothing to aggregate");
  std::vector<AggregateResult> out;

  if (mode == AggregateMode::ZeroshotOverPatterns) {
    std::vector<double> accs;
    for (const auto& r : results) {
      if (!r.pattern) fail("zero-shot aggregation needs a pattern key on every run");
      accs.push_back(r.accuracy);
    }
    out.push_back({"patterns", mean_of(accs), sample_stddev(accs),
                   static_cast<int>(accs.size())});
    return out;
  }

  if (mode == AggregateMode::LdtPatternsBySeed) {
    std::map<uint64_t, std::vector<double>> by_seed;
    std::vector<double> all;
    for (const auto& r : results) {
      if (!r.pattern || !r.seed)
        fail("pattern-by-seed aggregation needs pattern and seed keys on every run");
      by_seed[*r.seed].push_back(r.accuracy);
      all.push_back(r.accuracy);
    }
    out.push_back({"overall", mean_of(all), sample_stddev(all), static_cast<int>(all.size())});
    for (const auto& [seed, accs] : by_seed)
      out.push_back({msg("seed=", seed), mean_of(accs), sample_stddev(accs),
                     static_cast<int>(accs.size())});
    return out;
  }

  // SeedsSinglePattern
  std::set<std::string> patterns;
  std::vector<double> accs;
  for (const auto& r : results) {
    if (!r.seed) fail("seed aggregation needs a seed key on every run");
    if (r.pattern) patterns.insert(*r.pattern);
    accs.push_back(r.accuracy);
  }
  if (patterns.size() > 1) fail("single-pattern aggregation got ", patterns.size(), " patterns");
  out.push_back({patterns.empty() ? "seeds" : *patterns.begin(), mean_of(accs),
                 sample_stddev(accs), static_cast<int>(accs.size())});
  return out;
}

PlateauChoice select_plateau(const std::vector<DevPoint>& curve, double tolerance) {
  if (curve.empty()) fail("empty tuning curve");
  double best = curve[0].accuracy;
  for (const auto& p : curve) best = std::max(best, p.accuracy);

  size_t best_start = 0, best_len = 0;
  size_t i = 0;
  while (i < curve.size()) {
    if (curve[i].accuracy < best - tolerance) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < curve.size() && curve[j].accuracy >= best - tolerance) ++j;
    if (j - i > best_len) {  // first widest window wins
      best_len = j - i;
      best_start = i;
    }
    i = j;
  }
  PlateauChoice choice;
  choice.width = static_cast<int>(best_len);
  size_t mid = best_start + (best_len - 1) / 2;
  choice.step = curve[mid].step;
  choice.value = curve[mid].accuracy;
  std::vector<double> window;
  for (size_t k = best_start; k < best_start + best_len; ++k)
    window.push_back(curve[k].accuracy);
  choice.window_mean = mean_of(window);
  return choice;
}

std::pair<double, int> select_lr_and_steps(const std::vector<TuneCurve>& curves,
                                           double tolerance) {
  if (curves.empty()) fail("no tuning curves");
  double best_quality = -1.0;
  double best_lr = 0.0;
  int best_steps = 0;
  for (const auto& c : curves) {
    PlateauChoice p = select_plateau(c.points, tolerance);
    if (p.window_mean > best_quality) {
      best_quality = p.window_mean;
      best_lr = c.learning_rate;
      best_steps = p.step;
    }
  }
  return {best_lr, best_steps};
}

TuneOutcome tune_on_20ng(const BackendFactory& factory, const LabelDescSet& labeldesc,
                         const std::vector<Pattern>& patterns, const VerbalizerMap& vmap,
                         const LabeledCorpus& dev_corpus,
                         const std::vector<double>& learning_rate_grid, int max_steps,
                         int eval_every, double tolerance) {
  if (dev_corpus.records.empty()) fail("empty dev corpus");
  if (patterns.empty()) fail("no patterns to tune over");

  TuneOutcome outcome;
  for (double lr : learning_rate_grid) {
    std::vector<std::vector<double>> per_pattern;  // [pattern][eval point]
    std::vector<int> steps_at;
    for (const auto& pattern : patterns) {
      MaskedLmEncoder model = factory();
      VerbalizerMap validated = validate_single_token(vmap, model.tokenizer());
      TrainConfig cfg;
      cfg.learning_rate = lr;
      cfg.max_steps = max_steps;
      cfg.eval_every = eval_every;
      cfg.freeze = FreezePolicy::lower_half(model.num_layers());
      DevEval dev = [&](const MaskedLmEncoder& m) {
        long correct = 0;
        for (const auto& r : dev_corpus.records) {
          EncodedInput in = m.tokenize_with_mask(render(pattern, r.text));
          VecF logits = m.mask_distribution(in);
          int best = 0;
          for (size_t i = 1; i < validated.token_ids.size(); ++i)
            if (logits[validated.token_ids[i]] > logits[validated.token_ids[best]])
              best = static_cast<int>(i);
          if (best == r.label_index) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(dev_corpus.records.size());
      };
      TrainResult res = train_label_desc(model, labeldesc, pattern, validated, cfg, dev);
      std::vector<double> accs;
      steps_at.clear();
      for (const auto& p : res.dev_trace) {
        accs.push_back(p.accuracy);
        steps_at.push_back(p.step);
      }
      per_pattern.push_back(std::move(accs));
    }
    TuneCurve curve;
    curve.learning_rate = lr;
    size_t points = per_pattern.empty() ? 0 : per_pattern[0].size();
    for (size_t t = 0; t < points; ++t) {
      double sum = 0.0;
      for (const auto& accs : per_pattern) sum += accs[t];
      curve.points.push_back({steps_at[t], sum / static_cast<double>(per_pattern.size())});
    }
    outcome.curves.push_back(std::move(curve));
  }
  auto [lr, steps] = select_lr_and_steps(outcome.curves, tolerance);
  outcome.learning_rate = lr;
  outcome.steps = steps;
  return outcome;
}

std::string select_pattern(const std::vector<std::pair<std::string, double>>& dev_accuracies) {
  if (dev_accuracies.empty()) fail("no dev accuracies given");
  size_t best = 0;
  for (size_t i = 1; i < dev_accuracies.size(); ++i)
    if (dev_accuracies[i].second > dev_accuracies[best].second) best = i;
  return dev_accuracies[best].first;
}

std::string results_to_tsv(const std::vector<RunResult>& results,
                           const std::vector<std::string>& label_names) {
  std::string out = "dataset\tmodel\tvariant\tpattern\tseed\taccuracy\tper_label\n";
  for (const auto& r : results) {
    out += to_string(r.dataset) + '\t' + to_string(r.model) + '\t' + r.variant + '\t';
    out += (r.pattern ? *r.pattern : "-") + '\t';
    out += (r.seed ? std::to_string(*r.seed) : "-") + '\t';
    out += msg(r.accuracy) + '\t';
    for (size_t l = 0; l < r.per_label.size(); ++l) {
      if (l) out += ';';
      std::string name = l < label_names.size() ? label_names[l] : std::to_string(l);
      out += name + '=' + msg(r.per_label[l].precision, ':', r.per_label[l].recall, ':',
                              r.per_label[l].f1, ':', r.per_label[l].support);
    }
    out += '\n';
  }
  return out;
}

std::vector<RunResult> results_from_tsv(const std::string& tsv) {
  std::vector<RunResult> out;
  auto lines = split(tsv, '\n');
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cols = split(lines[i], '\t');
    if (cols.size() != 7) fail("results row ", i + 1, ": expected 7 columns");
    RunResult r;
    r.dataset = dataset_from_string(cols[0]);
    r.model = model_size_from_string(cols[1]);
    r.variant = cols[2];
    if (cols[3] != "-") r.pattern = cols[3];
    if (cols[4] != "-") r.seed = std::stoull(cols[4]);
    r.accuracy = std::stod(cols[5]);
    for (const auto& cell : split(cols[6], ';')) {
      if (cell.empty()) continue;
      size_t eq = cell.find('=');
      auto nums = split(cell.substr(eq + 1), ':');
      if (nums.size() != 4) fail("results row ", i + 1, ": bad per-label cell");
      PrfRow row;
      row.precision = std::stod(nums[0]);
      row.recall = std::stod(nums[1]);
      row.f1 = std::stod(nums[2]);
      row.support = std::stol(nums[3]);
      r.per_label.push_back(row);
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v * 100.0);
  return buf;
}

}  // namespace

std::string render_accuracy_table(const std::vector<AggregateResult>& aggregates,
                                  const std::string& title) {
  std::string out = title + "\n";
  size_t keyw = 10;
  for (const auto& a : aggregates) keyw = std::max(keyw, a.group_key.size());
  for (const auto& a : aggregates) {
    out += a.group_key;
    out.append(keyw + 2 - a.group_key.size(), ' ');
    out += pct(a.mean) + " ±" + pct(a.stddev) + msg("  (n=", a.n, ")\n");
  }
  return out;
}

std::string render_prf_table(const RunResult& result, const std::vector<std::string>& labels) {
  std::string out = "label\tprecision\trecall\tf1\tsupport\n";
  for (size_t l = 0; l < result.per_label.size(); ++l) {
    const auto& row = result.per_label[l];
    std::string name = l < labels.size() ? labels[l] : std::to_string(l);
    out += name + '\t' + pct(row.precision) + '\t' + pct(row.recall) + '\t' + pct(row.f1) +
           '\t' + std::to_string(row.support) + '\n';
  }
  return out;
}

}  // namespace ldt
