// Command-line front end: data building, zero-shot and trained classification,
// sweeps, tuning, transfer evaluation and report generation.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ldt/corpus.hpp"
#include "ldt/defaults.hpp"
#include "ldt/encoder.hpp"
#include "ldt/evalkit.hpp"
#include "ldt/inference.hpp"
#include "ldt/labeldesc.hpp"
#include "ldt/manifest.hpp"
#include "ldt/prompting.hpp"
#include "ldt/trainer.hpp"
#include "ldt/util.hpp"

namespace fs = std::filesystem;
using namespace ldt;

namespace {

fs::path resolve_model_dir(const std::string& model) {
  if (model == "base" || model == "large") {
    const char* cache = std::getenv("LDT_MODEL_DIR");
    if (!cache)
      fail("--model ", model, " needs LDT_MODEL_DIR to point at the model cache directory");
    return fs::path(cache) / ("roberta-" + model);
  }
  return fs::path(model);
}

ModelSize size_of(const std::string& model) {
  if (model == "base") return ModelSize::Base;
  if (model == "large") return ModelSize::Large;
  return ModelSize::Other;
}

LabeledCorpus load_eval_corpus(DatasetId dataset, Split split, const fs::path& data,
                               const fs::path& manifest_path) {
  auto manifest = ColumnManifest::load(manifest_path);
  if (dataset == DatasetId::YahooAg) {
    // Yahoo_AG is derived: ingest the Yahoo file, then remap.
    auto yahoo = load_corpus(dataset_spec(DatasetId::Yahoo), split, data, manifest);
    return remap_yahoo_to_ag(yahoo);
  }
  return load_corpus(dataset_spec(dataset), split, data, manifest);
}

std::vector<uint64_t> parse_seeds(const std::string& csv) {
  std::vector<uint64_t> out;
  for (const auto& s : split(csv, ','))
    if (!trim(s).empty()) out.push_back(std::stoull(std::string(trim(s))));
  if (out.empty()) fail("no seeds given");
  return out;
}

struct CkptMeta {
  std::string variant;
  std::string dataset;
  std::string model_size;
  std::optional<std::string> pattern;
  uint64_t seed = 0;
  VerbalizerMap vmap;  // words as saved, unvalidated
};

void save_checkpoint(const fs::path& dir, const MaskedLmEncoder& model,
                     const std::string& variant, DatasetId dataset, ModelSize msize,
                     const std::optional<Pattern>& pattern, const VerbalizerMap& vmap,
                     const TrainConfig& config, const TrainResult& result) {
  model.save(dir);
  KeyedText kt;
  kt.set("schema", "ldt-checkpoint/1");
  kt.set("model_id", model.config().model_id);
  kt.set("variant", variant);
  kt.set("dataset", to_string(dataset));
  kt.set("model_size", to_string(msize));
  if (pattern) kt.set("pattern", pattern->key());
  kt.set("seed", std::to_string(config.seed));
  kt.set("config_hash", config.hash());
  kt.set("steps", std::to_string(result.steps_run));
  if (result.best_epoch > 0) kt.set("best_epoch", std::to_string(result.best_epoch));
  for (size_t i = 0; i < vmap.entries.size(); ++i)
    kt.add("verbalizers", vmap.entries[i].label, vmap.entries[i].word);
  kt.save(dir / "manifest.txt");
  write_file(dir / "loss_trace.csv", result.loss_trace_csv());
  if (!result.dev_trace.empty()) {
    std::string csv = "step,accuracy\n";
    for (const auto& p : result.dev_trace) csv += msg(p.step, ",", p.accuracy, "\n");
    write_file(dir / "dev_trace.csv", csv);
  }
}

CkptMeta load_checkpoint_meta(const fs::path& dir) {
  KeyedText kt = KeyedText::load(dir / "manifest.txt");
  CkptMeta meta;
  meta.variant = kt.require("variant");
  meta.dataset = kt.require("dataset");
  meta.model_size = kt.require("model_size");
  if (auto p = kt.get("pattern")) meta.pattern = *p;
  meta.seed = std::stoull(kt.require("seed"));
  for (const auto& e : kt.entries())
    if (e.section == "verbalizers") meta.vmap.entries.push_back({e.key, e.value});
  return meta;
}

RunResult evaluate_corpus(const MaskedLmEncoder& model, const LabeledCorpus& corpus,
                          const std::optional<Pattern>& pattern, const VerbalizerMap& vmap,
                          bool pooled, int threads) {
  std::vector<Prediction> preds =
      pooled ? predict_corpus_pooled(model, corpus, 1, threads)
             : predict_corpus(model, corpus, *pattern, vmap, 1, threads);
  std::vector<int> p, g;
  for (size_t i = 0; i < preds.size(); ++i) {
    p.push_back(preds[i].label_index);
    g.push_back(corpus.records[i].label_index);
  }
  return make_run_result(p, g, dataset_spec(corpus.dataset_id));
}

// ---------------------------------------------------------------- build-data

int cmd_build_data(const std::string& task_path, const std::string& out_dir) {
  TaskFile task = load_task_file(task_path);
  LabelDescSet set = build_from_task(task);

  // Validate against every dataset this task serves.
  static const std::map<std::string, std::vector<DatasetId>> targets = {
      {"20ng", {DatasetId::Ng20x4}},
      {"agnews", {DatasetId::AgNews, DatasetId::YahooAg}},
      {"yahoo", {DatasetId::Yahoo}},
      {"dbpedia", {DatasetId::DbPedia}},
      {"sentiment5", {DatasetId::Yelp5, DatasetId::Sst5}},
      {"sentiment2", {DatasetId::Yelp2, DatasetId::Sst2, DatasetId::Amz2, DatasetId::Imdb}},
  };
  std::string report_text;
  bool ok = true;
  auto it = targets.find(task.task_id);
  if (it != targets.end()) {
    for (DatasetId id : it->second) {
      ValidationReport report = validate_set(set, dataset_spec(id));
      report_text += "validation against " + to_string(id) + ":\n" + report.to_string();
      ok = ok && report.passed();
    }
  } else {
    DatasetSpec pseudo{DatasetId::AgNews, set.label_names, {}};
    ValidationReport report = validate_set(set, pseudo);
    report_text += "validation (task-local):\n" + report.to_string();
    ok = ok && report.passed();
  }

  fs::path out(out_dir);
  fs::create_directories(out);
  fs::path set_path = out / (task.task_id + ".labeldesc.tsv");
  save_set(set, set_path);
  write_file(out / (task.task_id + ".validation.txt"), report_text);

  RunManifest manifest("build-data");
  manifest.set("task_file", task_path);
  manifest.add_input_hash("task_file", read_file(task_path));
  manifest.add_output(out, set_path);
  manifest.save(out / (task.task_id + ".manifest.txt"));

  std::cout << report_text;
  if (!ok) fail("label description validation failed for task ", task.task_id);
  std::cout << "wrote " << set_path.string() << " (" << set.examples.size() << " examples)\n";
  return 0;
}

// ------------------------------------------------------------------ zeroshot

int cmd_zeroshot(const std::string& dataset_name, const std::string& model_name,
                 const std::string& pattern_key, const std::string& data,
                 const std::string& data_manifest, int subsample, uint64_t subsample_seed,
                 const std::string& out_dir, int threads) {
  DatasetId dataset = dataset_from_string(dataset_name);
  MaskedLmEncoder model = MaskedLmEncoder::load(resolve_model_dir(model_name));
  VerbalizerMap vmap = validate_single_token(verbalizers_for(dataset), model.tokenizer());

  LabeledCorpus corpus = load_eval_corpus(dataset, Split::Test, data, data_manifest);
  if (subsample > 0)
    corpus = stratified_subsample(corpus, static_cast<size_t>(subsample), subsample_seed);

  std::vector<Pattern> catalog = pattern_catalog_for(dataset);
  std::vector<Pattern> chosen;
  if (pattern_key == "all") {
    chosen = catalog;
  } else {
    auto p = find_pattern(catalog, pattern_key);
    if (!p) fail("unknown pattern '", pattern_key, "' for dataset ", dataset_name);
    chosen = {*p};
  }

  std::vector<RunResult> results;
  for (const auto& pattern : chosen) {
    RunResult r = evaluate_corpus(model, corpus, pattern, vmap, false, threads);
    r.model = size_of(model_name);
    r.variant = "zeroshot";
    r.pattern = pattern.key();
    results.push_back(std::move(r));
    std::cout << "pattern " << pattern.key() << ": accuracy " << results.back().accuracy
              << "\n";
  }

  fs::path out(out_dir);
  fs::create_directories(out);
  const auto& labels = dataset_spec(dataset).label_names;
  fs::path results_path = out / "results.tsv";
  write_file(results_path, results_to_tsv(results, labels));
  if (results.size() > 1) {
    auto agg = aggregate(results, AggregateMode::ZeroshotOverPatterns);
    std::string table = render_accuracy_table(
        agg, "zero-shot " + dataset_name + " (" + model_name + ", mean over patterns)");
    write_file(out / "report.txt", table);
    std::cout << table;
  }

  RunManifest manifest("zeroshot");
  manifest.set("dataset", dataset_name);
  manifest.set("model_id", model.config().model_id);
  manifest.set("patterns", pattern_key);
  manifest.set("subsample", std::to_string(subsample));
  manifest.set("subsample_seed", std::to_string(subsample_seed));
  manifest.add_input_hash("verbalizers", vmap.to_text());
  manifest.add_input_hash("pattern_catalog", catalog_to_text(catalog));
  manifest.add_output(out, results_path);
  manifest.save(out / "manifest.txt");
  return 0;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string variant, dataset, model, labeldesc, pattern_key, seeds_csv = "0,1,2";
  std::string data, data_manifest;  // few-shot corpus
  bool sweep = false;
  double lr = 0.0;
  int steps = 0;
  int batch = 0;
  int k = 0;
  int dev_size = 1000;
  int jobs = 1;
  std::string out_dir;
  bool no_freeze = false;
};

int run_one_training(const TrainArgs& args, const std::string& pattern_key, uint64_t seed);
int spawn_jobs(const TrainArgs& args, const std::vector<std::string>& pattern_keys,
               const std::vector<uint64_t>& seeds);

int cmd_train(const TrainArgs& args) {
  DatasetId dataset = dataset_from_string(args.dataset);
  std::vector<uint64_t> seeds = parse_seeds(args.seeds_csv);

  std::vector<std::string> pattern_keys;
  if (args.variant == "classifier") {
    pattern_keys = {""};
  } else if (args.sweep) {
    for (const auto& p : pattern_catalog_for(dataset)) pattern_keys.push_back(p.key());
  } else if (!args.pattern_key.empty()) {
    pattern_keys = {args.pattern_key};
  } else {
    // Default to the pattern tuned for this variant/model when not sweeping.
    std::string key = args.variant == "fewshot" || args.variant == "ldt20ng"
                          ? "ldt"
                          : args.variant;
    pattern_keys = {tuned_pattern_key(key, size_of(args.model))};
  }
  if (args.jobs > 1 && pattern_keys.size() * seeds.size() > 1)
    return spawn_jobs(args, pattern_keys, seeds);

  int rc = 0;
  for (const auto& pk : pattern_keys)
    for (uint64_t seed : seeds) rc |= run_one_training(args, pk, seed);
  return rc;
}

int run_one_training(const TrainArgs& args, const std::string& pattern_key, uint64_t seed) {
  DatasetId dataset = dataset_from_string(args.dataset);
  ModelSize msize = size_of(args.model);

  TrainConfig config;
  if (args.variant == "fewshot") {
    config.learning_rate = args.lr;  // 0 selects by grid search below
    config.batch_size = args.batch > 0 ? args.batch : fewshot_batch_size(args.k);
    config.epochs = kFewshotEpochs;
  } else {
    VariantDefaults defaults = msize == ModelSize::Other
                                   ? VariantDefaults{1e-4, 8, 1}  // local models: smoke scale
                                   : paper_default(args.variant, msize);
    config.learning_rate = args.lr > 0 ? args.lr : defaults.learning_rate;
    config.max_steps = args.steps > 0 ? args.steps : defaults.steps;
    config.batch_size = args.batch > 0 ? args.batch : defaults.batch_size;
  }
  config.seed = seed;

  MaskedLmEncoder model = MaskedLmEncoder::load(resolve_model_dir(args.model));
  config.freeze =
      args.no_freeze ? FreezePolicy::none() : FreezePolicy::lower_half(model.num_layers());

  std::string model_tag = (args.model == "base" || args.model == "large")
                              ? args.model
                              : fs::path(args.model).filename().string();
  std::string dir_name = args.variant + "_" + args.dataset + "_" + model_tag +
                         (pattern_key.empty() ? "" : "_" + pattern_key) + "_s" +
                         std::to_string(seed);
  fs::path ckpt_dir = fs::path(args.out_dir) / dir_name;

  std::optional<Pattern> pattern;
  if (!pattern_key.empty()) {
    auto p = find_pattern(pattern_catalog_for(dataset), pattern_key);
    if (!p) fail("unknown pattern '", pattern_key, "' for dataset ", args.dataset);
    pattern = *p;
  }

  TrainResult result;
  VerbalizerMap vmap;
  if (args.variant == "ldt" || args.variant == "ldt20ng") {
    LabelDescSet set = load_set(args.labeldesc);
    vmap = validate_single_token(verbalizers_for(dataset), model.tokenizer());
    result = train_label_desc(model, set, *pattern, vmap, config);
  } else if (args.variant == "random") {
    LabelDescSet set = load_set(args.labeldesc);
    vmap = random_verbalizers(model, dataset_spec(dataset).label_names, seed);
    result = train_label_desc(model, set, *pattern, vmap, config);
  } else if (args.variant == "mismatched") {
    LabelDescSet set = load_set(args.labeldesc);
    VerbalizerMap original = validate_single_token(verbalizers_for(dataset), model.tokenizer());
    vmap = derange_verbalizers(original, seed);
    result = train_label_desc(model, set, *pattern, vmap, config);
  } else if (args.variant == "classifier") {
    LabelDescSet set = load_set(args.labeldesc);
    result = train_classifier(model, set, config);
  } else if (args.variant == "fewshot") {
    if (args.k <= 0) fail("--k is required for the fewshot variant");
    auto manifest = ColumnManifest::load(args.data_manifest);
    auto full = load_corpus(dataset_spec(dataset), Split::Train, args.data, manifest);
    FewshotSplit shot = fewshot_split(full, args.k, args.dev_size, seed);
    vmap = validate_single_token(verbalizers_for(dataset), model.tokenizer());

    if (config.learning_rate > 0) {
      result =
          train_supervised_fewshot(model, shot.train, shot.dev, *pattern, vmap, config);
    } else {
      // Grid-search learning rates on dev, keep the best run's weights.
      double best_acc = -1.0;
      bool have_best = false;
      MaskedLmEncoder best = model.clone();
      for (double lr : learning_rate_grid()) {
        MaskedLmEncoder candidate = MaskedLmEncoder::load(resolve_model_dir(args.model));
        TrainConfig cfg = config;
        cfg.learning_rate = lr;
        TrainResult res =
            train_supervised_fewshot(candidate, shot.train, shot.dev, *pattern, vmap, cfg);
        double acc = 0.0;
        for (const auto& p : res.dev_trace) acc = std::max(acc, p.accuracy);
        std::cout << "fewshot lr " << lr << ": best dev accuracy " << acc << "\n";
        if (!have_best || acc > best_acc) {
          best_acc = acc;
          best = candidate.clone();
          result = res;
          config.learning_rate = lr;
          have_best = true;
        }
      }
      model = std::move(best);
    }
  } else {
    fail("unknown variant '", args.variant, "'");
  }

  // Few-shot runs carry k and the training domain in the variant tag so that
  // accuracy-vs-k series group correctly in reports.
  std::string variant_tag = args.variant == "fewshot"
                                ? msg("fewshot-k", args.k, "-", args.dataset)
                                : args.variant;
  save_checkpoint(ckpt_dir, model, variant_tag, dataset, msize, pattern, vmap, config,
                  result);
  std::cout << "checkpoint: " << ckpt_dir.string() << " (" << result.steps_run << " steps)\n";
  return 0;
}

int spawn_jobs(const TrainArgs& args, const std::vector<std::string>& pattern_keys,
               const std::vector<uint64_t>& seeds) {
  // Bounded pool of child processes, one per (pattern, seed) job.
  std::vector<std::pair<std::string, uint64_t>> todo;
  for (const auto& pk : pattern_keys)
    for (uint64_t s : seeds) todo.emplace_back(pk, s);

  char exe[4096];
  ssize_t n = readlink("/proc/self/exe", exe, sizeof(exe) - 1);
  if (n <= 0) fail("cannot resolve own executable path");
  exe[n] = '\0';

  size_t next = 0;
  int running = 0, failed = 0;
  std::map<pid_t, size_t> pids;
  while (next < todo.size() || running > 0) {
    while (running < args.jobs && next < todo.size()) {
      const auto& [pk, job_seed] = todo[next];
      pid_t pid = fork();
      if (pid < 0) fail("fork failed");
      if (pid == 0) {
        std::vector<std::string> argv_s = {exe,     "train",        "--variant", args.variant,
                                           "--dataset", args.dataset, "--model",  args.model,
                                           "--seeds", std::to_string(job_seed),
                                           "--out",   args.out_dir,  "--jobs",    "1"};
        if (!args.labeldesc.empty()) {
          argv_s.push_back("--labeldesc");
          argv_s.push_back(args.labeldesc);
        }
        if (!pk.empty()) {
          argv_s.push_back("--pattern");
          argv_s.push_back(pk);
        }
        if (args.lr > 0) {
          argv_s.push_back("--lr");
          argv_s.push_back(msg(args.lr));
        }
        if (args.steps > 0) {
          argv_s.push_back("--steps");
          argv_s.push_back(std::to_string(args.steps));
        }
        if (args.batch > 0) {
          argv_s.push_back("--batch");
          argv_s.push_back(std::to_string(args.batch));
        }
        if (args.k > 0) {
          argv_s.push_back("--k");
          argv_s.push_back(std::to_string(args.k));
        }
        if (!args.data.empty()) {
          argv_s.push_back("--data");
          argv_s.push_back(args.data);
        }
        if (!args.data_manifest.empty()) {
          argv_s.push_back("--data-manifest");
          argv_s.push_back(args.data_manifest);
        }
        if (args.no_freeze) argv_s.push_back("--no-freeze");
        std::vector<char*> argv;
        for (auto& s : argv_s) argv.push_back(s.data());
        argv.push_back(nullptr);
        execv(exe, argv.data());
        _exit(127);
      }
      pids[pid] = next++;
      ++running;
    }
    int status = 0;
    pid_t done = wait(&status);
    if (done > 0) {
      --running;
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        ++failed;
        std::cerr << "job " << todo[pids[done]].first << "/s" << todo[pids[done]].second
                  << " failed\n";
      }
    }
  }
  if (failed) fail(failed, " sweep job(s) failed");
  std::cout << "sweep complete: " << todo.size() << " checkpoints under " << args.out_dir
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------- eval

int cmd_eval(const std::string& ckpt, const std::string& dataset_name, const std::string& data,
             const std::string& data_manifest, int subsample, uint64_t subsample_seed,
             const std::string& pattern_override, const std::string& verbalizer_source,
             const std::string& out_dir, int threads) {
  DatasetId dataset = dataset_from_string(dataset_name);
  const DatasetSpec& spec = dataset_spec(dataset);
  CkptMeta meta = load_checkpoint_meta(ckpt);
  MaskedLmEncoder model = MaskedLmEncoder::load(ckpt);

  LabeledCorpus corpus = load_eval_corpus(dataset, Split::Test, data, data_manifest);
  if (subsample > 0)
    corpus = stratified_subsample(corpus, static_cast<size_t>(subsample), subsample_seed);

  bool pooled = meta.variant == "classifier";
  std::optional<Pattern> pattern;
  VerbalizerMap vmap;
  if (!pooled) {
    std::string key = pattern_override.empty() ? meta.pattern.value_or("") : pattern_override;
    if (key.empty()) fail("checkpoint has no pattern and none was given");
    auto p = find_pattern(pattern_catalog_for(dataset), key);
    if (!p) fail("unknown pattern '", key, "' for dataset ", dataset_name);
    pattern = *p;

    if (verbalizer_source == "dataset") {
      vmap = validate_single_token(verbalizers_for(dataset), model.tokenizer());
    } else {
      if (meta.vmap.entries.empty()) fail("checkpoint manifest carries no verbalizers");
      if (meta.vmap.entries.size() != spec.label_names.size())
        fail("checkpoint has ", meta.vmap.entries.size(), " labels but ", dataset_name,
             " has ", spec.label_names.size(),
             " (pass --verbalizers dataset for cross-task evaluation)");
      vmap = validate_single_token(meta.vmap, model.tokenizer());
    }
  } else if (model.classifier_num_labels() != spec.num_labels()) {
    fail("classifier head has ", model.classifier_num_labels(), " labels but ", dataset_name,
         " has ", spec.num_labels());
  }

  RunResult r = evaluate_corpus(model, corpus, pattern, vmap, pooled, threads);
  r.model = model_size_from_string(meta.model_size);
  r.variant = meta.variant;
  if (pattern) r.pattern = pattern->key();
  r.seed = meta.seed;

  fs::path out(out_dir);
  fs::create_directories(out);
  write_file(out / "results.tsv", results_to_tsv({r}, spec.label_names));
  auto preds = pooled ? predict_corpus_pooled(model, corpus, 1, threads)
                      : predict_corpus(model, corpus, *pattern, vmap, 1, threads);
  save_predictions(preds, out / "predictions.tsv");
  write_file(out / "prf.txt", render_prf_table(r, spec.label_names));

  RunManifest manifest("eval");
  manifest.set("checkpoint", ckpt);
  manifest.set("dataset", dataset_name);
  manifest.add_output(out, out / "results.tsv");
  manifest.add_output(out, out / "predictions.tsv");
  manifest.save(out / "manifest.txt");

  std::cout << "accuracy " << r.accuracy << " on " << corpus.records.size() << " records\n";
  return 0;
}

// ------------------------------------------------------------------ transfer

int cmd_transfer(const std::string& ckpt, const std::string& tests_csv,
                 const std::string& data_csv, const std::string& manifests_csv,
                 const std::string& out_dir, int threads) {
  auto datasets = split(tests_csv, ',');
  auto files = split(data_csv, ',');
  auto manifests = split(manifests_csv, ',');
  if (datasets.size() != files.size() || files.size() != manifests.size())
    fail("--tests, --data and --data-manifests need the same number of entries");

  CkptMeta meta = load_checkpoint_meta(ckpt);
  MaskedLmEncoder model = MaskedLmEncoder::load(ckpt);
  DatasetId source = dataset_from_string(meta.dataset);

  std::vector<RunResult> results;
  fs::path out(out_dir);
  fs::create_directories(out);
  for (size_t i = 0; i < datasets.size(); ++i) {
    DatasetId target = dataset_from_string(datasets[i]);
    const auto& source_labels = dataset_spec(source).label_names;
    const auto& target_labels = dataset_spec(target).label_names;
    if (source_labels != target_labels)
      fail("label sets differ between checkpoint dataset ", meta.dataset, " (",
           source_labels.size(), " labels) and ", datasets[i], " (", target_labels.size(),
           " labels); transfer requires matching label sets");

    LabeledCorpus corpus = load_eval_corpus(target, Split::Test, files[i], manifests[i]);
    bool pooled = meta.variant == "classifier";
    std::optional<Pattern> pattern;
    VerbalizerMap vmap;
    if (!pooled) {
      auto p = find_pattern(pattern_catalog_for(target), meta.pattern.value_or(""));
      if (!p)
        fail("checkpoint pattern ", meta.pattern.value_or("<none>"),
             " not in the catalog for ", datasets[i]);
      pattern = *p;
      vmap = validate_single_token(meta.vmap, model.tokenizer());
    }
    RunResult r = evaluate_corpus(model, corpus, pattern, vmap, pooled, threads);
    r.model = model_size_from_string(meta.model_size);
    r.variant = meta.variant;
    if (pattern) r.pattern = pattern->key();
    r.seed = meta.seed;
    results.push_back(r);
    std::cout << datasets[i] << ": accuracy " << r.accuracy << "\n";
  }
  write_file(out / "results.tsv", results_to_tsv(results, dataset_spec(source).label_names));

  RunManifest manifest("transfer");
  manifest.set("checkpoint", ckpt);
  manifest.set("tests", tests_csv);
  manifest.add_output(out, out / "results.tsv");
  manifest.save(out / "manifest.txt");
  return 0;
}

// ---------------------------------------------------------------------- tune

int cmd_tune(const std::string& model_name, const std::string& labeldesc,
             const std::string& dev_data, const std::string& dev_manifest, int max_steps,
             int eval_every, const std::string& out_dir) {
  LabelDescSet set = load_set(labeldesc);
  auto manifest = ColumnManifest::load(dev_manifest);
  LabeledCorpus dev =
      load_corpus(dataset_spec(DatasetId::Ng20x4), Split::Dev, dev_data, manifest);
  fs::path model_dir = resolve_model_dir(model_name);
  BackendFactory factory = [&] { return MaskedLmEncoder::load(model_dir); };

  TuneOutcome outcome =
      tune_on_20ng(factory, set, pattern_catalog_for(DatasetId::Ng20x4),
                   verbalizers_for(DatasetId::Ng20x4), dev, learning_rate_grid(), max_steps,
                   eval_every, kPlateauTolerance);

  fs::path out(out_dir);
  fs::create_directories(out);
  std::string curves = "learning_rate,step,dev_accuracy\n";
  for (const auto& c : outcome.curves)
    for (const auto& p : c.points)
      curves += msg(c.learning_rate, ",", p.step, ",", p.accuracy, "\n");
  write_file(out / "curves.csv", curves);

  KeyedText tuned;
  tuned.set("schema", "ldt-profile/1");
  tuned.set("profile", "tuned");
  tuned.add("ldt " + model_name, "learning_rate", msg(outcome.learning_rate));
  tuned.add("ldt " + model_name, "steps", std::to_string(outcome.steps));
  tuned.save(out / "tuned.profile");

  std::cout << "selected learning rate " << outcome.learning_rate << ", steps "
            << outcome.steps << "\n";
  return 0;
}

// -------------------------------------------------------------------- report

int cmd_report(const std::vector<std::string>& result_files, const std::string& mode,
               const std::string& out_dir) {
  std::vector<RunResult> all;
  for (const auto& f : result_files) {
    auto rows = results_from_tsv(read_file(f));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  if (all.empty()) fail("no result rows loaded");
  fs::path out(out_dir);
  fs::create_directories(out);

  if (mode == "zeroshot" || mode == "ldt" || mode == "seeds") {
    AggregateMode m = mode == "zeroshot" ? AggregateMode::ZeroshotOverPatterns
                      : mode == "ldt"    ? AggregateMode::LdtPatternsBySeed
                                         : AggregateMode::SeedsSinglePattern;
    auto agg = aggregate(all, m);
    std::string table = render_accuracy_table(agg, "accuracy (" + mode + " aggregation)");
    write_file(out / "report.txt", table);
    std::cout << table;
    return 0;
  }
  if (mode == "prf") {
    std::string text;
    for (const auto& r : all) {
      text +=
          to_string(r.dataset) + " " + r.variant + (r.pattern ? " " + *r.pattern : "") + "\n";
      text += render_prf_table(r, dataset_spec(r.dataset).label_names) + "\n";
    }
    write_file(out / "prf_report.txt", text);
    std::cout << text;
    return 0;
  }
  if (mode == "fewshot-series") {
    // Accuracy-vs-k series for plotting, grouped by variant tag and dataset.
    std::map<std::string, std::vector<double>> groups;
    for (const auto& r : all)
      groups[r.variant + "," + to_string(r.dataset)].push_back(r.accuracy);
    std::string csv = "series,dataset,mean,std,n\n";
    for (const auto& [key, accs] : groups) {
      double mean = 0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      csv += key + "," + msg(mean, ",", sample_stddev(accs), ",", accs.size(), "\n");
    }
    write_file(out / "series.csv", csv);
    std::cout << csv;
    return 0;
  }
  fail("unknown report mode '", mode, "'");
}

// ----------------------------------------------------------------------- icl

int cmd_icl(const std::string& labeldesc, const std::string& query, uint64_t seed,
            const std::string& instruction, const std::string& out_file) {
  LabelDescSet set = load_set(labeldesc);
  std::string prompt = build_icl_prompt(set, query, seed, instruction);
  if (out_file.empty()) {
    std::cout << prompt << "\n";
  } else {
    write_file(out_file, prompt);
    std::cout << "wrote " << out_file << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label-description training for zero-shot text classification"};
  app.require_subcommand(1);

  std::string task_path, out_dir = "out";
  auto* build = app.add_subcommand("build-data", "expand a task file into a LabelDesc set");
  build->add_option("--task", task_path, "task file")->required();
  build->add_option("--out", out_dir, "output directory");

  std::string dataset, model = "base", pattern_key = "all", data, data_manifest;
  int subsample = 0, threads = 1;
  uint64_t seed = 0;
  auto* zs = app.add_subcommand("zeroshot", "pattern-verbalizer zero-shot evaluation");
  zs->add_option("--dataset", dataset)->required();
  zs->add_option("--model", model, "base | large | model dir");
  zs->add_option("--pattern", pattern_key, "pattern key (e.g. prompt9) or 'all'");
  zs->add_option("--data", data, "test split file")->required();
  zs->add_option("--data-manifest", data_manifest, "column manifest")->required();
  zs->add_option("--subsample", subsample, "stratified test subsample size");
  zs->add_option("--seed", seed, "subsample seed");
  zs->add_option("--out", out_dir);
  zs->add_option("--threads", threads);

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "finetune on label descriptions or few-shot data");
  tr->add_option("--variant", ta.variant,
                 "ldt | random | mismatched | classifier | fewshot | ldt20ng")
      ->required();
  tr->add_option("--dataset", ta.dataset)->required();
  tr->add_option("--model", ta.model, "base | large | model dir")->required();
  tr->add_option("--labeldesc", ta.labeldesc, "built LabelDesc set file");
  tr->add_option("--pattern", ta.pattern_key);
  tr->add_flag("--sweep", ta.sweep, "all 14 patterns");
  tr->add_option("--seeds", ta.seeds_csv, "comma-separated seeds");
  tr->add_option("--lr", ta.lr);
  tr->add_option("--steps", ta.steps);
  tr->add_option("--batch", ta.batch);
  tr->add_option("--k", ta.k, "few-shot examples per label");
  tr->add_option("--dev-size", ta.dev_size, "few-shot dev records");
  tr->add_option("--data", ta.data, "few-shot source corpus");
  tr->add_option("--data-manifest", ta.data_manifest);
  tr->add_option("--jobs", ta.jobs, "parallel worker processes");
  tr->add_flag("--no-freeze", ta.no_freeze, "train all layers");
  tr->add_option("--out", ta.out_dir)->required();

  std::string ckpt, pattern_override, verbalizer_source = "checkpoint";
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--data-manifest", data_manifest)->required();
  ev->add_option("--pattern", pattern_override, "override the checkpoint's pattern");
  ev->add_option("--verbalizers", verbalizer_source, "checkpoint | dataset");
  ev->add_option("--subsample", subsample);
  ev->add_option("--seed", seed);
  ev->add_option("--out", out_dir);
  ev->add_option("--threads", threads);

  std::string tests_csv, data_csv, manifests_csv;
  auto* tf =
      app.add_subcommand("transfer", "evaluate one checkpoint on several same-label test sets");
  tf->add_option("--ckpt", ckpt)->required();
  tf->add_option("--tests", tests_csv, "comma-separated dataset ids")->required();
  tf->add_option("--data", data_csv, "comma-separated files")->required();
  tf->add_option("--data-manifests", manifests_csv)->required();
  tf->add_option("--out", out_dir);
  tf->add_option("--threads", threads);

  std::string labeldesc, dev_data, dev_manifest;
  int max_steps = kTuneMaxSteps, eval_every = kTuneEvalEvery;
  auto* tu = app.add_subcommand("tune", "hyperparameter selection on the tuning task");
  tu->add_option("--model", model)->required();
  tu->add_option("--labeldesc", labeldesc)->required();
  tu->add_option("--dev-data", dev_data)->required();
  tu->add_option("--dev-manifest", dev_manifest)->required();
  tu->add_option("--max-steps", max_steps);
  tu->add_option("--eval-every", eval_every);
  tu->add_option("--out", out_dir);

  std::vector<std::string> result_files;
  std::string report_mode = "zeroshot";
  auto* rp = app.add_subcommand("report", "aggregate results files into tables");
  rp->add_option("--results", result_files)->required();
  rp->add_option("--mode", report_mode, "zeroshot | ldt | seeds | prf | fewshot-series");
  rp->add_option("--out", out_dir);

  std::string query, instruction, icl_out;
  auto* icl = app.add_subcommand("icl", "emit an in-context-learning prompt file");
  icl->add_option("--labeldesc", labeldesc)->required();
  icl->add_option("--query", query)->required();
  icl->add_option("--seed", seed);
  icl->add_option("--instruction", instruction)->required();
  icl->add_option("--out", icl_out);

  auto* prof = app.add_subcommand("profile", "print the paper-defaults profile");

  CLI11_PARSE(app, argc, argv);

  try {
    if (build->parsed()) return cmd_build_data(task_path, out_dir);
    if (zs->parsed())
      return cmd_zeroshot(dataset, model, pattern_key, data, data_manifest, subsample, seed,
                          out_dir, threads);
    if (tr->parsed()) return cmd_train(ta);
    if (ev->parsed())
      return cmd_eval(ckpt, dataset, data, data_manifest, subsample, seed, pattern_override,
                      verbalizer_source, out_dir, threads);
    if (tf->parsed())
      return cmd_transfer(ckpt, tests_csv, data_csv, manifests_csv, out_dir, threads);
    if (tu->parsed())
      return cmd_tune(model, labeldesc, dev_data, dev_manifest, max_steps, eval_every,
                      out_dir);
    if (rp->parsed()) return cmd_report(result_files, report_mode, out_dir);
    if (icl->parsed()) return cmd_icl(labeldesc, query, seed, instruction, icl_out);
    if (prof->parsed()) {
      std::cout << paper_defaults_profile_text();
      return 0;
    }
  } catch (const std::exception& e) {
    std::string what = e.what();
    for (auto& c : what)
      if (c == '"') c = '\'';
    std::cerr << "{\"error\": \"" << what << "\"}\n";
    return 1;
  }
  return 0;
}
