#include "ldt/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "ldt/optimizer.hpp"
#include "ldt/sha1.hpp"
#include "ldt/util.hpp"

namespace ldt {

std::string TrainConfig::serialize() const {
  std::string out;
  out += msg("learning_rate: ", learning_rate, "\n");
  out += msg("max_steps: ", max_steps, "\n");
  out += msg("batch_size: ", batch_size, "\n");
  out += msg("seed: ", seed, "\n");
  out += msg("freeze: ", freeze.to_string(), "\n");
  out += msg("eval_every: ", eval_every ? std::to_string(*eval_every) : "none", "\n");
  out += msg("epochs: ", epochs ? std::to_string(*epochs) : "none", "\n");
  out += msg("weight_decay: ", weight_decay, "\n");
  out += msg("full_vocab_loss: ", full_vocab_loss ? 1 : 0, "\n");
  return out;
}

std::string TrainConfig::hash() const { return git_blob_hash(serialize()); }

std::string TrainResult::loss_trace_csv() const {
  std::string out = "step,loss\n";
  for (const auto& p : loss_trace) out += msg(p.step, ",", p.loss, "\n");
  return out;
}

std::pair<float, std::vector<float>> restricted_cross_entropy(
    const VecF& logits, const std::vector<int>& candidate_ids, int gold_pos) {
  if (candidate_ids.empty()) fail("no candidate ids");
  if (gold_pos < 0 || gold_pos >= static_cast<int>(candidate_ids.size()))
    fail("gold position ", gold_pos, " out of range");
  std::vector<float> z(candidate_ids.size());
  for (size_t i = 0; i < candidate_ids.size(); ++i) {
    int id = candidate_ids[i];
    if (id < 0 || id >= logits.size()) fail("candidate id ", id, " out of range");
    z[i] = logits[id];
  }
  float m = *std::max_element(z.begin(), z.end());
  float sum = 0.0f;
  std::vector<float> p(z.size());
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  float loss = -std::log(std::max(p[gold_pos], 1e-30f));
  std::vector<float> grad = p;
  grad[gold_pos] -= 1.0f;
  return {loss, std::move(grad)};
}

std::pair<float, VecF> softmax_cross_entropy(const VecF& logits, int gold) {
  if (gold < 0 || gold >= logits.size()) fail("gold index out of range");
  float m = logits.maxCoeff();
  VecF p = (logits.array() - m).exp();
  p /= p.sum();
  float loss = -std::log(std::max(p[gold], 1e-30f));
  VecF grad = p;
  grad[gold] -= 1.0f;
  return {loss, std::move(grad)};
}

EpochStream::EpochStream(size_t n, uint64_t seed) : rng_(seed) {
  if (n == 0) fail("empty example stream");
  order_.resize(n);
  for (size_t i = 0; i < n; ++i) order_[i] = i;
  reshuffle();
}

void EpochStream::reshuffle() { std::shuffle(order_.begin(), order_.end(), rng_); }

size_t EpochStream::next() {
  if (pos_ == order_.size()) {
    reshuffle();
    pos_ = 0;
  }
  return order_[pos_++];
}

namespace {

void require_balanced(const LabelDescSet& set) {
  if (set.examples.empty()) fail("label description set is empty");
  auto counts = set.per_label_counts();
  for (long c : counts)
    if (c != counts[0]) fail("label description set is not balanced");
}

// One mask-slot update for a (text, label) pair; grads are scaled so that a
// full batch accumulates to the mean.
float mlm_example_step(MaskedLmEncoder& model, const Pattern& pattern, const std::string& text,
                       int gold, const std::vector<int>& candidates, float scale,
                       bool full_vocab) {
  PromptString prompt = render(pattern, text);
  EncodedInput input = model.tokenize_with_mask(prompt);
  ForwardCache cache;
  VecF logits = model.mlm_logits(input, cache);
  if (full_vocab) {
    auto [loss, grad] = softmax_cross_entropy(logits, candidates[gold]);
    std::vector<std::pair<int, float>> dlogits;
    dlogits.reserve(static_cast<size_t>(grad.size()));
    for (int i = 0; i < grad.size(); ++i)
      if (grad[i] != 0.0f) dlogits.emplace_back(i, grad[i] * scale);
    model.mlm_backward(cache, dlogits);
    return loss;
  }
  auto [loss, grad] = restricted_cross_entropy(logits, candidates, gold);
  std::vector<std::pair<int, float>> dlogits;
  dlogits.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i)
    dlogits.emplace_back(candidates[i], grad[i] * scale);
  model.mlm_backward(cache, dlogits);
  return loss;
}

}  // namespace

TrainResult train_label_desc(MaskedLmEncoder& model, const LabelDescSet& set,
                             const Pattern& pattern, const VerbalizerMap& vmap,
                             const TrainConfig& config, const DevEval& dev_eval) {
  if (!vmap.validated()) fail("verbalizer map has not been validated");
  require_balanced(set);
  if (vmap.size() != set.label_names.size())
    fail("verbalizer map has ", vmap.size(), " labels, set has ", set.label_names.size());

  model.apply_freeze(config.freeze);
  AdamW opt(model.parameters(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  EpochStream stream(set.examples.size(), config.seed);
  const float scale = 1.0f / static_cast<float>(config.batch_size);

  TrainResult result;
  for (int step = 1; step <= config.max_steps; ++step) {
    opt.zero_grad();
    float loss = 0.0f;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& ex = set.examples[stream.next()];
      loss += mlm_example_step(model, pattern, ex.text, ex.label_index, vmap.token_ids, scale,
                               config.full_vocab_loss);
    }
    opt.step();
    result.loss_trace.push_back({step, loss / static_cast<float>(config.batch_size)});
    result.steps_run = step;
    if (dev_eval && config.eval_every && step % *config.eval_every == 0)
      result.dev_trace.push_back({step, dev_eval(model)});
  }
  return result;
}

VerbalizerMap random_verbalizers(MaskedLmEncoder& model,
                                 const std::vector<std::string>& label_names, uint64_t seed) {
  if (label_names.empty()) fail("need at least one label");
  std::vector<std::string> names;
  for (size_t i = 0; i < label_names.size(); ++i)
    names.push_back("RANDOM" + std::to_string(i + 1));
  auto ids = model.extend_vocab(names, seed);
  VerbalizerMap vmap;
  for (size_t i = 0; i < label_names.size(); ++i) {
    vmap.entries.push_back({label_names[i], names[i]});
    vmap.token_ids.push_back(ids.at(names[i]));
  }
  return vmap;
}

VerbalizerMap derange_verbalizers(const VerbalizerMap& vmap, uint64_t seed) {
  size_t n = vmap.size();
  if (n < 2) fail("no derangement exists for ", n, " label(s)");
  std::mt19937_64 rng(seed);
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  // Rejection sampling keeps the distribution uniform over derangements.
  while (true) {
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed_point = false;
    for (size_t i = 0; i < n; ++i)
      if (perm[i] == i) {
        fixed_point = true;
        break;
      }
    if (!fixed_point) break;
  }
  VerbalizerMap out = vmap;
  for (size_t i = 0; i < n; ++i) {
    out.entries[i].word = vmap.entries[perm[i]].word;
    if (!vmap.token_ids.empty()) out.token_ids[i] = vmap.token_ids[perm[i]];
  }
  return out;
}

TrainResult train_classifier(MaskedLmEncoder& model, const LabelDescSet& set,
                             const TrainConfig& config, const DevEval& dev_eval) {
  require_balanced(set);
  model.attach_classifier_head(static_cast<int>(set.label_names.size()), config.seed);
  model.apply_freeze(config.freeze);
  AdamW opt(model.parameters(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  EpochStream stream(set.examples.size(), config.seed);
  const float scale = 1.0f / static_cast<float>(config.batch_size);

  TrainResult result;
  for (int step = 1; step <= config.max_steps; ++step) {
    opt.zero_grad();
    float loss = 0.0f;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& ex = set.examples[stream.next()];
      EncodedInput input = model.tokenize_plain(ex.text);
      ForwardCache cache;
      VecF logits = model.classifier_logits(input, cache);
      auto [l, grad] = softmax_cross_entropy(logits, ex.label_index);
      loss += l;
      model.classifier_backward(cache, grad * scale);
    }
    opt.step();
    result.loss_trace.push_back({step, loss / static_cast<float>(config.batch_size)});
    result.steps_run = step;
    if (dev_eval && config.eval_every && step % *config.eval_every == 0)
      result.dev_trace.push_back({step, dev_eval(model)});
  }
  return result;
}

namespace {

// Argmax over the verbalizer slots, lowest label index on ties.
int predict_label(const MaskedLmEncoder& model, const Pattern& pattern, const std::string& text,
                  const std::vector<int>& candidates) {
  EncodedInput input = model.tokenize_with_mask(render(pattern, text));
  VecF logits = model.mask_distribution(input);
  int best = 0;
  float best_score = logits[candidates[0]];
  for (size_t i = 1; i < candidates.size(); ++i) {
    float s = logits[candidates[i]];
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

TrainResult train_supervised_fewshot(MaskedLmEncoder& model, const LabeledCorpus& train,
                                     const LabeledCorpus& dev, const Pattern& pattern,
                                     const VerbalizerMap& vmap, const TrainConfig& config) {
  if (!vmap.validated()) fail("verbalizer map has not been validated");
  if (train.records.empty()) fail("empty training corpus");
  if (dev.records.empty()) fail("empty dev corpus");
  int epochs = config.epochs.value_or(15);

  model.apply_freeze(config.freeze);
  AdamW opt(model.parameters(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  EpochStream stream(train.records.size(), config.seed);
  const float scale = 1.0f / static_cast<float>(config.batch_size);
  const size_t n = train.records.size();

  TrainResult result;
  double best_acc = -1.0;
  std::map<std::string, MatF> best_state;
  int global_step = 0;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    size_t consumed = 0;
    while (consumed < n) {
      opt.zero_grad();
      float loss = 0.0f;
      int in_batch = 0;
      for (; in_batch < config.batch_size && consumed < n; ++in_batch, ++consumed) {
        const auto& r = train.records[stream.next()];
        loss += mlm_example_step(model, pattern, r.text, r.label_index, vmap.token_ids, scale,
                                 config.full_vocab_loss);
      }
      opt.step();
      ++global_step;
      result.loss_trace.push_back({global_step, loss / static_cast<float>(in_batch)});
    }
    long correct = 0;
    for (const auto& r : dev.records)
      if (predict_label(model, pattern, r.text, vmap.token_ids) == r.label_index) ++correct;
    double acc = static_cast<double>(correct) / static_cast<double>(dev.records.size());
    result.dev_trace.push_back({epoch, acc});
    if (acc > best_acc) {
      best_acc = acc;
      result.best_epoch = epoch;
      best_state = model.snapshot();
    }
  }
  result.steps_run = global_step;

  // Restore the best epoch's parameters.
  for (Parameter* p : model.parameters()) {
    auto it = best_state.find(p->name);
    if (it != best_state.end()) p->value = it->second;
  }
  return result;
}

}  // namespace ldt
