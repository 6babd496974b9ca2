#pragma once

#include <functional>
#include <optional>
#include <random>

#include "ldt/corpus.hpp"
#include "ldt/encoder.hpp"
#include "ldt/labeldesc.hpp"
#include "ldt/prompting.hpp"

namespace ldt {

struct TrainConfig {
  double learning_rate = 5e-7;
  int max_steps = 0;  // parameter updates; each consumes batch_size examples
  int batch_size = 1;
  uint64_t seed = 0;
  FreezePolicy freeze;
  std::optional<int> eval_every;  // in updates
  std::optional<int> epochs;      // few-shot mode: epochs with dev selection
  double weight_decay = 0.01;
  bool full_vocab_loss = false;

  std::string serialize() const;
  std::string hash() const;
};

struct LossPoint {
  int step;
  float loss;
};

struct DevPoint {
  int step;
  double accuracy;
};

using DevEval = std::function<double(const MaskedLmEncoder&)>;

struct TrainResult {
  std::vector<LossPoint> loss_trace;
  std::vector<DevPoint> dev_trace;
  int steps_run = 0;
  int best_epoch = -1;  // few-shot selection, 1-based

  std::string loss_trace_csv() const;
};

// Cross entropy over the softmax restricted to the candidate token ids.
// Returns the loss and the gradient on the candidate logits (gold position
// gets p - 1). Scores outside the candidate set do not enter the loss.
std::pair<float, std::vector<float>> restricted_cross_entropy(
    const VecF& logits, const std::vector<int>& candidate_ids, int gold_pos);

// Plain softmax cross entropy over a small logit vector (classifier head or
// the full-vocabulary flag).
std::pair<float, VecF> softmax_cross_entropy(const VecF& logits, int gold);

// Deterministic label-balanced example order: one pass per epoch over a
// seed-shuffled permutation, reshuffled at every epoch boundary.
class EpochStream {
 public:
  EpochStream(size_t n, uint64_t seed);
  size_t next();
  size_t epoch_size() const { return order_.size(); }

 private:
  void reshuffle();
  std::vector<size_t> order_;
  size_t pos_ = 0;
  std::mt19937_64 rng_;
};

// Pattern-verbalizer finetuning on a label-description set. The verbalizer
// map must be validated; the set must be balanced.
TrainResult train_label_desc(MaskedLmEncoder& model, const LabelDescSet& set,
                             const Pattern& pattern, const VerbalizerMap& vmap,
                             const TrainConfig& config, const DevEval& dev_eval = nullptr);

// Adds RANDOM1..RANDOMc to the vocabulary with freshly initialized embeddings
// and maps label i to RANDOMi; the returned map is already validated.
VerbalizerMap random_verbalizers(MaskedLmEncoder& model,
                                 const std::vector<std::string>& label_names, uint64_t seed);

// Uniformly seed-sampled derangement of the label-to-word assignment.
VerbalizerMap derange_verbalizers(const VerbalizerMap& vmap, uint64_t seed);

// Pattern-free variant: raw texts through a fresh two-layer head on the
// pooled representation, trained jointly with the non-frozen encoder.
TrainResult train_classifier(MaskedLmEncoder& model, const LabelDescSet& set,
                             const TrainConfig& config, const DevEval& dev_eval = nullptr);

// Supervised few-shot baseline: pattern-verbalizer training over labeled
// records for config.epochs epochs, keeping the best epoch by dev accuracy.
TrainResult train_supervised_fewshot(MaskedLmEncoder& model, const LabeledCorpus& train,
                                     const LabeledCorpus& dev, const Pattern& pattern,
                                     const VerbalizerMap& vmap, const TrainConfig& config);

}  // namespace ldt
