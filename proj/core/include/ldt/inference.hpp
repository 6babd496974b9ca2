#pragma once

#include <filesystem>
#include <vector>

#include "ldt/corpus.hpp"
#include "ldt/encoder.hpp"
#include "ldt/prompting.hpp"

namespace ldt {

struct Prediction {
  int label_index = -1;  // argmax of scores, lowest index on ties
  std::vector<float> scores;
};

// Renders text through the pattern and picks the most probable verbalizer at
// the mask. The map must be validated.
Prediction classify_mlm(const MaskedLmEncoder& model, const std::string& text,
                        const Pattern& pattern, const VerbalizerMap& vmap);

// Classifier-head path over the raw text (no pattern, no verbalizers).
Prediction classify_pooled(const MaskedLmEncoder& model, const std::string& text);

// Order-preserving corpus classification. Scores are independent of
// batch_size; num_threads > 1 shards the corpus and reassembles in order.
std::vector<Prediction> predict_corpus(const MaskedLmEncoder& model,
                                       const LabeledCorpus& corpus, const Pattern& pattern,
                                       const VerbalizerMap& vmap, int batch_size = 1,
                                       int num_threads = 1);

std::vector<Prediction> predict_corpus_pooled(const MaskedLmEncoder& model,
                                              const LabeledCorpus& corpus, int batch_size = 1,
                                              int num_threads = 1);

// Predictions file: "<record_index>\t<label_index>\t<score,score,...>".
void save_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

int argmax_lowest(const std::vector<float>& scores);

}  // namespace ldt
