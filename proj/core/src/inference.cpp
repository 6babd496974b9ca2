#include "ldt/inference.hpp"

#include <atomic>
#include <thread>

#include "ldt/util.hpp"

namespace ldt {

int argmax_lowest(const std::vector<float>& scores) {
  if (scores.empty()) fail("empty score vector");
  int best = 0;
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  return best;
}

Prediction classify_mlm(const MaskedLmEncoder& model, const std::string& text,
                        const Pattern& pattern, const VerbalizerMap& vmap) {
  if (!vmap.validated()) fail("verbalizer map has not been validated");
  EncodedInput input = model.tokenize_with_mask(render(pattern, text));
  VecF logits = model.mask_distribution(input);
  Prediction pred;
  pred.scores.reserve(vmap.size());
  for (int id : vmap.token_ids) pred.scores.push_back(logits[id]);
  pred.label_index = argmax_lowest(pred.scores);
  return pred;
}

Prediction classify_pooled(const MaskedLmEncoder& model, const std::string& text) {
  if (!model.has_classifier_head()) fail("checkpoint has no classifier head");
  EncodedInput input = model.tokenize_plain(text);
  ForwardCache cache;
  VecF logits = model.classifier_logits(input, cache);
  Prediction pred;
  pred.scores.assign(logits.data(), logits.data() + logits.size());
  pred.label_index = argmax_lowest(pred.scores);
  return pred;
}

namespace {

template <class Fn>
std::vector<Prediction> predict_sharded(size_t n, int num_threads, Fn&& classify_at) {
  std::vector<Prediction> out(n);
  if (num_threads <= 1) {
    for (size_t i = 0; i < n; ++i) out[i] = classify_at(i);
    return out;
  }
  std::vector<std::thread> workers;
  std::atomic<size_t> next{0};
  for (int t = 0; t < num_threads; ++t)
    workers.emplace_back([&] {
      while (true) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        out[i] = classify_at(i);
      }
    });
  for (auto& w : workers) w.join();
  return out;
}

}  // namespace

std::vector<Prediction> predict_corpus(const MaskedLmEncoder& model,
                                       const LabeledCorpus& corpus, const Pattern& pattern,
                                       const VerbalizerMap& vmap, int batch_size,
                                       int num_threads) {
  if (corpus.records.empty()) fail("empty corpus");
  if (batch_size < 1) fail("batch size must be positive");
  // Examples are padded only logically: each sequence runs on its own, so
  // scores are bit-equal across batch sizes.
  (void)batch_size;
  return predict_sharded(corpus.records.size(), num_threads, [&](size_t i) {
    return classify_mlm(model, corpus.records[i].text, pattern, vmap);
  });
}

std::vector<Prediction> predict_corpus_pooled(const MaskedLmEncoder& model,
                                              const LabeledCorpus& corpus, int batch_size,
                                              int num_threads) {
  if (corpus.records.empty()) fail("empty corpus");
  if (batch_size < 1) fail("batch size must be positive");
  (void)batch_size;
  return predict_sharded(corpus.records.size(), num_threads, [&](size_t i) {
    return classify_pooled(model, corpus.records[i].text);
  });
}

void save_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
  std::string out;
  for (size_t i = 0; i < preds.size(); ++i) {
    out += msg(i, '\t', preds[i].label_index, '\t');
    for (size_t s = 0; s < preds[i].scores.size(); ++s) {
      if (s) out += ',';
      out += msg(preds[i].scores[s]);
    }
    out += '\n';
  }
  write_file(path, out);
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  int row = 0;
  for (const auto& line : split(read_file(path), '\n')) {
    ++row;
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3) fail(path.string(), ": row ", row, ": expected 3 columns");
    Prediction p;
    p.label_index = std::stoi(cols[1]);
    for (const auto& s : split(cols[2], ','))
      if (!s.empty()) p.scores.push_back(std::stof(s));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ldt
