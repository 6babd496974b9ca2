#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ldt/prompting.hpp"
#include "ldt/tokenizer.hpp"

namespace ldt {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecF = Eigen::VectorXf;
using RowF = Eigen::Matrix<float, 1, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModelSize { Base, Large, Other };
std::string to_string(ModelSize s);
ModelSize model_size_from_string(const std::string& s);

struct EncoderConfig {
  std::string model_id = "tiny";
  int num_layers = 2;
  int hidden_size = 32;
  int num_heads = 2;
  int intermediate_size = 64;
  int vocab_size = 0;
  int max_position_embeddings = 66;  // includes the position offset rows
  float layer_norm_eps = 1e-5f;
  float initializer_range = 0.02f;
  int pad_token_id = 1;

  // Positions start after the pad row, RoBERTa style.
  int position_offset() const { return pad_token_id + 1; }
  int sequence_budget() const { return max_position_embeddings - position_offset(); }

  static EncoderConfig from_json_file(const std::filesystem::path& path);
  void save_json(const std::filesystem::path& path) const;
};

// Published dimensions of the reference pretrained encoders.
EncoderConfig reference_config(ModelSize size);

struct FreezePolicy {
  std::set<int> frozen_layers;
  bool embeddings_trainable = true;
  bool head_trainable = true;

  static FreezePolicy none() { return {}; }
  static FreezePolicy lower_half(int num_layers);
  static FreezePolicy all_frozen(int num_layers);
  std::string to_string() const;
};

struct EncodedInput {
  std::vector<int> ids;
  int mask_index = -1;
  bool truncated = false;
};

struct Parameter {
  std::string name;
  std::string group;
  MatF value;  // vectors are 1 x n
  MatF grad;
  bool trainable = true;
};

namespace detail {
struct Weights;
}

// Per-example activation cache; feed it to the matching backward call.
class ForwardCache {
 public:
  struct Impl;

  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

 private:
  friend class MaskedLmEncoder;
  std::unique_ptr<Impl> impl_;
};

// A pretrained bidirectional transformer encoder with a tied masked-token
// prediction head. Single writer for training; const inference methods are
// safe to call concurrently.
class MaskedLmEncoder {
 public:
  MaskedLmEncoder(EncoderConfig config, ByteLevelBpe tokenizer, uint64_t seed);
  static MaskedLmEncoder load(const std::filesystem::path& model_dir);
  void save(const std::filesystem::path& model_dir) const;

  MaskedLmEncoder(MaskedLmEncoder&&) noexcept;
  MaskedLmEncoder& operator=(MaskedLmEncoder&&) noexcept;
  MaskedLmEncoder(const MaskedLmEncoder&) = delete;
  MaskedLmEncoder& operator=(const MaskedLmEncoder&) = delete;
  ~MaskedLmEncoder();

  // Deep copy, for checkpoint snapshots.
  MaskedLmEncoder clone() const;

  const EncoderConfig& config() const { return config_; }
  const ByteLevelBpe& tokenizer() const { return tokenizer_; }
  int vocab_size() const;  // current embedding rows, grows with extend_vocab
  int hidden_size() const { return config_.hidden_size; }
  int num_layers() const { return config_.num_layers; }

  // Maps the prompt onto ids with the model's mask token. Over-long inputs
  // lose text tokens from the tail; the frame and mask are never dropped.
  EncodedInput tokenize_with_mask(const PromptString& prompt) const;
  // Pattern-free encoding for the classifier-head path.
  EncodedInput tokenize_plain(const std::string& text) const;

  // Raw pre-softmax scores over the vocabulary at the mask position.
  VecF mask_distribution(const EncodedInput& input) const;
  // Final hidden state of the first position.
  VecF pooled_representation(const EncodedInput& input) const;

  // Appends new vocabulary entries with natively initialized embeddings; the
  // tied prediction head sees them immediately. Returns name -> token id.
  std::map<std::string, int> extend_vocab(const std::vector<std::string>& names, uint64_t seed);

  void apply_freeze(const FreezePolicy& policy);
  std::map<std::string, long> trainable_parameter_report() const;

  void attach_classifier_head(int num_labels, uint64_t seed);
  bool has_classifier_head() const;
  int classifier_num_labels() const;

  // Training surface: forwards fill a cache, backwards accumulate grads.
  VecF mlm_logits(const EncodedInput& input, ForwardCache& cache) const;
  void mlm_backward(const ForwardCache& cache,
                    const std::vector<std::pair<int, float>>& dlogits);
  VecF classifier_logits(const EncodedInput& input, ForwardCache& cache) const;
  void classifier_backward(const ForwardCache& cache, const VecF& dlogits);
  void zero_grad();

  std::vector<Parameter*>& parameters() { return registry_; }
  const std::vector<Parameter*>& parameters() const { return registry_; }
  const Parameter& param(const std::string& name) const;

  // Parameter bytes by name, for bit-invariance checks.
  std::map<std::string, MatF> snapshot() const;

 private:
  MaskedLmEncoder();
  void rebuild_registry();
  void forward(const EncodedInput& input, ForwardCache& cache) const;

  EncoderConfig config_;
  ByteLevelBpe tokenizer_;
  std::unique_ptr<detail::Weights> w_;
  std::vector<Parameter*> registry_;
};

}  // namespace ldt
