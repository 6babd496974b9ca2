#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ldt {

struct SpecialTokenNames {
  std::string bos = "<s>";
  std::string pad = "<pad>";
  std::string eos = "</s>";
  std::string unk = "<unk>";
  std::string mask = "<mask>";
};

// Byte-level BPE of the GPT-2/RoBERTa family: text is pretokenized, each
// pretoken's bytes are remapped to printable code points, then merged by rank.
// Loads the ecosystem's vocab.json + merges.txt files.
class ByteLevelBpe {
 public:
  using SpecialNames = SpecialTokenNames;

  ByteLevelBpe(std::map<std::string, int> vocab,
               std::vector<std::pair<std::string, std::string>> merges,
               SpecialNames names = SpecialNames());
  ByteLevelBpe(const ByteLevelBpe& other);
  ByteLevelBpe& operator=(const ByteLevelBpe& other);
  ByteLevelBpe(ByteLevelBpe&&) noexcept;
  ByteLevelBpe& operator=(ByteLevelBpe&&) noexcept;
  ~ByteLevelBpe();

  static ByteLevelBpe load(const std::filesystem::path& vocab_json,
                           const std::filesystem::path& merges_txt,
                           SpecialNames names = SpecialNames());
  void save(const std::filesystem::path& vocab_json,
            const std::filesystem::path& merges_txt) const;

  // Tokenizes without adding any special tokens.
  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  int vocab_size() const;  // base vocabulary plus added tokens
  int bos_id() const { return bos_id_; }
  int eos_id() const { return eos_id_; }
  int pad_id() const { return pad_id_; }
  int unk_id() const { return unk_id_; }
  int mask_id() const { return mask_id_; }

  std::optional<int> piece_id(const std::string& piece) const;
  const std::string& id_to_piece(int id) const;

  // Registers a new whole-word token (an HF-style added token, matched before
  // BPE); returns its id, which is the previous vocab_size().
  int add_token(const std::string& name);
  const std::vector<std::string>& added_tokens() const { return added_order_; }

  // The id a word would occupy at a mask slot, i.e. tokenized with the leading
  // space the patterns place before the mask. nullopt if not a single token.
  std::optional<int> single_token_id_in_mask_context(const std::string& word) const;

  // The pretokenizer, exposed for tests.
  static std::vector<std::string> pretokenize(std::string_view text);
  static const std::array<uint32_t, 256>& byte_to_unicode();

 private:
  std::vector<int> bpe_pretoken(const std::string& pretoken) const;

  std::map<std::string, int> vocab_;
  std::vector<std::string> id_to_piece_;
  std::unordered_map<std::string, int> merge_rank_;  // "a b" -> rank
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, int> added_;
  std::vector<std::string> added_order_;
  int bos_id_, eos_id_, pad_id_, unk_id_, mask_id_;
  SpecialNames names_;

  struct Cache;  // guarded pretoken -> ids memo
  std::unique_ptr<Cache> cache_;
};

}  // namespace ldt
