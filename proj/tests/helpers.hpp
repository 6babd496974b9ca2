#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ldt/corpus.hpp"
#include "ldt/encoder.hpp"
#include "ldt/tokenizer.hpp"

namespace ldt::test {

// Adds the merge chain that turns `piece` (already in byte-mapped alphabet,
// e.g. "ĠWorld") into a single symbol.
inline void add_word_merges(std::vector<std::pair<std::string, std::string>>& merges,
                            std::vector<std::string>& chain_symbols, const std::string& piece) {
  // Split into the leading symbol (possibly multi-byte "Ġ") and single chars.
  std::vector<std::string> syms;
  size_t i = 0;
  while (i < piece.size()) {
    size_t len = 1;
    unsigned char c = piece[i];
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    syms.push_back(piece.substr(i, len));
    i += len;
  }
  std::string acc = syms[0];
  for (size_t k = 1; k < syms.size(); ++k) {
    bool seen = false;
    for (const auto& m : merges)
      if (m.first == acc && m.second == syms[k]) seen = true;
    if (!seen) merges.emplace_back(acc, syms[k]);
    acc += syms[k];
    chain_symbols.push_back(acc);
  }
}

// A small but real byte-level BPE: all 256 byte tokens plus merged whole-word
// pieces for every verbalizer the tests touch.
inline ByteLevelBpe make_test_tokenizer() {
  std::map<std::string, int> vocab = {
      {"<s>", 0}, {"<pad>", 1}, {"</s>", 2}, {"<unk>", 3}, {"<mask>", 4}};
  int next = 5;
  const auto& b2u = ByteLevelBpe::byte_to_unicode();
  auto cp_to_utf8 = [](uint32_t cp) {
    std::string out;
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
  };
  for (int b = 0; b < 256; ++b) vocab[cp_to_utf8(b2u[b])] = next++;

  const std::string g = cp_to_utf8(b2u[' ']);  // "Ġ"
  std::vector<std::pair<std::string, std::string>> merges;
  std::vector<std::string> chain;
  for (const char* w :
       {"World", "Sports", "Business", "Tech", "awful", "great", "terrible", "bad", "okay",
        "good", "religion", "automobile", "medicine", "gun", "sports", "movie", "game"}) {
    add_word_merges(merges, chain, g + w);
  }
  for (const auto& sym : chain)
    if (!vocab.count(sym)) vocab[sym] = next++;
  return ByteLevelBpe(std::move(vocab), std::move(merges));
}

inline EncoderConfig tiny_config(int vocab_size) {
  EncoderConfig cfg;
  cfg.model_id = "tiny";
  cfg.num_layers = 2;
  cfg.hidden_size = 32;
  cfg.num_heads = 2;
  cfg.intermediate_size = 64;
  cfg.vocab_size = vocab_size;
  cfg.max_position_embeddings = 202;  // sequence budget 200
  return cfg;
}

inline MaskedLmEncoder make_tiny_model(uint64_t seed = 7) {
  ByteLevelBpe tok = make_test_tokenizer();
  return MaskedLmEncoder(tiny_config(tok.vocab_size()), std::move(tok), seed);
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() /
             ("ldt_test_" + tag + "_" + std::to_string(rng()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Balanced two-label corpus whose texts come from disjoint keyword families.
inline LabeledCorpus synthetic_keyword_corpus(DatasetId id, int per_label, uint64_t seed,
                                              int words_per_text = 4) {
  static const std::vector<std::string> neg = {"awful", "terrible", "bad", "dreadful"};
  static const std::vector<std::string> pos = {"great", "good", "fine", "amazing"};
  std::mt19937_64 rng(seed);
  LabeledCorpus corpus{id, Split::Test, {}};
  for (int i = 0; i < per_label; ++i) {
    for (int label = 0; label < 2; ++label) {
      const auto& pool = label == 0 ? neg : pos;
      std::string text;
      for (int w = 0; w < words_per_text; ++w) {
        if (w) text += ' ';
        text += pool[rng() % pool.size()];
      }
      corpus.records.push_back({text, label});
    }
  }
  return corpus;
}

}  // namespace ldt::test
