#include "ldt/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <limits>

#include <nlohmann/json.hpp>

#include "ldt/util.hpp"

namespace ldt {

namespace {

std::string codepoint_to_utf8(uint32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

// Decodes one UTF-8 code point starting at i; advances i.
uint32_t next_codepoint(std::string_view s, size_t& i) {
  unsigned char c = s[i];
  uint32_t cp;
  int extra;
  if (c < 0x80) { cp = c; extra = 0; }
  else if ((c >> 5) == 0x6) { cp = c & 0x1F; extra = 1; }
  else if ((c >> 4) == 0xE) { cp = c & 0x0F; extra = 2; }
  else { cp = c & 0x07; extra = 3; }
  ++i;
  for (int k = 0; k < extra && i < s.size(); ++k, ++i)
    cp = (cp << 6) | (s[i] & 0x3F);
  return cp;
}

bool is_ascii_letter(uint32_t cp) {
  return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

// Codepoints past ASCII are treated as letters; the source corpora are
// English, where this matches the reference pretokenizer.
bool is_letter(uint32_t cp) { return is_ascii_letter(cp) || cp >= 0x80; }
bool is_digit(uint32_t cp) { return cp >= '0' && cp <= '9'; }
bool is_space(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == 0x0B;
}

struct Codepoints {
  std::vector<uint32_t> cps;
  std::vector<size_t> offsets;  // byte offset of each cp; offsets.back() = size
};

Codepoints decode_utf8(std::string_view s) {
  Codepoints out;
  size_t i = 0;
  while (i < s.size()) {
    out.offsets.push_back(i);
    out.cps.push_back(next_codepoint(s, i));
  }
  out.offsets.push_back(s.size());
  return out;
}

}  // namespace

struct ByteLevelBpe::Cache {
  std::mutex mutex;
  std::unordered_map<std::string, std::vector<int>> memo;
};

ByteLevelBpe::ByteLevelBpe(const ByteLevelBpe& other)
    : vocab_(other.vocab_),
      id_to_piece_(other.id_to_piece_),
      merge_rank_(other.merge_rank_),
      merges_(other.merges_),
      added_(other.added_),
      added_order_(other.added_order_),
      bos_id_(other.bos_id_),
      eos_id_(other.eos_id_),
      pad_id_(other.pad_id_),
      unk_id_(other.unk_id_),
      mask_id_(other.mask_id_),
      names_(other.names_),
      cache_(std::make_unique<Cache>()) {}

ByteLevelBpe& ByteLevelBpe::operator=(const ByteLevelBpe& other) {
  if (this != &other) {
    ByteLevelBpe tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

ByteLevelBpe::ByteLevelBpe(ByteLevelBpe&&) noexcept = default;
ByteLevelBpe& ByteLevelBpe::operator=(ByteLevelBpe&&) noexcept = default;
ByteLevelBpe::~ByteLevelBpe() = default;

const std::array<uint32_t, 256>& ByteLevelBpe::byte_to_unicode() {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    std::vector<bool> direct(256, false);
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    uint32_t n = 0;
    for (int b = 0; b < 256; ++b) {
      if (direct[b]) t[b] = static_cast<uint32_t>(b);
      else t[b] = 256 + n++;
    }
    return t;
  }();
  return table;
}

std::vector<std::string> ByteLevelBpe::pretokenize(std::string_view text) {
  Codepoints u = decode_utf8(text);
  const auto& cps = u.cps;
  size_t n = cps.size();
  std::vector<std::string> out;
  auto emit = [&](size_t from, size_t to) {
    out.emplace_back(text.substr(u.offsets[from], u.offsets[to] - u.offsets[from]));
  };

  size_t i = 0;
  while (i < n) {
    uint32_t c = cps[i];
    // Contractions: 's 't 're 've 'm 'll 'd
    if (c == '\'' && i + 1 < n) {
      uint32_t a = cps[i + 1];
      if (a == 's' || a == 't' || a == 'm' || a == 'd') {
        emit(i, i + 2);
        i += 2;
        continue;
      }
      if (i + 2 < n) {
        uint32_t b = cps[i + 2];
        if ((a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l')) {
          emit(i, i + 3);
          i += 3;
          continue;
        }
      }
    }
    bool lead_space = c == ' ' && i + 1 < n;
    size_t start = i;
    size_t j = lead_space ? i + 1 : i;
    uint32_t first = cps[j];
    if (is_letter(first)) {
      while (j < n && is_letter(cps[j])) ++j;
      emit(start, j);
      i = j;
      continue;
    }
    if (is_digit(first)) {
      while (j < n && is_digit(cps[j])) ++j;
      emit(start, j);
      i = j;
      continue;
    }
    if (!is_space(first)) {
      while (j < n && !is_space(cps[j]) && !is_letter(cps[j]) && !is_digit(cps[j])) ++j;
      emit(start, j);
      i = j;
      continue;
    }
    // Whitespace run; a run followed by a non-space keeps its last character
    // for the next pretoken's optional leading space.
    size_t k = i;
    while (k < n && is_space(cps[k])) ++k;
    if (k == n) {
      emit(i, k);
      i = k;
    } else if (k - i >= 2) {
      emit(i, k - 1);
      i = k - 1;
    } else {
      emit(i, k);  // lone non-' ' whitespace before a non-space
      i = k;
    }
  }
  return out;
}

ByteLevelBpe::ByteLevelBpe(std::map<std::string, int> vocab,
                           std::vector<std::pair<std::string, std::string>> merges,
                           SpecialNames names)
    : vocab_(std::move(vocab)),
      merges_(std::move(merges)),
      names_(std::move(names)),
      cache_(std::make_unique<Cache>()) {
  int max_id = -1;
  for (const auto& [piece, id] : vocab_) {
    (void)piece;
    max_id = std::max(max_id, id);
  }
  id_to_piece_.assign(max_id + 1, "");
  for (const auto& [piece, id] : vocab_) {
    if (id < 0) fail("negative token id for piece '", piece, "'");
    if (!id_to_piece_[id].empty()) fail("duplicate token id ", id);
    id_to_piece_[id] = piece;
  }
  for (size_t r = 0; r < merges_.size(); ++r)
    merge_rank_[merges_[r].first + ' ' + merges_[r].second] = static_cast<int>(r);

  auto req = [&](const std::string& name) {
    auto it = vocab_.find(name);
    if (it == vocab_.end()) fail("vocabulary is missing special token '", name, "'");
    return it->second;
  };
  bos_id_ = req(names_.bos);
  eos_id_ = req(names_.eos);
  pad_id_ = req(names_.pad);
  unk_id_ = req(names_.unk);
  mask_id_ = req(names_.mask);
}

ByteLevelBpe ByteLevelBpe::load(const std::filesystem::path& vocab_json,
                                const std::filesystem::path& merges_txt, SpecialNames names) {
  nlohmann::json j = nlohmann::json::parse(read_file(vocab_json));
  std::map<std::string, int> vocab;
  for (auto it = j.begin(); it != j.end(); ++it) vocab[it.key()] = it.value().get<int>();

  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& line : split(read_file(merges_txt), '\n')) {
    std::string_view t = trim(line);
    if (t.empty() || starts_with(t, "#")) continue;
    size_t sp = t.find(' ');
    if (sp == std::string_view::npos) fail("bad merges line: '", std::string(t), "'");
    merges.emplace_back(std::string(t.substr(0, sp)), std::string(t.substr(sp + 1)));
  }
  return ByteLevelBpe(std::move(vocab), std::move(merges), std::move(names));
}

void ByteLevelBpe::save(const std::filesystem::path& vocab_json,
                        const std::filesystem::path& merges_txt) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [piece, id] : vocab_) j[piece] = id;
  write_file(vocab_json, j.dump());
  std::string m = "#version: 0.2\n";
  for (const auto& [a, b] : merges_) m += a + ' ' + b + '\n';
  write_file(merges_txt, m);
}

std::vector<int> ByteLevelBpe::bpe_pretoken(const std::string& pretoken) const {
  {
    std::lock_guard lock(cache_->mutex);
    auto it = cache_->memo.find(pretoken);
    if (it != cache_->memo.end()) return it->second;
  }
  // Map raw bytes to the printable alphabet, one symbol per byte.
  std::vector<std::string> symbols;
  symbols.reserve(pretoken.size());
  const auto& b2u = byte_to_unicode();
  for (unsigned char b : pretoken) symbols.push_back(codepoint_to_utf8(b2u[b]));

  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    size_t best_i = 0;
    for (size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find(symbols[i] + ' ' + symbols[i + 1]);
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_i = i;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    symbols[best_i] += symbols[best_i + 1];
    symbols.erase(symbols.begin() + static_cast<long>(best_i) + 1);
  }

  std::vector<int> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto it = vocab_.find(s);
    ids.push_back(it == vocab_.end() ? unk_id_ : it->second);
  }
  std::lock_guard lock(cache_->mutex);
  cache_->memo.emplace(pretoken, ids);
  return ids;
}

std::vector<int> ByteLevelBpe::encode(std::string_view text) const {
  std::vector<int> out;
  if (text.empty()) return out;

  // Added tokens are split out before BPE, longest name first.
  if (!added_.empty()) {
    std::vector<std::string> names = added_order_;
    std::sort(names.begin(), names.end(),
              [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    size_t best = std::string_view::npos;
    const std::string* best_name = nullptr;
    for (const auto& name : names) {
      size_t pos = text.find(name);
      if (pos != std::string_view::npos && (best == std::string_view::npos || pos < best)) {
        best = pos;
        best_name = &name;
      }
    }
    if (best_name) {
      auto left = encode(text.substr(0, best));
      auto right = encode(text.substr(best + best_name->size()));
      out = std::move(left);
      out.push_back(added_.at(*best_name));
      out.insert(out.end(), right.begin(), right.end());
      return out;
    }
  }

  for (const auto& pretoken : pretokenize(text)) {
    auto ids = bpe_pretoken(pretoken);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string ByteLevelBpe::decode(const std::vector<int>& ids) const {
  // Invert the byte-to-unicode map once.
  static thread_local std::map<uint32_t, unsigned char> u2b = [] {
    std::map<uint32_t, unsigned char> m;
    const auto& b2u = byte_to_unicode();
    for (int b = 0; b < 256; ++b) m[b2u[b]] = static_cast<unsigned char>(b);
    return m;
  }();
  std::string bytes;
  for (int id : ids) {
    const std::string& piece = id_to_piece(id);
    if (static_cast<size_t>(id) >= id_to_piece_.size()) {
      bytes += piece;  // added tokens decode to their literal names
      continue;
    }
    size_t i = 0;
    while (i < piece.size()) {
      uint32_t cp = next_codepoint(piece, i);
      auto it = u2b.find(cp);
      if (it == u2b.end()) fail("cannot decode code point ", cp);
      bytes += static_cast<char>(it->second);
    }
  }
  return bytes;
}

int ByteLevelBpe::vocab_size() const {
  return static_cast<int>(id_to_piece_.size() + added_order_.size());
}

std::optional<int> ByteLevelBpe::piece_id(const std::string& piece) const {
  auto a = added_.find(piece);
  if (a != added_.end()) return a->second;
  auto it = vocab_.find(piece);
  if (it == vocab_.end()) return std::nullopt;
  return it->second;
}

const std::string& ByteLevelBpe::id_to_piece(int id) const {
  if (id >= 0 && static_cast<size_t>(id) < id_to_piece_.size()) return id_to_piece_[id];
  size_t a = static_cast<size_t>(id) - id_to_piece_.size();
  if (a < added_order_.size()) return added_order_[a];
  fail("token id ", id, " out of range");
}

int ByteLevelBpe::add_token(const std::string& name) {
  if (name.empty()) fail("cannot add empty token");
  if (piece_id(name)) fail("token '", name, "' already in vocabulary");
  int id = vocab_size();
  added_[name] = id;
  added_order_.push_back(name);
  return id;
}

std::optional<int> ByteLevelBpe::single_token_id_in_mask_context(const std::string& word) const {
  auto a = added_.find(word);
  if (a != added_.end()) return a->second;
  // Mask slots follow a space in the patterns, so the candidate must be the
  // space-prefixed piece.
  std::vector<int> ids = encode(" " + word);
  if (ids.size() != 1 || ids[0] == unk_id_) return std::nullopt;
  return ids[0];
}

}  // namespace ldt
