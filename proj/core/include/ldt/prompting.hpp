#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ldt/corpus.hpp"
#include "ldt/labeldesc.hpp"
#include "ldt/tokenizer.hpp"

namespace ldt {

enum class PatternFamily { QA, Prompt };
enum class TaskKind { Topic, Sentiment };
enum class TopicNoun { Article, Question, Newsgroup };

std::string to_string(PatternFamily f);
std::string to_string(TaskKind k);
std::string to_string(TopicNoun n);

struct Pattern {
  PatternFamily family = PatternFamily::Prompt;
  int id = 0;  // unique within family
  std::string template_text;  // contains {x} and {mask} exactly once each

  bool mask_before_text() const;
  std::string key() const;  // e.g. "prompt9"
};

// The 4 Q&A + 10 prompt patterns for a task kind; topic patterns carry the
// dataset's noun (article / question / newsgroup).
std::vector<Pattern> pattern_catalog(TaskKind kind, TopicNoun noun = TopicNoun::Article);

TaskKind task_kind_for(DatasetId id);
TopicNoun topic_noun_for(DatasetId id);
std::vector<Pattern> pattern_catalog_for(DatasetId id);
std::optional<Pattern> find_pattern(const std::vector<Pattern>& catalog, const std::string& key);

// Catalog export/import for audit, one pattern per line.
std::string catalog_to_text(const std::vector<Pattern>& catalog);

// A rendered prompt: the input text spliced into the pattern frame around a
// single abstract mask slot. The backend decides the concrete mask marker.
struct PromptString {
  enum class Kind { Literal, Text, Mask };
  struct Segment {
    Kind kind;
    std::string value;  // empty for Mask
  };
  std::vector<Segment> segments;

  std::string to_string(std::string_view mask_marker = "{mask}") const;
  const std::string& text() const;
  bool mask_before_text() const;
};

PromptString render(const Pattern& pattern, const std::string& text);

struct VerbalizerMap {
  struct Entry {
    std::string label;
    std::string word;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;        // label index = position
  std::vector<int> token_ids;        // filled by validate_single_token

  size_t size() const { return entries.size(); }
  bool validated() const { return !entries.empty() && token_ids.size() == entries.size(); }
  std::vector<std::string> labels() const;
  std::string to_text() const;  // two-column export
};

VerbalizerMap verbalizers_for(DatasetId id);

// Checks every verbalizer is one vocabulary token in mask-slot context and
// fills token_ids; rejects duplicate words and colliding token ids.
VerbalizerMap validate_single_token(const VerbalizerMap& vmap, const ByteLevelBpe& tokenizer);

// One prompt holding the instruction, every set example as a shuffled
// demonstration line, and the query awaiting its label.
std::string build_icl_prompt(const LabelDescSet& set, const std::string& query_text,
                             uint64_t seed, const std::string& instruction);

}  // namespace ldt
