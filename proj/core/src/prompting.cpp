#include "ldt/prompting.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "ldt/util.hpp"

namespace ldt {

std::string to_string(PatternFamily f) { return f == PatternFamily::QA ? "qa" : "prompt"; }
std::string to_string(TaskKind k) { return k == TaskKind::Topic ? "topic" : "sentiment"; }

std::string to_string(TopicNoun n) {
  switch (n) {
    case TopicNoun::Article: return "article";
    case TopicNoun::Question: return "question";
    case TopicNoun::Newsgroup: return "newsgroup";
  }
  fail("bad noun");
}

bool Pattern::mask_before_text() const {
  return template_text.find("{mask}") < template_text.find("{x}");
}

std::string Pattern::key() const { return to_string(family) + std::to_string(id); }

namespace {

// The prompt 9/10 headword per topic noun (capitalized / all-caps forms).
std::pair<std::string, std::string> headword(TopicNoun noun) {
  switch (noun) {
    case TopicNoun::Article: return {"News", "NEWS"};
    case TopicNoun::Question: return {"Question", "QUESTION"};
    case TopicNoun::Newsgroup: return {"Newsgroup", "NEWSGROUP"};
  }
  fail("bad noun");
}

}  // namespace

std::vector<Pattern> pattern_catalog(TaskKind kind, TopicNoun noun) {
  std::vector<Pattern> out;
  auto qa = [&](int id, const std::string& t) { out.push_back({PatternFamily::QA, id, t}); };
  auto pr = [&](int id, const std::string& t) { out.push_back({PatternFamily::Prompt, id, t}); };

  if (kind == TaskKind::Topic) {
    const std::string n = to_string(noun);
    qa(1, "{x} Question: What is the topic of this " + n + "? Answer: {mask}.");
    qa(2, "{x} Question: What is the category of this " + n + "? Answer: {mask}.");
    qa(3, "{x} Question: What is the topic of this " + n + "? Answer: {mask}");
    qa(4, "{x} Question: What is the category of this " + n + "? Answer: {mask}");
    pr(1, "{x} Category: {mask}.");
    pr(2, "{x} Class: {mask}.");
    pr(3, "{x} Topic: {mask}.");
    pr(4, "{x} Theme: {mask}.");
    pr(5, "{x} Category: {mask}");
    pr(6, "{x} Class: {mask}");
    pr(7, "{x} Topic: {mask}");
    pr(8, "{x} Theme: {mask}");
    auto [head, head_caps] = headword(noun);
    pr(9, "{mask} " + head + ": {x}");
    pr(10, "{mask} " + head_caps + ": {x}");
  } else {
    qa(1, "{x} Question: What is the sentiment of this text? Answer: {mask}.");
    qa(2, "{x} Question: What is the writer's opinion in this text? Answer: {mask}.");
    qa(3, "{x} Question: What is the sentiment of this text? Answer: {mask}");
    qa(4, "{x} Question: What is the writer's opinion in this text? Answer: {mask}");
    pr(1, "{x} Opinion: {mask}.");
    pr(2, "{x} Feeling: {mask}.");
    pr(3, "{x} Sentiment: {mask}.");
    pr(4, "{x} Summary: {mask}.");
    pr(5, "{x} Opinion: {mask}");
    pr(6, "{x} Feeling: {mask}");
    pr(7, "{x} Sentiment: {mask}");
    pr(8, "{x} Summary: {mask}");
    pr(9, "{mask} Sentiment: {x}");
    pr(10, "{mask} SENTIMENT: {x}");
  }
  return out;
}

TaskKind task_kind_for(DatasetId id) {
  switch (id) {
    case DatasetId::Ng20x4:
    case DatasetId::AgNews:
    case DatasetId::Yahoo:
    case DatasetId::YahooAg:
    case DatasetId::DbPedia:
      return TaskKind::Topic;
    default:
      return TaskKind::Sentiment;
  }
}

TopicNoun topic_noun_for(DatasetId id) {
  switch (id) {
    case DatasetId::Yahoo: return TopicNoun::Question;
    case DatasetId::Ng20x4: return TopicNoun::Newsgroup;
    default: return TopicNoun::Article;
  }
}

std::vector<Pattern> pattern_catalog_for(DatasetId id) {
  return pattern_catalog(task_kind_for(id), topic_noun_for(id));
}

std::optional<Pattern> find_pattern(const std::vector<Pattern>& catalog, const std::string& key) {
  for (const auto& p : catalog)
    if (p.key() == key) return p;
  return std::nullopt;
}

std::string catalog_to_text(const std::vector<Pattern>& catalog) {
  std::string out;
  for (const auto& p : catalog)
    out += to_string(p.family) + '\t' + std::to_string(p.id) + '\t' + p.template_text + '\n';
  return out;
}

std::string PromptString::to_string(std::string_view mask_marker) const {
  std::string out;
  for (const auto& s : segments)
    out += s.kind == Kind::Mask ? std::string(mask_marker) : s.value;
  return out;
}

const std::string& PromptString::text() const {
  for (const auto& s : segments)
    if (s.kind == Kind::Text) return s.value;
  fail("prompt has no text segment");
}

bool PromptString::mask_before_text() const {
  for (const auto& s : segments) {
    if (s.kind == Kind::Mask) return true;
    if (s.kind == Kind::Text) return false;
  }
  fail("prompt has neither mask nor text");
}

PromptString render(const Pattern& pattern, const std::string& text) {
  const std::string& t = pattern.template_text;
  size_t xpos = t.find("{x}");
  size_t mpos = t.find("{mask}");
  if (xpos == std::string::npos || t.find("{x}", xpos + 1) != std::string::npos)
    fail("pattern '", t, "' must contain {x} exactly once");
  if (mpos == std::string::npos || t.find("{mask}", mpos + 1) != std::string::npos)
    fail("pattern '", t, "' must contain {mask} exactly once");

  PromptString out;
  auto literal = [&](size_t from, size_t to) {
    if (to > from)
      out.segments.push_back({PromptString::Kind::Literal, t.substr(from, to - from)});
  };
  size_t first = std::min(xpos, mpos), second = std::max(xpos, mpos);
  size_t first_len = first == xpos ? 3 : 6;
  size_t second_len = second == xpos ? 3 : 6;
  auto slot = [&](size_t pos) {
    if (pos == xpos) out.segments.push_back({PromptString::Kind::Text, text});
    else out.segments.push_back({PromptString::Kind::Mask, ""});
  };
  literal(0, first);
  slot(first);
  literal(first + first_len, second);
  slot(second);
  literal(second + second_len, t.size());
  return out;
}

std::vector<std::string> VerbalizerMap::labels() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

std::string VerbalizerMap::to_text() const {
  std::string out;
  for (size_t i = 0; i < entries.size(); ++i) {
    out += entries[i].label + '\t' + entries[i].word;
    if (i < token_ids.size()) out += '\t' + std::to_string(token_ids[i]);
    out += '\n';
  }
  return out;
}

VerbalizerMap verbalizers_for(DatasetId id) {
  auto make = [](std::vector<VerbalizerMap::Entry> entries) {
    VerbalizerMap m;
    m.entries = std::move(entries);
    return m;
  };
  switch (id) {
    case DatasetId::Ng20x4:
      return make({{"talk.religion.misc", "religion"},
                   {"rec.autos", "automobile"},
                   {"sci.med", "medicine"},
                   {"talk.politics.guns", "gun"}});
    case DatasetId::AgNews:
    case DatasetId::YahooAg:
      return make({{"World", "World"},
                   {"Sports", "Sports"},
                   {"Business", "Business"},
                   {"Sci/Tech", "Tech"}});
    case DatasetId::Yahoo:
      return make({{"Society & Culture", "Society"},
                   {"Science & Mathematics", "Science"},
                   {"Health", "Health"},
                   {"Education & Reference", "Education"},
                   {"Computers & Internet", "Computer"},
                   {"Sports", "Sports"},
                   {"Business & Finance", "Business"},
                   {"Entertainment & Music", "Entertainment"},
                   {"Family & Relationships", "Relationship"},
                   {"Politics & Government", "Politics"}});
    case DatasetId::DbPedia:
      return make({{"Company", "company"},
                   {"Educational Institution", "school"},
                   {"Artist", "artist"},
                   {"Athlete", "sports"},
                   {"Office Holder", "politics"},
                   {"Mean of Transportation", "transportation"},
                   {"Building", "building"},
                   {"Natural Place", "natural"},
                   {"Village", "village"},
                   {"Animal", "animal"},
                   {"Plant", "plant"},
                   {"Album", "album"},
                   {"Film", "film"},
                   {"Written Work", "book"}});
    case DatasetId::Yelp5:
    case DatasetId::Sst5:
      return make({{"Very Negative", "terrible"},
                   {"Negative", "bad"},
                   {"Neutral", "okay"},
                   {"Positive", "good"},
                   {"Very Positive", "great"}});
    case DatasetId::Yelp2:
    case DatasetId::Sst2:
    case DatasetId::Imdb:
    case DatasetId::Amz2:
      return make({{"Negative", "awful"}, {"Positive", "great"}});
  }
  fail("unknown dataset");
}

VerbalizerMap validate_single_token(const VerbalizerMap& vmap, const ByteLevelBpe& tokenizer) {
  if (vmap.entries.empty()) fail("verbalizer map is empty");
  std::set<std::string> words;
  for (const auto& e : vmap.entries)
    if (!words.insert(e.word).second)
      fail("duplicate verbalizer word '", e.word, "'");

  VerbalizerMap out = vmap;
  out.token_ids.clear();
  std::set<int> ids;
  for (const auto& e : vmap.entries) {
    auto id = tokenizer.single_token_id_in_mask_context(e.word);
    if (!id)
      fail("verbalizer '", e.word, "' for label '", e.label,
           "' is not a single token in mask context");
    if (!ids.insert(*id).second)
      fail("verbalizer '", e.word, "' shares token id ", *id, " with another label");
    out.token_ids.push_back(*id);
  }
  return out;
}

std::string build_icl_prompt(const LabelDescSet& set, const std::string& query_text,
                             uint64_t seed, const std::string& instruction) {
  if (set.examples.empty()) fail("label description set is empty");
  std::vector<size_t> order(set.examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::string out = instruction;
  if (!out.empty() && out.back() != '\n') out += '\n';
  for (size_t i : order) {
    const auto& ex = set.examples[i];
    out += ex.text + " → " + set.label_names[ex.label_index] + '\n';
  }
  out += query_text + " →";
  return out;
}

}  // namespace ldt
