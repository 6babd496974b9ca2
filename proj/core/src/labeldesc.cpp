#include "ldt/labeldesc.hpp"

#include <algorithm>
#include <set>

#include "ldt/keyed_text.hpp"
#include "ldt/util.hpp"

namespace ldt {

std::string to_string(DescSource s) {
  switch (s) {
    case DescSource::Term: return "term";
    case DescSource::Definition: return "definition";
    case DescSource::Wiki: return "wiki";
    case DescSource::Template: return "template";
  }
  fail("bad source");
}

DescSource desc_source_from_string(const std::string& tag) {
  if (tag == "term") return DescSource::Term;
  if (tag == "definition") return DescSource::Definition;
  if (tag == "wiki") return DescSource::Wiki;
  if (tag == "template") return DescSource::Template;
  fail("unknown source tag '", tag, "'");
}

std::vector<long> LabelDescSet::per_label_counts() const {
  std::vector<long> counts(label_names.size(), 0);
  for (const auto& ex : examples) {
    if (ex.label_index < 0 || ex.label_index >= static_cast<int>(label_names.size()))
      fail("example label index ", ex.label_index, " out of range");
    ++counts[ex.label_index];
  }
  return counts;
}

namespace {

void check_descriptor(const DescriptorSpec& d) {
  bool single = d.terms.size() == 4 && d.definitions.size() == 1 && d.wiki_leads.size() == 1;
  bool dual = d.terms.size() == 2 && d.definitions.size() == 2 && d.wiki_leads.size() == 2;
  if (!single && !dual)
    fail("label '", d.label, "': descriptor must have 4 terms + 1 definition + 1 wiki ",
         "(single keyword) or 2 + 2 + 2 (two keywords); got ", d.terms.size(), "/",
         d.definitions.size(), "/", d.wiki_leads.size());
  for (const auto& t : d.terms)
    if (trim(t).empty()) fail("label '", d.label, "': empty term");
  for (const auto& t : d.definitions)
    if (trim(t).empty()) fail("label '", d.label, "': empty definition");
  for (const auto& t : d.wiki_leads)
    if (trim(t).empty()) fail("label '", d.label, "': empty wiki lead");
}

}  // namespace

LabelDescSet expand_topic_spec(const std::string& task_id,
                               const std::vector<DescriptorSpec>& specs) {
  LabelDescSet set;
  set.task_id = task_id;
  for (const auto& d : specs) set.label_names.push_back(d.label);
  for (size_t i = 0; i < specs.size(); ++i) {
    const auto& d = specs[i];
    check_descriptor(d);
    int li = static_cast<int>(i);
    for (const auto& t : d.terms) set.examples.push_back({li, t, DescSource::Term});
    for (const auto& t : d.definitions) set.examples.push_back({li, t, DescSource::Definition});
    for (const auto& t : d.wiki_leads) set.examples.push_back({li, t, DescSource::Wiki});
  }
  return set;
}

std::string resolve_article_template(const std::string& templ, const std::string& term) {
  std::string text = templ;
  size_t slot = text.find("$t$");
  if (slot == std::string::npos) fail("template '", templ, "' has no $t$ slot");
  if (text.find("$t$", slot + 3) != std::string::npos)
    fail("template '", templ, "' has more than one $t$ slot");
  text.replace(slot, 3, term);
  // "A(n)" becomes A or An depending on the first letter of the next word.
  size_t art = text.find("A(n)");
  while (art != std::string::npos) {
    size_t next = art + 4;
    while (next < text.size() && text[next] == ' ') ++next;
    char first = next < text.size() ? static_cast<char>(std::tolower(text[next])) : '\0';
    bool vowel = first == 'a' || first == 'e' || first == 'i' || first == 'o' || first == 'u';
    text.replace(art, 4, vowel ? "An" : "A");
    art = text.find("A(n)", art + 1);
  }
  return text;
}

LabelDescSet expand_sentiment_terms(const std::string& task_id,
                                    const std::vector<SentimentTerms>& label_terms,
                                    const std::vector<std::string>& templates) {
  for (const auto& t : templates)
    if (t.find("$t$") == std::string::npos)
      fail("template '", t, "' has no $t$ slot");
  // 5 terms per label, or 10 after the binary collapse.
  size_t expected = label_terms.empty() ? 5 : label_terms.front().terms.size();
  if (expected != 5 && expected != 10)
    fail("sentiment labels need 5 terms each (10 for binary), got ", expected);
  LabelDescSet set;
  set.task_id = task_id;
  for (const auto& lt : label_terms) set.label_names.push_back(lt.label);
  for (size_t i = 0; i < label_terms.size(); ++i) {
    const auto& lt = label_terms[i];
    if (lt.terms.size() != expected)
      fail("label '", lt.label, "': expected ", expected, " terms, got ", lt.terms.size());
    int li = static_cast<int>(i);
    for (const auto& term : lt.terms) set.examples.push_back({li, term, DescSource::Term});
    for (const auto& term : lt.terms)
      for (const auto& templ : templates)
        set.examples.push_back({li, resolve_article_template(templ, term), DescSource::Template});
  }
  return set;
}

std::vector<SentimentTerms> collapse_to_binary(const std::vector<SentimentTerms>& five_way) {
  auto find = [&](const std::string& label) -> const SentimentTerms& {
    for (const auto& lt : five_way)
      if (lt.label == label) return lt;
    fail("five-way sentiment terms missing label '", label, "'");
  };
  const auto& vneg = find("Very Negative");
  const auto& neg = find("Negative");
  const auto& neu = find("Neutral");
  const auto& pos = find("Positive");
  const auto& vpos = find("Very Positive");
  (void)neu;
  if (five_way.size() != 5) fail("expected exactly 5 sentiment labels, got ", five_way.size());

  SentimentTerms binary_neg{"Negative", {}};
  binary_neg.terms = vneg.terms;
  binary_neg.terms.insert(binary_neg.terms.end(), neg.terms.begin(), neg.terms.end());
  SentimentTerms binary_pos{"Positive", {}};
  binary_pos.terms = pos.terms;
  binary_pos.terms.insert(binary_pos.terms.end(), vpos.terms.begin(), vpos.terms.end());
  return {binary_neg, binary_pos};
}

bool ValidationReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.ok; });
}

std::string ValidationReport::to_string() const {
  std::string out;
  for (const auto& c : checks)
    out += std::string(c.ok ? "ok   " : "FAIL ") + c.name +
           (c.detail.empty() ? "" : ": " + c.detail) + '\n';
  return out;
}

ValidationReport validate_set(const LabelDescSet& set, const DatasetSpec& spec) {
  ValidationReport report;
  auto add = [&](const std::string& name, bool ok, const std::string& detail) {
    report.checks.push_back({name, ok, detail});
  };

  std::vector<long> counts(set.label_names.size(), 0);
  bool in_range = true;
  for (const auto& ex : set.examples) {
    if (ex.label_index < 0 || ex.label_index >= static_cast<int>(set.label_names.size())) {
      in_range = false;
      break;
    }
    ++counts[ex.label_index];
  }
  add("label indices in range", in_range, "");

  bool balanced = in_range && !counts.empty();
  std::string balance_detail;
  if (balanced) {
    for (size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] != counts[0]) balanced = false;
      balance_detail += (i ? " " : "") + std::to_string(counts[i]);
    }
  }
  add("balanced", balanced, balance_detail);

  bool coverage = set.label_names == spec.label_names;
  add("label coverage matches dataset", coverage,
      coverage ? "" : msg("set has ", set.label_names.size(), " labels, dataset ",
                          to_string(spec.dataset_id), " has ", spec.label_names.size()));

  std::set<std::string> seen;
  std::string dup;
  for (const auto& ex : set.examples)
    if (!seen.insert(ex.text).second && dup.empty()) dup = ex.text;
  add("no duplicate texts", dup.empty(), dup);

  bool nonempty = std::none_of(set.examples.begin(), set.examples.end(),
                               [](const LabelDescExample& e) { return trim(e.text).empty(); });
  add("no empty texts", nonempty, "");
  return report;
}

void save_set(const LabelDescSet& set, const std::filesystem::path& path) {
  std::string out = "task\t" + set.task_id;
  for (const auto& l : set.label_names) out += '\t' + l;
  out += '\n';
  for (const auto& ex : set.examples) {
    if (ex.label_index < 0 || ex.label_index >= static_cast<int>(set.label_names.size()))
      fail("cannot save: label index out of range");
    out += set.label_names[ex.label_index] + '\t' + to_string(ex.source) + '\t' +
           escape_record(ex.text) + '\n';
  }
  write_file(path, out);
}

LabelDescSet load_set(const std::filesystem::path& path) {
  std::string content = read_file(path);
  std::vector<std::string> lines = split(content, '\n');
  if (lines.empty() || !starts_with(lines[0], "task\t"))
    fail(path.string(), ": line 1: expected header starting with 'task'");
  std::vector<std::string> head = split(lines[0], '\t');
  if (head.size() < 3) fail(path.string(), ": line 1: header needs a task id and labels");
  LabelDescSet set;
  set.task_id = head[1];
  set.label_names.assign(head.begin() + 2, head.end());
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> cols = split(lines[i], '\t');
    if (cols.size() != 3)
      fail(path.string(), ": line ", i + 1, ": expected 3 tab-separated columns, got ",
           cols.size());
    int li = -1;
    for (size_t l = 0; l < set.label_names.size(); ++l)
      if (set.label_names[l] == cols[0]) li = static_cast<int>(l);
    if (li < 0) fail(path.string(), ": line ", i + 1, ": unknown label '", cols[0], "'");
    DescSource src;
    try {
      src = desc_source_from_string(cols[1]);
    } catch (const Error& e) {
      fail(path.string(), ": line ", i + 1, ": ", e.what());
    }
    set.examples.push_back({li, unescape_record(cols[2]), src});
  }
  return set;
}

TaskFile load_task_file(const std::filesystem::path& path) {
  KeyedText kt = KeyedText::load(path);
  TaskFile task;
  task.task_id = kt.require("task");
  task.kind = kt.require("kind");
  auto list = [](const std::string& joined) {
    std::vector<std::string> out;
    for (const auto& part : split(joined, '|')) {
      std::string s(trim(part));
      if (!s.empty()) out.push_back(s);
    }
    return out;
  };
  if (task.kind == "topic") {
    for (const auto& section : kt.sections()) {
      if (!starts_with(section, "label ")) continue;
      DescriptorSpec d;
      d.label = section.substr(6);
      d.terms = list(kt.require(section, "terms"));
      d.definitions = kt.get_all(section, "definition");
      d.wiki_leads = kt.get_all(section, "wiki");
      task.topic_specs.push_back(std::move(d));
    }
  } else if (task.kind == "sentiment-5way" || task.kind == "sentiment-binary") {
    task.templates = list(kt.require("templates"));
    for (const auto& section : kt.sections()) {
      if (!starts_with(section, "label ")) continue;
      task.sentiment_terms.push_back({section.substr(6), list(kt.require(section, "terms"))});
    }
  } else {
    fail(path.string(), ": unknown task kind '", task.kind, "'");
  }
  return task;
}

LabelDescSet build_from_task(const TaskFile& task) {
  if (task.kind == "topic") return expand_topic_spec(task.task_id, task.topic_specs);
  if (task.kind == "sentiment-5way")
    return expand_sentiment_terms(task.task_id, task.sentiment_terms, task.templates);
  if (task.kind == "sentiment-binary")
    return expand_sentiment_terms(task.task_id, collapse_to_binary(task.sentiment_terms),
                                  task.templates);
  fail("unknown task kind '", task.kind, "'");
}

}  // namespace ldt
