#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ldt/corpus.hpp"

namespace ldt {

enum class DescSource { Term, Definition, Wiki, Template };

std::string to_string(DescSource s);
DescSource desc_source_from_string(const std::string& tag);

struct LabelDescExample {
  int label_index = -1;
  std::string text;
  DescSource source = DescSource::Term;

  bool operator==(const LabelDescExample&) const = default;
};

struct LabelDescSet {
  std::string task_id;
  std::vector<std::string> label_names;
  std::vector<LabelDescExample> examples;

  size_t size() const { return examples.size(); }
  std::vector<long> per_label_counts() const;
  bool operator==(const LabelDescSet&) const = default;
};

// One topic label's descriptors: the label term plus related terms, dictionary
// definition(s), and leading Wikipedia sentence(s). Single-keyword labels take
// (4 terms, 1 definition, 1 wiki); two-keyword labels take (2, 2, 2).
struct DescriptorSpec {
  std::string label;
  std::vector<std::string> terms;
  std::vector<std::string> definitions;
  std::vector<std::string> wiki_leads;
};

// Expands topic descriptors into six examples per label.
LabelDescSet expand_topic_spec(const std::string& task_id,
                               const std::vector<DescriptorSpec>& specs);

struct SentimentTerms {
  std::string label;
  std::vector<std::string> terms;
};

// Expands sentiment terms: each bare term plus each term rendered through each
// template ("$t$" slot; "A(n)" resolves to "A"/"An" on the term's first letter).
LabelDescSet expand_sentiment_terms(const std::string& task_id,
                                    const std::vector<SentimentTerms>& label_terms,
                                    const std::vector<std::string>& templates);

// Drops Neutral and merges the polar label pairs, keeping term order:
// Negative = Very Negative + Negative, Positive = Positive + Very Positive.
std::vector<SentimentTerms> collapse_to_binary(const std::vector<SentimentTerms>& five_way);

std::string resolve_article_template(const std::string& templ, const std::string& term);

struct ValidationReport {
  struct Check {
    std::string name;
    bool ok;
    std::string detail;
  };
  std::vector<Check> checks;
  bool passed() const;
  std::string to_string() const;
};

ValidationReport validate_set(const LabelDescSet& set, const DatasetSpec& spec);

// File format: header "task\t<task_id>\t<label>..." then one example per line
// as "<label_name>\t<source_tag>\t<escaped text>".
void save_set(const LabelDescSet& set, const std::filesystem::path& path);
LabelDescSet load_set(const std::filesystem::path& path);

// Task files describe how to build a set (kind: topic | sentiment-5way |
// sentiment-binary); see data/tasks/ for the shipped transcriptions.
struct TaskFile {
  std::string task_id;
  std::string kind;
  std::vector<DescriptorSpec> topic_specs;          // kind == topic
  std::vector<SentimentTerms> sentiment_terms;      // kind == sentiment-*
  std::vector<std::string> templates;               // kind == sentiment-*
};

TaskFile load_task_file(const std::filesystem::path& path);
LabelDescSet build_from_task(const TaskFile& task);

}  // namespace ldt
