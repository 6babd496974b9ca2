#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ldt/keyed_text.hpp"

namespace ldt {

enum class DatasetId {
  Ng20x4,   // the four selected 20-Newsgroups labels
  AgNews,
  Yahoo,
  YahooAg,  // Yahoo remapped onto the AGNews label set
  DbPedia,
  Yelp5,
  Yelp2,
  Sst5,
  Sst2,
  Amz2,
  Imdb,
};

enum class Split { Train, Dev, Test };

std::string to_string(DatasetId id);
DatasetId dataset_from_string(const std::string& name);
std::string to_string(Split s);
Split split_from_string(const std::string& name);

struct DatasetSpec {
  DatasetId dataset_id;
  std::vector<std::string> label_names;  // label index = position
  std::set<Split> splits_available;

  int num_labels() const { return static_cast<int>(label_names.size()); }
  int label_index(const std::string& name) const;  // -1 if unknown
};

// Built-in specs with the published label inventories.
const DatasetSpec& dataset_spec(DatasetId id);
const std::vector<DatasetId>& all_datasets();

struct Record {
  std::string text;
  int label_index = -1;
};

struct LabeledCorpus {
  DatasetId dataset_id;
  Split split = Split::Test;
  std::vector<Record> records;

  size_t size() const { return records.size(); }
  std::vector<long> label_counts(int num_labels) const;
};

// Declares how a delimited source file maps onto (label, text) records.
struct ColumnManifest {
  enum class Format { Csv, Tsv };
  enum class Preprocess { None, NewsgroupStrip };

  Format format = Format::Csv;
  int label_field = 0;
  // Label values in label-index order; a row's label field must match one of
  // these (either a name like "Sports" or a numeral like "3").
  std::vector<std::string> label_values;
  std::vector<int> text_fields;
  std::string joiner = " ";
  Preprocess preprocess = Preprocess::None;
  int skip_rows = 0;  // leading header rows to ignore

  static ColumnManifest from_keyed_text(const KeyedText& kt);
  static ColumnManifest load(const std::filesystem::path& path);
  KeyedText to_keyed_text() const;
};

// Reads and fully preprocesses one split from its native delimited file.
LabeledCorpus load_corpus(const DatasetSpec& spec, Split split,
                          const std::filesystem::path& source_path,
                          const ColumnManifest& manifest);

// Header/quote/footer stripping for newsgroup messages. Drops leading lines up
// to the first blank line, any line whose first non-space character is '>',
// and everything from the last lone "--" line onward.
std::string strip_newsgroup_message(const std::string& raw);

// Relabels Yahoo records onto the four AGNews topics; unmapped categories are
// dropped, texts are preserved verbatim.
LabeledCorpus remap_yahoo_to_ag(const LabeledCorpus& corpus);

// Deterministic subsample of size n whose per-label counts follow the source
// proportions by largest-remainder rounding (ties to the lower label index).
LabeledCorpus stratified_subsample(const LabeledCorpus& corpus, size_t n, uint64_t seed);

struct FewshotSplit {
  LabeledCorpus train;
  LabeledCorpus dev;
};

// k_per_label records per label into train, then a stratified dev of dev_size
// from the remainder; train and dev are disjoint.
FewshotSplit fewshot_split(const LabeledCorpus& corpus, int k_per_label, size_t dev_size,
                           uint64_t seed);

// Cache format: one record per line, "<label_index>\t<escaped text>".
void save_records(const LabeledCorpus& corpus, const std::filesystem::path& path);
LabeledCorpus load_records(DatasetId id, Split split, const std::filesystem::path& path);

}  // namespace ldt
