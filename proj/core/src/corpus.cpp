#include "ldt/corpus.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "ldt/util.hpp"

namespace ldt {

namespace {

struct DatasetInfo {
  const char* name;
  DatasetId id;
  std::vector<std::string> labels;
  std::set<Split> splits;
};

const std::vector<DatasetInfo>& dataset_table() {
  static const std::vector<DatasetInfo> table = {
      {"20ng4", DatasetId::Ng20x4,
       {"talk.religion.misc", "rec.autos", "sci.med", "talk.politics.guns"},
       {Split::Train, Split::Dev, Split::Test}},
      {"agnews", DatasetId::AgNews,
       {"World", "Sports", "Business", "Sci/Tech"},
       {Split::Train, Split::Dev, Split::Test}},
      {"yahoo", DatasetId::Yahoo,
       {"Society & Culture", "Science & Mathematics", "Health", "Education & Reference",
        "Computers & Internet", "Sports", "Business & Finance", "Entertainment & Music",
        "Family & Relationships", "Politics & Government"},
       {Split::Train, Split::Test}},
      {"yahoo_ag", DatasetId::YahooAg,
       {"World", "Sports", "Business", "Sci/Tech"},
       {Split::Train, Split::Dev, Split::Test}},
      {"dbpedia", DatasetId::DbPedia,
       {"Company", "Educational Institution", "Artist", "Athlete", "Office Holder",
        "Mean of Transportation", "Building", "Natural Place", "Village", "Animal", "Plant",
        "Album", "Film", "Written Work"},
       {Split::Train, Split::Test}},
      {"yelp5", DatasetId::Yelp5,
       {"Very Negative", "Negative", "Neutral", "Positive", "Very Positive"},
       {Split::Train, Split::Dev, Split::Test}},
      {"yelp2", DatasetId::Yelp2,
       {"Negative", "Positive"},
       {Split::Train, Split::Dev, Split::Test}},
      {"sst5", DatasetId::Sst5,
       {"Very Negative", "Negative", "Neutral", "Positive", "Very Positive"},
       {Split::Train, Split::Dev, Split::Test}},
      {"sst2", DatasetId::Sst2,
       {"Negative", "Positive"},
       {Split::Train, Split::Dev, Split::Test}},
      {"amz2", DatasetId::Amz2,
       {"Negative", "Positive"},
       {Split::Train, Split::Test}},
      {"imdb", DatasetId::Imdb,
       {"Negative", "Positive"},
       {Split::Train, Split::Test}},
  };
  return table;
}

const DatasetInfo& info_for(DatasetId id) {
  for (const auto& info : dataset_table())
    if (info.id == id) return info;
  fail("unknown dataset id");
}

// RFC-4180-ish CSV row parser ('"' quoting, '""' escapes). Rows never span
// lines in the source corpora; embedded newlines arrive as \n escapes.
std::vector<std::string> parse_csv_row(const std::string& line, int row_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) fail("row ", row_no, ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

// Native corpus files carry "\n"-style escapes for embedded newlines but may
// also contain lone backslashes in running text, so unknown escapes pass
// through verbatim instead of failing like the strict cache-format decoder.
std::string soft_unescape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      char c = s[i + 1];
      if (c == 'n') { out += '\n'; ++i; continue; }
      if (c == 't') { out += '\t'; ++i; continue; }
      if (c == '\\') { out += '\\'; ++i; continue; }
      if (c == '"') { out += '"'; ++i; continue; }
    }
    out += s[i];
  }
  return out;
}

}  // namespace

std::string to_string(DatasetId id) { return info_for(id).name; }

DatasetId dataset_from_string(const std::string& name) {
  for (const auto& info : dataset_table())
    if (name == info.name) return info.id;
  fail("unknown dataset '", name, "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  fail("bad split");
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  fail("unknown split '", name, "'");
}

int DatasetSpec::label_index(const std::string& name) const {
  for (size_t i = 0; i < label_names.size(); ++i)
    if (label_names[i] == name) return static_cast<int>(i);
  return -1;
}

const DatasetSpec& dataset_spec(DatasetId id) {
  static std::map<DatasetId, DatasetSpec> cache;
  auto it = cache.find(id);
  if (it == cache.end()) {
    const auto& info = info_for(id);
    it = cache.emplace(id, DatasetSpec{info.id, info.labels, info.splits}).first;
  }
  return it->second;
}

const std::vector<DatasetId>& all_datasets() {
  static const std::vector<DatasetId> ids = [] {
    std::vector<DatasetId> v;
    for (const auto& info : dataset_table()) v.push_back(info.id);
    return v;
  }();
  return ids;
}

std::vector<long> LabeledCorpus::label_counts(int num_labels) const {
  std::vector<long> counts(num_labels, 0);
  for (const auto& r : records) {
    if (r.label_index < 0 || r.label_index >= num_labels)
      fail("record label index ", r.label_index, " out of range");
    ++counts[r.label_index];
  }
  return counts;
}

ColumnManifest ColumnManifest::from_keyed_text(const KeyedText& kt) {
  ColumnManifest m;
  std::string fmt = kt.require("format");
  if (fmt == "csv") m.format = Format::Csv;
  else if (fmt == "tsv") m.format = Format::Tsv;
  else fail("manifest format must be csv or tsv, got '", fmt, "'");
  m.label_field = std::stoi(kt.require("label_field"));
  for (const auto& v : split(kt.require("label_values"), '|')) {
    std::string s(trim(v));
    if (s.empty()) fail("empty label value in manifest");
    m.label_values.push_back(s);
  }
  for (const auto& v : split(kt.require("text_fields"), ' '))
    if (!trim(v).empty()) m.text_fields.push_back(std::stoi(std::string(trim(v))));
  if (auto j = kt.get("joiner")) m.joiner = (*j == "space") ? " " : *j;
  if (auto p = kt.get("preprocess")) {
    if (*p == "none") m.preprocess = Preprocess::None;
    else if (*p == "newsgroup_strip") m.preprocess = Preprocess::NewsgroupStrip;
    else fail("unknown preprocess '", *p, "'");
  }
  if (auto s = kt.get("skip_rows")) m.skip_rows = std::stoi(*s);
  if (m.text_fields.empty()) fail("manifest declares no text fields");
  return m;
}

ColumnManifest ColumnManifest::load(const std::filesystem::path& path) {
  return from_keyed_text(KeyedText::load(path));
}

KeyedText ColumnManifest::to_keyed_text() const {
  KeyedText kt;
  kt.set("schema", "ldt-dataset/1");
  kt.set("format", format == Format::Csv ? "csv" : "tsv");
  kt.set("label_field", std::to_string(label_field));
  kt.set("label_values", join(label_values, " | "));
  std::vector<std::string> tf;
  for (int f : text_fields) tf.push_back(std::to_string(f));
  kt.set("text_fields", join(tf, " "));
  kt.set("joiner", joiner == " " ? "space" : joiner);
  kt.set("preprocess", preprocess == Preprocess::None ? "none" : "newsgroup_strip");
  if (skip_rows) kt.set("skip_rows", std::to_string(skip_rows));
  return kt;
}

std::string strip_newsgroup_message(const std::string& raw) {
  std::vector<std::string> lines = split(raw, '\n');
  // Header: everything up to and including the first blank line.
  size_t body_start = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) {
      body_start = i + 1;
      break;
    }
  }
  // Footer: from the last lone "--" line onward.
  size_t body_end = lines.size();
  for (size_t i = lines.size(); i-- > body_start;) {
    if (trim(lines[i]) == "--") {
      body_end = i;
      break;
    }
  }
  std::vector<std::string> kept;
  for (size_t i = body_start; i < body_end; ++i) {
    std::string_view t = lines[i];
    size_t first = t.find_first_not_of(" \t");
    if (first != std::string_view::npos && t[first] == '>') continue;  // quoted line
    kept.push_back(lines[i]);
  }
  // Trim blank lines at both ends of the kept body.
  size_t b = 0, e = kept.size();
  while (b < e && trim(kept[b]).empty()) ++b;
  while (e > b && trim(kept[e - 1]).empty()) --e;
  std::string out;
  for (size_t i = b; i < e; ++i) {
    if (i != b) out += '\n';
    out += kept[i];
  }
  return out;
}

LabeledCorpus load_corpus(const DatasetSpec& spec, Split split,
                          const std::filesystem::path& source_path,
                          const ColumnManifest& manifest) {
  if (!std::filesystem::exists(source_path))
    fail("corpus file not found: ", source_path.string());
  if (manifest.label_values.size() != spec.label_names.size())
    fail("manifest declares ", manifest.label_values.size(), " labels but dataset ",
         to_string(spec.dataset_id), " has ", spec.label_names.size());

  std::string content = read_file(source_path);
  LabeledCorpus corpus{spec.dataset_id, split, {}};
  int row_no = 0;
  for (const auto& raw_line : ldt::split(content, '\n')) {
    ++row_no;
    if (row_no <= manifest.skip_rows) continue;
    if (raw_line.empty() || (raw_line.size() == 1 && raw_line[0] == '\r')) continue;
    std::string line = raw_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> fields = manifest.format == ColumnManifest::Format::Csv
                                          ? parse_csv_row(line, row_no)
                                          : ldt::split(line, '\t');
    int needed = std::max(manifest.label_field,
                          *std::max_element(manifest.text_fields.begin(),
                                            manifest.text_fields.end()));
    if (static_cast<int>(fields.size()) <= needed)
      fail("row ", row_no, ": expected at least ", needed + 1, " fields, got ", fields.size());

    const std::string& label_str = fields[manifest.label_field];
    int label = -1;
    for (size_t i = 0; i < manifest.label_values.size(); ++i)
      if (label_str == manifest.label_values[i]) {
        label = static_cast<int>(i);
        break;
      }
    if (label < 0) fail("row ", row_no, ": unknown label '", label_str, "'");

    std::vector<std::string> parts;
    for (int f : manifest.text_fields) {
      std::string text = soft_unescape(fields[f]);
      if (!trim(text).empty()) parts.push_back(std::move(text));
    }
    std::string text = join(parts, manifest.joiner);
    if (manifest.preprocess == ColumnManifest::Preprocess::NewsgroupStrip)
      text = strip_newsgroup_message(text);
    if (trim(text).empty())
      fail("row ", row_no, ": text empty after preprocessing");
    corpus.records.push_back({std::move(text), label});
  }
  return corpus;
}

LabeledCorpus remap_yahoo_to_ag(const LabeledCorpus& corpus) {
  if (corpus.dataset_id != DatasetId::Yahoo)
    fail("remap_yahoo_to_ag expects the yahoo dataset, got ", to_string(corpus.dataset_id));
  const auto& yahoo = dataset_spec(DatasetId::Yahoo);
  const auto& ag = dataset_spec(DatasetId::YahooAg);

  // Yahoo label -> AGNews label; categories not listed here are dropped.
  static const std::vector<std::pair<const char*, const char*>> mapping = {
      {"Politics & Government", "World"},
      {"Society & Culture", "World"},
      {"Sports", "Sports"},
      {"Business & Finance", "Business"},
      {"Science & Mathematics", "Sci/Tech"},
      {"Computers & Internet", "Sci/Tech"},
  };
  std::vector<int> target(yahoo.label_names.size(), -1);
  for (const auto& [from, to] : mapping)
    target[yahoo.label_index(from)] = ag.label_index(to);

  LabeledCorpus out{DatasetId::YahooAg, corpus.split, {}};
  for (const auto& r : corpus.records) {
    if (r.label_index < 0 || r.label_index >= static_cast<int>(target.size()))
      fail("yahoo record has label index ", r.label_index, " out of range");
    int t = target[r.label_index];
    if (t >= 0) out.records.push_back({r.text, t});
  }
  return out;
}

namespace {

// Largest-remainder apportionment of n over counts; remainder ties break to
// the lower label index.
std::vector<size_t> largest_remainder_targets(const std::vector<long>& counts, size_t n) {
  size_t total = 0;
  for (long c : counts) total += static_cast<size_t>(c);
  std::vector<size_t> targets(counts.size(), 0);
  std::vector<std::pair<double, size_t>> remainders;  // (-remainder, index) for sorting
  size_t assigned = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    double exact = static_cast<double>(counts[i]) * static_cast<double>(n) /
                   static_cast<double>(total);
    targets[i] = static_cast<size_t>(exact);
    assigned += targets[i];
    remainders.push_back({-(exact - static_cast<double>(targets[i])), i});
  }
  std::stable_sort(remainders.begin(), remainders.end());
  for (size_t k = 0; assigned < n; ++k) {
    size_t i = remainders[k % remainders.size()].second;
    if (targets[i] < static_cast<size_t>(counts[i])) {
      ++targets[i];
      ++assigned;
    }
  }
  return targets;
}

}  // namespace

LabeledCorpus stratified_subsample(const LabeledCorpus& corpus, size_t n, uint64_t seed) {
  if (n > corpus.records.size())
    fail("subsample size ", n, " exceeds corpus size ", corpus.records.size());
  const auto& spec = dataset_spec(corpus.dataset_id);
  std::vector<long> counts = corpus.label_counts(spec.num_labels());
  std::vector<size_t> targets = largest_remainder_targets(counts, n);

  // Per-label index pools, shuffled deterministically; selection keeps the
  // original record order.
  std::vector<std::vector<size_t>> pools(spec.num_labels());
  for (size_t i = 0; i < corpus.records.size(); ++i)
    pools[corpus.records[i].label_index].push_back(i);
  auto rng = make_rng(seed);
  std::vector<bool> selected(corpus.records.size(), false);
  for (int l = 0; l < spec.num_labels(); ++l) {
    std::shuffle(pools[l].begin(), pools[l].end(), rng);
    for (size_t k = 0; k < targets[l]; ++k) selected[pools[l][k]] = true;
  }
  LabeledCorpus out{corpus.dataset_id, corpus.split, {}};
  for (size_t i = 0; i < corpus.records.size(); ++i)
    if (selected[i]) out.records.push_back(corpus.records[i]);
  return out;
}

FewshotSplit fewshot_split(const LabeledCorpus& corpus, int k_per_label, size_t dev_size,
                           uint64_t seed) {
  const auto& spec = dataset_spec(corpus.dataset_id);
  std::vector<std::vector<size_t>> pools(spec.num_labels());
  for (size_t i = 0; i < corpus.records.size(); ++i)
    pools[corpus.records[i].label_index].push_back(i);

  auto rng = make_rng(seed);
  std::vector<bool> in_train(corpus.records.size(), false);
  std::vector<long> rest_counts(spec.num_labels(), 0);
  for (int l = 0; l < spec.num_labels(); ++l) {
    if (pools[l].size() < static_cast<size_t>(k_per_label))
      fail("label '", spec.label_names[l], "' has ", pools[l].size(),
           " records, fewer than k=", k_per_label);
    std::shuffle(pools[l].begin(), pools[l].end(), rng);
    for (int k = 0; k < k_per_label; ++k) in_train[pools[l][k]] = true;
    rest_counts[l] = static_cast<long>(pools[l].size()) - k_per_label;
  }
  size_t rest_total = 0;
  for (long c : rest_counts) rest_total += static_cast<size_t>(c);
  if (dev_size > rest_total)
    fail("dev size ", dev_size, " exceeds the ", rest_total, " records left after train");

  std::vector<size_t> dev_targets = largest_remainder_targets(rest_counts, dev_size);
  std::vector<bool> in_dev(corpus.records.size(), false);
  for (int l = 0; l < spec.num_labels(); ++l)
    for (size_t k = k_per_label; k < pools[l].size() &&
                                 k < static_cast<size_t>(k_per_label) + dev_targets[l];
         ++k)
      in_dev[pools[l][k]] = true;

  FewshotSplit out{{corpus.dataset_id, Split::Train, {}}, {corpus.dataset_id, Split::Dev, {}}};
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    if (in_train[i]) out.train.records.push_back(corpus.records[i]);
    else if (in_dev[i]) out.dev.records.push_back(corpus.records[i]);
  }
  return out;
}

void save_records(const LabeledCorpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : corpus.records)
    out += std::to_string(r.label_index) + '\t' + escape_record(r.text) + '\n';
  write_file(path, out);
}

LabeledCorpus load_records(DatasetId id, Split split, const std::filesystem::path& path) {
  std::string content = read_file(path);
  LabeledCorpus corpus{id, split, {}};
  int row_no = 0;
  for (const auto& line : ldt::split(content, '\n')) {
    ++row_no;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) fail("row ", row_no, ": expected <label>\\t<text>");
    int label = std::stoi(line.substr(0, tab));
    corpus.records.push_back({unescape_record(line.substr(tab + 1)), label});
  }
  return corpus;
}

}  // namespace ldt
