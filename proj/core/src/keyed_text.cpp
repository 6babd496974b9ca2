#include "ldt/keyed_text.hpp"

#include <algorithm>

#include "ldt/util.hpp"

namespace ldt {

KeyedText KeyedText::parse(const std::string& text) {
  KeyedText kt;
  std::string section;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("line ", line_no, ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    size_t colon = line.find(':');
    if (colon == std::string_view::npos)
      fail("line ", line_no, ": expected 'key: value', got '", std::string(line), "'");
    std::string key(trim(line.substr(0, colon)));
    std::string value(trim(line.substr(colon + 1)));
    if (key.empty()) fail("line ", line_no, ": empty key");
    kt.entries_.push_back({section, key, value});
  }
  return kt;
}

KeyedText KeyedText::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const Error& e) {
    fail(path.string(), ": ", e.what());
  }
}

std::string KeyedText::serialize() const {
  std::string out;
  std::string section;
  bool first = true;
  for (const auto& e : entries_) {
    if (e.section != section || (first && !e.section.empty())) {
      if (!first) out += '\n';
      out += '[' + e.section + "]\n";
      section = e.section;
    }
    out += e.key + ": " + e.value + '\n';
    first = false;
  }
  return out;
}

void KeyedText::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

void KeyedText::add(const std::string& section, const std::string& key, const std::string& value) {
  entries_.push_back({section, key, value});
}

std::optional<std::string> KeyedText::get(const std::string& section, const std::string& key) const {
  for (const auto& e : entries_)
    if (e.section == section && e.key == key) return e.value;
  return std::nullopt;
}

std::string KeyedText::require(const std::string& section, const std::string& key) const {
  auto v = get(section, key);
  if (!v) {
    if (section.empty()) fail("missing required key '", key, "'");
    fail("missing required key '", key, "' in section [", section, "]");
  }
  return *v;
}

std::vector<std::string> KeyedText::get_all(const std::string& section, const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.section == section && e.key == key) out.push_back(e.value);
  return out;
}

std::vector<std::string> KeyedText::sections() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.section.empty()) continue;
    if (std::find(out.begin(), out.end(), e.section) == out.end()) out.push_back(e.section);
  }
  return out;
}

}  // namespace ldt
