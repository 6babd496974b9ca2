#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ldt {

// Ordered "key: value" text with optional [section] blocks. Used for dataset
// manifests, task files, run manifests and config profiles.
class KeyedText {
 public:
  struct Entry {
    std::string section;  // empty = top level
    std::string key;
    std::string value;
  };

  KeyedText() = default;

  static KeyedText parse(const std::string& text);
  static KeyedText load(const std::filesystem::path& path);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  void set(const std::string& key, const std::string& value) { add("", key, value); }
  void add(const std::string& section, const std::string& key, const std::string& value);

  std::optional<std::string> get(const std::string& key) const { return get("", key); }
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  std::string require(const std::string& section, const std::string& key) const;
  std::string require(const std::string& key) const { return require("", key); }

  std::vector<std::string> get_all(const std::string& section, const std::string& key) const;
  std::vector<std::string> sections() const;  // in first-seen order, without ""
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

}  // namespace ldt
