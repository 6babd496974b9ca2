#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ldt/keyed_text.hpp"

namespace ldt {

// Every command writes one of these next to its outputs; anything a run
// produced is reachable from here, with content hashes for reproduction.
class RunManifest {
 public:
  RunManifest(std::string command);

  void set(const std::string& key, const std::string& value);
  void add_input_hash(const std::string& name, const std::string& content);
  void add_output(const std::filesystem::path& base, const std::filesystem::path& file);

  void save(const std::filesystem::path& path) const;
  const KeyedText& keyed_text() const { return kt_; }

 private:
  KeyedText kt_;
};

std::string utc_timestamp();

}  // namespace ldt
