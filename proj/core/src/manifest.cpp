#include "ldt/manifest.hpp"

#include <ctime>

#include "ldt/sha1.hpp"
#include "ldt/util.hpp"

namespace ldt {

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

RunManifest::RunManifest(std::string command) {
  kt_.set("schema", "ldt-run/1");
  kt_.set("command", std::move(command));
  kt_.set("created_utc", utc_timestamp());
}

void RunManifest::set(const std::string& key, const std::string& value) {
  kt_.set(key, value);
}

void RunManifest::add_input_hash(const std::string& name, const std::string& content) {
  kt_.add("inputs", name, git_blob_hash(content));
}

void RunManifest::add_output(const std::filesystem::path& base,
                             const std::filesystem::path& file) {
  std::string rel = std::filesystem::relative(file, base).string();
  kt_.add("outputs", rel, git_blob_hash(read_file(file)));
}

void RunManifest::save(const std::filesystem::path& path) const { kt_.save(path); }

}  // namespace ldt
