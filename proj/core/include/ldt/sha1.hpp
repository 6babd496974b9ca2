#pragma once

#include <string>
#include <string_view>

namespace ldt {

std::string sha1_hex(std::string_view data);

// Hash of file-like content the way git hashes blobs: sha1("blob <len>\0" + data).
std::string git_blob_hash(std::string_view data);

}  // namespace ldt
