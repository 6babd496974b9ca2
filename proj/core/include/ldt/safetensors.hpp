#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ldt {

// Minimal safetensors reader/writer. Tensors are exposed as float32 row-major
// buffers; F16/BF16/F64 payloads are converted on read, writes are F32.
struct NamedTensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  int64_t numel() const;
};

std::map<std::string, NamedTensor> read_safetensors(const std::filesystem::path& path);
void write_safetensors(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, NamedTensor>>& tensors,
                       const std::map<std::string, std::string>& metadata = {});

}  // namespace ldt
