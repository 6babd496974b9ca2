#include "ldt/safetensors.hpp"

#include <cstring>

#include <nlohmann/json.hpp>

#include "ldt/util.hpp"

namespace ldt {

namespace {

float f16_to_f32(uint16_t h) {
  uint32_t sign = (h & 0x8000u) << 16;
  uint32_t exp = (h >> 10) & 0x1F;
  uint32_t mant = h & 0x3FF;
  uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // subnormal: renormalize
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400) == 0);
      bits = sign | ((127 - 15 - e) << 23) | ((mant & 0x3FF) << 13);
    }
  } else if (exp == 31) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

float bf16_to_f32(uint16_t h) {
  uint32_t bits = static_cast<uint32_t>(h) << 16;
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

int64_t NamedTensor::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::map<std::string, NamedTensor> read_safetensors(const std::filesystem::path& path) {
  std::string blob = read_file(path);
  if (blob.size() < 8) fail(path.string(), ": file too short for a safetensors header");
  uint64_t header_len = 0;
  std::memcpy(&header_len, blob.data(), 8);  // little-endian, as is this platform
  if (8 + header_len > blob.size()) fail(path.string(), ": header length exceeds file size");

  nlohmann::json header = nlohmann::json::parse(blob.substr(8, header_len));
  const char* base = blob.data() + 8 + header_len;
  size_t data_size = blob.size() - 8 - header_len;

  std::map<std::string, NamedTensor> out;
  for (auto it = header.begin(); it != header.end(); ++it) {
    if (it.key() == "__metadata__") continue;
    const auto& meta = it.value();
    std::string dtype = meta.at("dtype").get<std::string>();
    NamedTensor t;
    for (const auto& d : meta.at("shape")) t.shape.push_back(d.get<int64_t>());
    uint64_t begin = meta.at("data_offsets")[0].get<uint64_t>();
    uint64_t end = meta.at("data_offsets")[1].get<uint64_t>();
    if (end > data_size || begin > end) fail(path.string(), ": bad offsets for ", it.key());
    size_t bytes = end - begin;
    int64_t n = t.numel();
    t.data.resize(static_cast<size_t>(n));
    if (dtype == "F32") {
      if (bytes != static_cast<size_t>(n) * 4) fail(path.string(), ": size mismatch for ", it.key());
      std::memcpy(t.data.data(), base + begin, bytes);
    } else if (dtype == "F64") {
      if (bytes != static_cast<size_t>(n) * 8) fail(path.string(), ": size mismatch for ", it.key());
      const double* src = reinterpret_cast<const double*>(base + begin);
      for (int64_t i = 0; i < n; ++i) t.data[i] = static_cast<float>(src[i]);
    } else if (dtype == "F16" || dtype == "BF16") {
      if (bytes != static_cast<size_t>(n) * 2) fail(path.string(), ": size mismatch for ", it.key());
      const uint16_t* src = reinterpret_cast<const uint16_t*>(base + begin);
      for (int64_t i = 0; i < n; ++i)
        t.data[i] = dtype == "F16" ? f16_to_f32(src[i]) : bf16_to_f32(src[i]);
    } else if (dtype == "I64" || dtype == "I32" || dtype == "I16" || dtype == "I8" ||
               dtype == "U8" || dtype == "BOOL") {
      continue;  // integer buffers (e.g. position_ids) are not weights
    } else {
      fail(path.string(), ": unsupported dtype ", dtype, " for ", it.key());
    }
    out.emplace(it.key(), std::move(t));
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, NamedTensor>>& tensors,
                       const std::map<std::string, std::string>& metadata) {
  nlohmann::json header = nlohmann::json::object();
  if (!metadata.empty()) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : metadata) m[k] = v;
    header["__metadata__"] = m;
  }
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (static_cast<int64_t>(t.data.size()) != t.numel())
      fail("tensor ", name, ": data size does not match shape");
    uint64_t bytes = t.data.size() * 4;
    header[name] = {{"dtype", "F32"},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string htext = header.dump();
  // Pad the header to an 8-byte boundary with spaces, as the reference
  // implementation does.
  while ((8 + htext.size()) % 8 != 0) htext += ' ';

  std::string blob;
  blob.resize(8);
  uint64_t hlen = htext.size();
  std::memcpy(blob.data(), &hlen, 8);
  blob += htext;
  for (const auto& [name, t] : tensors) {
    (void)name;
    size_t at = blob.size();
    blob.resize(at + t.data.size() * 4);
    std::memcpy(blob.data() + at, t.data.data(), t.data.size() * 4);
  }
  write_file(path, blob);
}

}  // namespace ldt
