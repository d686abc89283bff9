#pragma once

// Named-tensor container.
//
//   offset 0   8 bytes   magic "CAPTNT01"
//   offset 8   8 bytes   header length N, little-endian uint64
//   offset 16  N bytes   UTF-8 JSON header
//   offset 16+N          data blob
//
// Header: {"tensors": {name: {"dtype": "F32"|"F64", "shape": [...],
// "offsets": [begin, end]}}, "metadata": {...}}. Offsets are byte positions
// within the blob; values are little-endian IEEE-754.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "captime/diffnum.hpp"
#include "json.hpp"

namespace captime {

struct TensorFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DType { kF32, kF64 };

struct TensorFile {
  std::map<std::string, Tensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file, DType dtype = DType::kF64);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace captime
