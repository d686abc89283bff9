#include "captime/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace captime {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'P', 'T', 'N', 'T', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file, DType dtype) {
  const std::size_t width = dtype == DType::kF64 ? 8 : 4;
  nlohmann::json header;
  header["tensors"] = nlohmann::json::object();
  header["metadata"] = file.metadata;
  std::string blob;
  for (const auto& [name, t] : file.tensors) {
    const std::size_t begin = blob.size();
    for (double v : t.data()) {
      if (dtype == DType::kF64) {
        put_u64(blob, std::bit_cast<std::uint64_t>(v));
      } else {
        put_u32(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
    header["tensors"][name] = {{"dtype", dtype == DType::kF64 ? "F64" : "F32"},
                               {"shape", t.shape()},
                               {"offsets", {begin, begin + t.size() * width}}};
  }
  const std::string text = header.dump();
  std::string prefix(kMagic, sizeof kMagic);
  put_u64(prefix, text.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorFileError("cannot open " + path.string() + " for writing");
  out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw TensorFileError("write failed for " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorFileError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 16) throw TensorFileError(path.string() + ": header truncated (file shorter than 16 bytes)");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw TensorFileError(path.string() + ": bad magic in header");
  const std::uint64_t header_len = get_u64(raw + 8);
  if (header_len > bytes.size() - 16) throw TensorFileError(path.string() + ": header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw TensorFileError(path.string() + ": malformed header JSON: " + e.what());
  }
  if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_object()) {
    throw TensorFileError(path.string() + ": malformed header, missing 'tensors'");
  }

  const std::size_t blob_start = 16 + header_len;
  const std::size_t blob_size = bytes.size() - blob_start;
  TensorFile file;
  if (header.contains("metadata")) file.metadata = header["metadata"];
  try {
    for (const auto& [name, info] : header["tensors"].items()) {
      const std::string dtype = info.at("dtype").get<std::string>();
      const Shape shape = info.at("shape").get<Shape>();
      const auto offsets = info.at("offsets").get<std::vector<std::size_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1]) throw TensorFileError("bad offsets for " + name);
      const std::size_t width = dtype == "F64" ? 8 : dtype == "F32" ? 4 : 0;
      if (width == 0) throw TensorFileError(path.string() + ": unsupported dtype '" + dtype + "' for " + name);
      Tensor t(shape);
      if (offsets[1] - offsets[0] != t.size() * width) {
        throw TensorFileError(path.string() + ": byte range of " + name + " does not match shape " + shape_str(shape));
      }
      if (offsets[1] > blob_size) throw TensorFileError(path.string() + ": data truncated in " + name);
      const unsigned char* p = raw + blob_start + offsets[0];
      for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = width == 8 ? std::bit_cast<double>(get_u64(p + 8 * i))
                          : static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * i)));
      }
      file.tensors.emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw TensorFileError(path.string() + ": malformed header entry: " + e.what());
  }
  return file;
}

}  // namespace captime
