#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "deepen/complex_image.hpp"

namespace deepen {

// DPN1 tensor files:
//   bytes 0-3  magic "DPN1" (44 50 4E 31)
//   u8         dtype (0 = f32 real, 1 = f64 real, 2 = c128 interleaved)
//   u8         ndim
//   ndim x u32 dims, little-endian
//   row-major payload, little-endian
enum class DType : std::uint8_t { F32 = 0, F64 = 1, C128 = 2 };

// Values are held as doubles; complex tensors store (re, im) pairs, so
// values.size() == 2 * element_count() for C128.
struct Tensor {
  DType dtype = DType::F64;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

Tensor to_tensor(const ComplexImage& img);
Tensor to_tensor(const CoilImages& planes);
Tensor to_tensor(const std::vector<double>& real, std::size_t height, std::size_t width);
ComplexImage image_from_tensor(const Tensor& t);
CoilImages planes_from_tensor(const Tensor& t);

// Multi-tensor archive used for checkpoints. Layout: the DPN1 magic, dtype
// byte 0xFF (archive marker), ndim byte 0, u32 index length, a UTF-8 text
// index, then the f64 payload. Index lines are either "key=value" header
// entries or "tensor <name> offset=<bytes> shape=<d0,d1,...>".
struct TensorArchive {
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
// Throws CheckpointIncompatible on a bad magic, marker or index.
TensorArchive read_archive(const std::filesystem::path& path);

// Writes bytes to a sibling temp file and renames it over path.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace deepen
