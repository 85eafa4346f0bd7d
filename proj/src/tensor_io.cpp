#include "deepen/tensor_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "deepen/errors.hpp"

namespace deepen {

namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kMagic[4] = {0x44, 0x50, 0x4E, 0x31};
constexpr std::uint8_t kArchiveMarker = 0xFF;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t pos = 0) : bytes_(bytes), pos_(pos) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("DPN1: truncated data");
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  std::size_t size() const { return bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
};

bool has_magic(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 4 && bytes[0] == kMagic[0] && bytes[1] == kMagic[1] &&
         bytes[2] == kMagic[2] && bytes[3] == kMagic[3];
}

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::size_t Tensor::element_count() const { return product(dims); }

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  const std::size_t n = t.element_count();
  const std::size_t scalars = t.dtype == DType::C128 ? 2 * n : n;
  if (t.values.size() != scalars) {
    throw InvalidArgument("encode_tensor: payload size " + std::to_string(t.values.size()) +
                          " does not match dims (" + std::to_string(scalars) + ")");
  }
  if (t.dims.size() > 255) throw InvalidArgument("encode_tensor: too many dimensions");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  out.reserve(out.size() + scalars * 8);
  if (t.dtype == DType::F32) {
    for (double v : t.values) put_f32(out, static_cast<float>(v));
  } else {
    for (double v : t.values) put_f64(out, v);
  }
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (!has_magic(bytes)) throw IoError("DPN1: bad magic bytes");
  Reader in(bytes, 4);
  Tensor t;
  const std::uint8_t code = in.u8();
  if (code > 2) throw IoError("DPN1: unknown dtype code " + std::to_string(code));
  t.dtype = static_cast<DType>(code);
  const std::uint8_t ndim = in.u8();
  for (int i = 0; i < ndim; ++i) t.dims.push_back(in.u32());
  const std::size_t n = t.element_count();
  const std::size_t scalars = t.dtype == DType::C128 ? 2 * n : n;
  in.need(scalars * (t.dtype == DType::F32 ? 4 : 8));
  t.values.resize(scalars);
  for (std::size_t i = 0; i < scalars; ++i) {
    t.values[i] = t.dtype == DType::F32 ? static_cast<double>(in.f32()) : in.f64();
  }
  if (in.pos() != in.size()) throw IoError("DPN1: trailing bytes after payload");
  return t;
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  write_file_atomic(path, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_tensor(const fs::path& path, const Tensor& t) { write_file_atomic(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path) {
  try {
    return decode_tensor(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Tensor to_tensor(const ComplexImage& img) {
  Tensor t;
  t.dtype = DType::C128;
  t.dims = {static_cast<std::uint32_t>(img.height()), static_cast<std::uint32_t>(img.width())};
  t.values.reserve(2 * img.size());
  for (const auto& v : img.data()) {
    t.values.push_back(v.real());
    t.values.push_back(v.imag());
  }
  return t;
}

Tensor to_tensor(const CoilImages& planes) {
  Tensor t;
  t.dtype = DType::C128;
  const std::size_t h = planes.empty() ? 0 : planes.front().height();
  const std::size_t w = planes.empty() ? 0 : planes.front().width();
  t.dims = {static_cast<std::uint32_t>(planes.size()), static_cast<std::uint32_t>(h),
            static_cast<std::uint32_t>(w)};
  for (const auto& p : planes) {
    if (p.height() != h || p.width() != w) throw InvalidArgument("to_tensor: ragged planes");
    for (const auto& v : p.data()) {
      t.values.push_back(v.real());
      t.values.push_back(v.imag());
    }
  }
  return t;
}

Tensor to_tensor(const std::vector<double>& real, std::size_t height, std::size_t width) {
  if (real.size() != height * width) throw InvalidArgument("to_tensor: size mismatch");
  Tensor t;
  t.dtype = DType::F64;
  t.dims = {static_cast<std::uint32_t>(height), static_cast<std::uint32_t>(width)};
  t.values = real;
  return t;
}

ComplexImage image_from_tensor(const Tensor& t) {
  if (t.dtype != DType::C128 || t.dims.size() != 2) {
    throw IoError("expected a 2D c128 tensor");
  }
  ComplexImage img(t.dims[0], t.dims[1]);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = {t.values[2 * i], t.values[2 * i + 1]};
  return img;
}

CoilImages planes_from_tensor(const Tensor& t) {
  if (t.dtype != DType::C128 || t.dims.size() != 3) {
    throw IoError("expected a 3D c128 tensor");
  }
  CoilImages planes;
  const std::size_t plane = static_cast<std::size_t>(t.dims[1]) * t.dims[2];
  for (std::size_t c = 0; c < t.dims[0]; ++c) {
    ComplexImage img(t.dims[1], t.dims[2]);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = 2 * (c * plane + i);
      img[i] = {t.values[k], t.values[k + 1]};
    }
    planes.push_back(std::move(img));
  }
  return planes;
}

const Tensor& TensorArchive::at(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointIncompatible("archive has no tensor named '" + name + "'");
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void write_archive(const fs::path& path, const TensorArchive& archive) {
  std::ostringstream index;
  for (const auto& [key, value] : archive.header) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw InvalidArgument("write_archive: bad header entry '" + key + "'");
    }
    index << key << '=' << value << '\n';
  }
  std::size_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    if (t.dtype != DType::F64) throw InvalidArgument("write_archive: only f64 tensors supported");
    if (t.values.size() != t.element_count()) throw InvalidArgument("write_archive: bad tensor " + name);
    index << "tensor " << name << " offset=" << offset << " shape=";
    for (std::size_t i = 0; i < t.dims.size(); ++i) index << (i ? "," : "") << t.dims[i];
    index << '\n';
    offset += 8 * t.values.size();
  }
  const std::string text = index.str();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kArchiveMarker);
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : archive.tensors) {
    for (double v : t.values) put_f64(out, v);
  }
  write_file_atomic(path, out);
}

TensorArchive read_archive(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  if (!has_magic(bytes)) throw CheckpointIncompatible(path.string() + ": bad magic bytes");
  if (bytes.size() < 10 || bytes[4] != kArchiveMarker || bytes[5] != 0) {
    throw CheckpointIncompatible(path.string() + ": not a DPN1 archive");
  }
  TensorArchive archive;
  try {
    Reader in(bytes, 6);
    const std::uint32_t index_len = in.u32();
    in.need(index_len);
    const std::string text(bytes.begin() + static_cast<std::ptrdiff_t>(in.pos()),
                           bytes.begin() + static_cast<std::ptrdiff_t>(in.pos() + index_len));
    const std::size_t payload = in.pos() + index_len;

    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("tensor ", 0) == 0) {
        std::istringstream fields(line.substr(7));
        std::string name, off, shape;
        fields >> name >> off >> shape;
        if (off.rfind("offset=", 0) != 0 || shape.rfind("shape=", 0) != 0) {
          throw CheckpointIncompatible("malformed index line: " + line);
        }
        Tensor t;
        t.dtype = DType::F64;
        std::istringstream dims(shape.substr(6));
        std::string d;
        while (std::getline(dims, d, ',')) {
          if (!d.empty()) t.dims.push_back(static_cast<std::uint32_t>(std::stoul(d)));
        }
        const std::size_t offset = std::stoull(off.substr(7));
        in.seek(payload + offset);
        t.values.resize(t.element_count());
        for (auto& v : t.values) v = in.f64();
        archive.tensors.emplace_back(name, std::move(t));
      } else if (auto eq = line.find('='); eq != std::string::npos) {
        archive.header[line.substr(0, eq)] = line.substr(eq + 1);
      } else if (!line.empty()) {
        throw CheckpointIncompatible("malformed index line: " + line);
      }
    }
  } catch (const IoError& e) {
    throw CheckpointIncompatible(path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw CheckpointIncompatible(path.string() + ": malformed index");
  } catch (const std::out_of_range&) {
    throw CheckpointIncompatible(path.string() + ": malformed index");
  }
  return archive;
}

}  // namespace deepen
