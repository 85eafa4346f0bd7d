#pragma once

#include <atomic>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace deepen {

using cplx = std::complex<double>;

// Process-wide count of live image-sized buffers (images and network feature
// maps). Used to verify that sampling chains stream instead of accumulating.
class BufferTracker {
 public:
  static void acquire() noexcept;
  static void release() noexcept;
  static long live() noexcept;
  static long peak() noexcept;
  // Resets the peak to the current live count.
  static void reset_peak() noexcept;
};

// RAII token that registers its owner with BufferTracker for as long as it
// lives. Copies register again; moves also register (the moved-from owner
// stays counted until destroyed).
class BufferToken {
 public:
  BufferToken() noexcept { BufferTracker::acquire(); }
  BufferToken(const BufferToken&) noexcept { BufferTracker::acquire(); }
  BufferToken(BufferToken&&) noexcept { BufferTracker::acquire(); }
  BufferToken& operator=(const BufferToken&) noexcept { return *this; }
  BufferToken& operator=(BufferToken&&) noexcept { return *this; }
  ~BufferToken() { BufferTracker::release(); }
};

// 2D complex image in row-major order.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(std::size_t height, std::size_t width);
  ComplexImage(std::size_t height, std::size_t width, std::vector<cplx> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }
  const std::vector<cplx>& values() const noexcept { return data_; }

  cplx& operator[](std::size_t i) noexcept { return data_[i]; }
  const cplx& operator[](std::size_t i) const noexcept { return data_[i]; }
  cplx& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * width_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * width_ + c];
  }

  bool same_shape(const ComplexImage& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const noexcept;

  ComplexImage& operator+=(const ComplexImage& rhs);
  ComplexImage& operator-=(const ComplexImage& rhs);
  ComplexImage& operator*=(cplx s) noexcept;
  ComplexImage& operator*=(double s) noexcept;

  friend bool operator==(const ComplexImage& a, const ComplexImage& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<cplx> data_;
  BufferToken token_;
};

ComplexImage operator+(ComplexImage a, const ComplexImage& b);
ComplexImage operator-(ComplexImage a, const ComplexImage& b);
ComplexImage operator*(double s, ComplexImage a);
ComplexImage operator*(cplx s, ComplexImage a);

// <a, b> = sum conj(a_i) b_i
cplx dot(const ComplexImage& a, const ComplexImage& b);
double norm_sq(const ComplexImage& a) noexcept;
double norm(const ComplexImage& a) noexcept;
// y += alpha * x
void axpy(cplx alpha, const ComplexImage& x, ComplexImage& y);
// Elementwise product a * b (conj_a conjugates the first operand).
ComplexImage hadamard(const ComplexImage& a, const ComplexImage& b, bool conj_a = false);
// Root mean square magnitude.
double rms(const ComplexImage& a) noexcept;
std::vector<double> magnitude(const ComplexImage& a);

// Multi-coil data (one plane per coil); also used for k-space measurements.
using CoilImages = std::vector<ComplexImage>;

cplx dot(const CoilImages& a, const CoilImages& b);
double norm_sq(const CoilImages& a) noexcept;

}  // namespace deepen
