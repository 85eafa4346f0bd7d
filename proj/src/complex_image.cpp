#include "deepen/complex_image.hpp"

#include <cmath>
#include <string>

#include "deepen/errors.hpp"

namespace deepen {

namespace {
std::atomic<long> g_live{0};
std::atomic<long> g_peak{0};

void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* op) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + std::to_string(a.height()) +
                          "x" + std::to_string(a.width()) + " vs " +
                          std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}
}  // namespace

void BufferTracker::acquire() noexcept {
  long now = g_live.fetch_add(1, std::memory_order_relaxed) + 1;
  long prev = g_peak.load(std::memory_order_relaxed);
  while (now > prev && !g_peak.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
  }
}

void BufferTracker::release() noexcept { g_live.fetch_sub(1, std::memory_order_relaxed); }
long BufferTracker::live() noexcept { return g_live.load(std::memory_order_relaxed); }
long BufferTracker::peak() noexcept { return g_peak.load(std::memory_order_relaxed); }
void BufferTracker::reset_peak() noexcept { g_peak.store(live(), std::memory_order_relaxed); }

ComplexImage::ComplexImage(std::size_t height, std::size_t width)
    : height_(height), width_(width), data_(height * width) {}

ComplexImage::ComplexImage(std::size_t height, std::size_t width, std::vector<cplx> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != height * width) {
    throw InvalidArgument("ComplexImage: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
}

bool ComplexImage::all_finite() const noexcept {
  for (const auto& v : data_) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  }
  return true;
}

ComplexImage& ComplexImage::operator+=(const ComplexImage& rhs) {
  require_same_shape(*this, rhs, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

ComplexImage& ComplexImage::operator-=(const ComplexImage& rhs) {
  require_same_shape(*this, rhs, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

ComplexImage& ComplexImage::operator*=(cplx s) noexcept {
  for (auto& v : data_) v *= s;
  return *this;
}

ComplexImage& ComplexImage::operator*=(double s) noexcept {
  for (auto& v : data_) v *= s;
  return *this;
}

ComplexImage operator+(ComplexImage a, const ComplexImage& b) { return a += b; }
ComplexImage operator-(ComplexImage a, const ComplexImage& b) { return a -= b; }
ComplexImage operator*(double s, ComplexImage a) { return a *= s; }
ComplexImage operator*(cplx s, ComplexImage a) { return a *= s; }

cplx dot(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "dot");
  cplx acc{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

double norm_sq(const ComplexImage& a) noexcept {
  double acc = 0.0;
  for (const auto& v : a.data()) acc += std::norm(v);
  return acc;
}

double norm(const ComplexImage& a) noexcept { return std::sqrt(norm_sq(a)); }

void axpy(cplx alpha, const ComplexImage& x, ComplexImage& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

ComplexImage hadamard(const ComplexImage& a, const ComplexImage& b, bool conj_a) {
  require_same_shape(a, b, "hadamard");
  ComplexImage out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (conj_a ? std::conj(a[i]) : a[i]) * b[i];
  return out;
}

double rms(const ComplexImage& a) noexcept {
  if (a.empty()) return 0.0;
  return std::sqrt(norm_sq(a) / static_cast<double>(a.size()));
}

std::vector<double> magnitude(const ComplexImage& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::abs(a[i]);
  return out;
}

cplx dot(const CoilImages& a, const CoilImages& b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: coil count mismatch");
  cplx acc{0.0, 0.0};
  for (std::size_t c = 0; c < a.size(); ++c) acc += dot(a[c], b[c]);
  return acc;
}

double norm_sq(const CoilImages& a) noexcept {
  double acc = 0.0;
  for (const auto& img : a) acc += norm_sq(img);
  return acc;
}

}  // namespace deepen
