#include "deepen/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "deepen/errors.hpp"

namespace deepen {

namespace {

// FFTW planning is not thread-safe, execution with new-array calls is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t h, std::size_t w, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(h, w, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    auto* in = fftw_alloc_complex(h * w);
    auto* out = fftw_alloc_complex(h * w);
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in, out, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void check_dims(const ComplexImage& img, const char* op) {
  if (img.height() < 2 || img.width() < 2) {
    throw InvalidArgument(std::string(op) + ": dimensions must be at least 2x2, got " +
                          std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
}

ComplexImage centered_transform(const ComplexImage& img, int sign) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  const std::size_t sh = h / 2;
  const std::size_t sw = w / 2;

  // ifftshift: out[i] = in[(i + n/2) % n]
  ComplexImage shifted(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t sr = (r + sh) % h;
    for (std::size_t c = 0; c < w; ++c) shifted(r, c) = img(sr, (c + sw) % w);
  }

  ComplexImage spectrum(h, w);
  fftw_plan plan = plan_cache().get(h, w, sign);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(shifted.data().data()),
                   reinterpret_cast<fftw_complex*>(spectrum.data().data()));

  // fftshift: out[(i + n/2) % n] = in[i]
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  ComplexImage out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t dr = (r + sh) % h;
    for (std::size_t c = 0; c < w; ++c) out(dr, (c + sw) % w) = spectrum(r, c) * scale;
  }
  return out;
}

}  // namespace

ComplexImage fft2_centered(const ComplexImage& img) {
  check_dims(img, "fft2_centered");
  return centered_transform(img, FFTW_FORWARD);
}

ComplexImage ifft2_centered(const ComplexImage& kspace) {
  check_dims(kspace, "ifft2_centered");
  return centered_transform(kspace, FFTW_BACKWARD);
}

}  // namespace deepen
