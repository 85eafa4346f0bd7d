#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cstdint>
#include <random>

#include "deepen/complex_image.hpp"
#include "deepen/forward_model.hpp"

namespace deepen::test {

inline ComplexImage random_image(std::size_t h, std::size_t w, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  ComplexImage x(h, w);
  for (auto& v : x.data()) v = {n(rng), n(rng)};
  return x;
}

inline CoilImages random_planes(std::size_t coils, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  CoilImages y;
  for (std::size_t c = 0; c < coils; ++c) y.push_back(random_image(h, w, rng));
  return y;
}

inline double rel_diff(const ComplexImage& a, const ComplexImage& b) {
  return norm(a - b) / std::max(norm(b), 1e-300);
}

// Random column mask with roughly 1/accel of the columns kept.
inline SamplingMask random_mask(std::size_t h, std::size_t w, double keep, std::mt19937_64& rng) {
  std::bernoulli_distribution pick(keep);
  SamplingMask m{h, w, std::vector<std::uint8_t>(w, 0)};
  for (auto& c : m.columns) c = pick(rng) ? 1 : 0;
  m.columns[w / 2] = 1;
  return m;
}

inline Eigen::VectorXcd to_vec(const ComplexImage& x) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v(static_cast<Eigen::Index>(i)) = x[i];
  return v;
}

inline ComplexImage from_vec(const Eigen::VectorXcd& v, std::size_t h, std::size_t w) {
  ComplexImage x(h, w);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = v(static_cast<Eigen::Index>(i));
  return x;
}

// Centered unitary DFT matrix for length n: F[k, j] = exp(-2πi (k-c)(j-c)/n)/√n, c = n/2.
inline Eigen::MatrixXcd centered_dft_matrix(std::size_t n) {
  const double pi = std::acos(-1.0);
  const double c = static_cast<double>(n / 2);
  Eigen::MatrixXcd f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = -2.0 * pi * (static_cast<double>(k) - c) * (static_cast<double>(j) - c) /
                           static_cast<double>(n);
      f(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          std::polar(1.0 / std::sqrt(static_cast<double>(n)), phase);
    }
  }
  return f;
}

// Explicit matrix of A = S F C acting on the row-major image vector; rows
// are stacked per coil in row-major k-space order.
inline Eigen::MatrixXcd dense_forward(const SamplingMask& mask, const CoilImages& coils) {
  const std::size_t h = mask.height;
  const std::size_t w = mask.width;
  const Eigen::MatrixXcd f2 = Eigen::kroneckerProduct(centered_dft_matrix(h), centered_dft_matrix(w));
  const auto m = static_cast<Eigen::Index>(h * w);
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(m * static_cast<Eigen::Index>(coils.size()), m);
  for (std::size_t c = 0; c < coils.size(); ++c) {
    Eigen::MatrixXcd fc = f2 * to_vec(coils[c]).asDiagonal();
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        if (!mask.selected(r, col)) fc.row(static_cast<Eigen::Index>(r * w + col)).setZero();
      }
    }
    a.middleRows(static_cast<Eigen::Index>(c) * m, m) = fc;
  }
  return a;
}

inline Eigen::VectorXcd stack(const CoilImages& y) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(y.size() * y.front().size()));
  Eigen::Index k = 0;
  for (const auto& p : y) {
    for (const auto& z : p.data()) v(k++) = z;
  }
  return v;
}

}  // namespace deepen::test
