#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "deepen/errors.hpp"
#include "deepen/fft.hpp"
#include "deepen/forward_model.hpp"
#include "deepen/tensor_io.hpp"
#include "test_support.hpp"

using namespace deepen;
using deepen::test::random_image;
using deepen::test::random_planes;
using deepen::test::rel_diff;

namespace {

ForwardOperator random_operator(std::size_t h, std::size_t w, std::size_t coils, std::mt19937_64& rng) {
  return ForwardOperator(test::random_mask(h, w, 0.25, rng), random_planes(coils, h, w, rng));
}

}  // namespace

TEST_CASE("apply: full mask and unit coil reduce to the FFT") {
  std::mt19937_64 rng(1);
  const ForwardOperator op(SamplingMask::full(8, 8), make_coil_maps(8, 8, 1));
  const ComplexImage x = random_image(8, 8, rng);
  const auto y = op.apply(x);
  REQUIRE(y.size() == 1);
  CHECK(rel_diff(y[0], fft2_centered(x)) < 1e-14);
  CHECK(rel_diff(op.adjoint(y), ifft2_centered(y[0])) < 1e-14);
  for (const auto& p : op.apply(ComplexImage(8, 8))) CHECK(norm(p) == 0.0);
}

TEST_CASE("apply/adjoint match the explicit dense matrix at 8x8") {
  std::mt19937_64 rng(2);
  const SamplingMask mask = make_vardens_mask(8, 8, 4.0, 3);
  const CoilImages coils = make_coil_maps(8, 8, 4);
  const ForwardOperator op(mask, coils);
  const Eigen::MatrixXcd a = test::dense_forward(mask, coils);
  const ComplexImage x = random_image(8, 8, rng);
  const Eigen::VectorXcd ax = a * test::to_vec(x);
  CHECK((test::stack(op.apply(x)) - ax).norm() / ax.norm() < 1e-12);

  const CoilImages y = random_planes(4, 8, 8, rng);
  const Eigen::VectorXcd ahy = a.adjoint() * test::stack(y);
  CHECK((test::to_vec(op.adjoint(y)) - ahy).norm() / ahy.norm() < 1e-12);

  // Masked-out k-space entries are exactly zero.
  for (const auto& plane : op.apply(x)) {
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        if (!mask.selected(r, c)) CHECK(plane(r, c) == cplx{});
      }
    }
  }
}

TEST_CASE("adjoint identity and normal operator is Hermitian PSD") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 25; ++t) {
    const ForwardOperator op = random_operator(12, 10, 3, rng);
    const ComplexImage x = random_image(12, 10, rng);
    const CoilImages y = random_planes(3, 12, 10, rng);
    const CoilImages ax = op.apply(x);
    const cplx lhs = dot(ax, y);
    const cplx rhs = dot(x, op.adjoint(y));
    CHECK(std::abs(lhs - rhs) / (std::sqrt(norm_sq(ax)) * std::sqrt(norm_sq(y))) < 1e-12);
    const cplx q = dot(x, op.normal(x));
    CHECK(q.real() >= 0.0);
    CHECK(std::abs(q.imag()) <= 1e-12 * std::abs(q.real()));
  }
}

TEST_CASE("operator validation") {
  std::mt19937_64 rng(4);
  const SamplingMask mask = SamplingMask::full(8, 8);
  CHECK_THROWS_AS(ForwardOperator(mask, CoilImages{}), InvalidArgument);
  CHECK_THROWS_AS(ForwardOperator(mask, random_planes(2, 8, 6, rng)), InvalidArgument);
  CHECK_THROWS_AS(ForwardOperator(mask, CoilImages{ComplexImage(8, 8)}), InvalidArgument);
  const ForwardOperator op(mask, make_coil_maps(8, 8, 2));
  CHECK_THROWS_AS(op.apply(ComplexImage(8, 7)), InvalidArgument);
  CHECK_THROWS_AS(op.adjoint(random_planes(3, 8, 8, rng)), InvalidArgument);
}

TEST_CASE("sense_init: limits and dense oracle") {
  std::mt19937_64 rng(5);
  {
    const ForwardOperator op(SamplingMask::full(8, 8), make_coil_maps(8, 8, 1));
    const CoilImages b = random_planes(1, 8, 8, rng);
    CHECK(rel_diff(sense_init(op, b, 1e-8), ifft2_centered(b[0])) < 1e-6);
  }
  const SamplingMask mask = make_vardens_mask(8, 8, 4.0, 9);
  const CoilImages coils = make_coil_maps(8, 8, 4);
  const ForwardOperator op(mask, coils);
  const CoilImages b = op.apply(random_image(8, 8, rng));
  {
    const ComplexImage aHb = op.adjoint(b);
    CHECK(rel_diff(sense_init(op, b, 1e6), (1.0 / 1e6) * aHb) < 1e-4);
  }
  {
    const double lt = 0.05;
    const Eigen::MatrixXcd a = test::dense_forward(mask, coils);
    const Eigen::MatrixXcd n = a.adjoint() * a + lt * Eigen::MatrixXcd::Identity(64, 64);
    const Eigen::VectorXcd expected = n.ldlt().solve(a.adjoint() * test::stack(b));
    const ComplexImage got = sense_init(op, b, lt, CgConfig{500, 1e-13});
    CHECK((test::to_vec(got) - expected).norm() / expected.norm() < 1e-8);
  }
  {
    const CoilImages b2 = random_planes(4, 8, 8, rng);
    CoilImages sum = b;
    for (std::size_t c = 0; c < 4; ++c) sum[c] += b2[c];
    const ComplexImage lin = sense_init(op, b, 0.01) + sense_init(op, b2, 0.01);
    CHECK(rel_diff(sense_init(op, sum, 0.01), lin) < 1e-6);
  }
  CHECK_THROWS_AS(sense_init(op, b, 0.0), InvalidArgument);
}

TEST_CASE("variable-density mask") {
  const SamplingMask full = make_vardens_mask(16, 16, 1.0, 1);
  CHECK(full.selected_count() == 16);

  const SamplingMask m = make_vardens_mask(4, 320, 4.0, 17);
  CHECK(m.selected_count() >= 79);
  CHECK(m.selected_count() <= 81);
  for (std::size_t c = 160 - 13; c < 160 + 13; ++c) CHECK(m.selected(0, c));
  CHECK(m.columns == make_vardens_mask(4, 320, 4.0, 17).columns);
  CHECK(m.columns != make_vardens_mask(4, 320, 4.0, 18).columns);

  // Density decays away from the center: inner half selected more often than outer half.
  std::size_t inner = 0;
  std::size_t outer = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SamplingMask s = make_vardens_mask(1, 320, 4.0, seed);
    for (std::size_t c = 0; c < 320; ++c) {
      const bool near = c >= 80 && c < 240;
      if (s.selected(0, c)) (near ? inner : outer) += 1;
    }
  }
  CHECK(inner > 2 * outer);

  for (double accel : {2.0, 3.0, 4.0, 6.0, 8.0}) {
    const SamplingMask s = make_vardens_mask(8, 64, accel, 5);
    CHECK(std::abs(static_cast<double>(s.selected_count()) - 64.0 / accel) <= 1.0);
  }
  CHECK_THROWS_AS(make_vardens_mask(8, 16, 17.0, 1), InvalidArgument);
  CHECK_THROWS_AS(make_vardens_mask(8, 16, 0.5, 1), InvalidArgument);
}

TEST_CASE("coil maps: normalization and smoothness") {
  const CoilImages one = make_coil_maps(6, 6, 1);
  for (const auto& v : one[0].data()) CHECK(std::abs(v - cplx{1.0, 0.0}) < 1e-15);

  for (std::size_t n : {2, 4, 8, 12}) {
    const CoilImages maps = make_coil_maps(64, 64, n);
    REQUIRE(maps.size() == n);
    double max_dev = 0.0;
    double max_grad = 0.0;
    for (std::size_t p = 0; p < 64 * 64; ++p) {
      double s = 0.0;
      for (const auto& m : maps) s += std::norm(m[p]);
      max_dev = std::max(max_dev, std::abs(s - 1.0));
    }
    for (const auto& m : maps) {
      for (std::size_t r = 0; r + 1 < 64; ++r) {
        for (std::size_t c = 0; c + 1 < 64; ++c) {
          max_grad = std::max(max_grad, std::abs(m(r + 1, c) - m(r, c)));
          max_grad = std::max(max_grad, std::abs(m(r, c + 1) - m(r, c)));
        }
      }
    }
    CHECK(max_dev < 1e-12);
    CHECK(max_grad < 0.2);
  }
  CHECK_THROWS_AS(make_coil_maps(8, 8, 0), InvalidArgument);
}

TEST_CASE("phantoms: range, support and determinism") {
  const ComplexImage p = make_phantom(32, 32, 4);
  double peak = 0.0;
  for (const auto& v : p.data()) peak = std::max(peak, std::abs(v));
  CHECK(peak <= 1.0 + 1e-12);
  CHECK(peak > 0.3);
  CHECK(std::abs(p(0, 0)) == 0.0);
  CHECK(p == make_phantom(32, 32, 4));
  CHECK_FALSE(p == make_phantom(32, 32, 5));
}

TEST_CASE("gen_phantoms: noiseless and noisy measurements") {
  DatasetSpec spec;
  spec.n_train = 3;
  spec.n_val = 1;
  spec.n_test = 2;
  spec.height = 16;
  spec.width = 16;
  spec.noise_std = 0.0;
  const Dataset clean = gen_phantoms(spec);
  const ForwardOperator op = clean.make_operator();
  for (std::size_t i = 0; i < clean.train.size(); ++i) {
    const CoilImages ax = op.apply(clean.train.images[i]);
    for (std::size_t c = 0; c < ax.size(); ++c) CHECK(ax[c] == clean.train.kspace[i][c]);
  }

  spec.n_train = 40;
  spec.height = 32;
  spec.width = 32;
  spec.noise_std = 0.05;
  const Dataset noisy = gen_phantoms(spec);
  const ForwardOperator op2 = noisy.make_operator();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < noisy.train.size(); ++i) {
    const CoilImages ax = op2.apply(noisy.train.images[i]);
    for (std::size_t c = 0; c < ax.size(); ++c) {
      for (std::size_t r = 0; r < 32; ++r) {
        for (std::size_t col = 0; col < 32; ++col) {
          if (!noisy.mask.selected(r, col)) continue;
          const cplx d = noisy.train.kspace[i][c](r, col) - ax[c](r, col);
          acc += d.real() * d.real() + d.imag() * d.imag();
          count += 2;
        }
      }
    }
  }
  CHECK(std::abs(std::sqrt(acc / static_cast<double>(count)) - 0.05) < 0.05 * 0.05);
}

TEST_CASE("dataset spec validation and split names") {
  DatasetSpec spec;
  spec.acceleration = 0.5;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec = DatasetSpec{};
  spec.noise_std = -1.0;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  CHECK(parse_split("val") == SplitKind::Val);
  CHECK(std::string(split_name(SplitKind::Test)) == "test");
  CHECK_THROWS_AS(parse_split("bogus"), InvalidArgument);
}

TEST_CASE("dataset files: round trip and byte determinism") {
  DatasetSpec spec;
  spec.n_train = 3;
  spec.n_val = 1;
  spec.n_test = 2;
  spec.height = 16;
  spec.width = 16;
  const auto root = std::filesystem::temp_directory_path() / "deepen_ds_test";
  std::filesystem::remove_all(root);
  write_dataset(gen_phantoms(spec), root / "a");
  write_dataset(gen_phantoms(spec), root / "b");
  for (const auto& e : std::filesystem::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root / "a");
    CHECK(read_file_bytes(e.path()) == read_file_bytes(root / "b" / rel));
  }
  const Dataset back = read_dataset(root / "a");
  const Dataset orig = gen_phantoms(spec);
  CHECK(back.mask.columns == orig.mask.columns);
  CHECK(back.test.images[1] == orig.test.images[1]);
  CHECK(back.val.kspace[0][2] == orig.val.kspace[0][2]);
  CHECK(back.spec.noise_std == orig.spec.noise_std);

  std::filesystem::remove(root / "a" / "manifest.txt");
  CHECK_THROWS_AS(read_dataset(root / "a"), IoError);
  std::filesystem::remove_all(root);
}
