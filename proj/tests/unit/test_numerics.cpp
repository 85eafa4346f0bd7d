#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "deepen/cg.hpp"
#include "deepen/errors.hpp"
#include "deepen/fft.hpp"
#include "deepen/tensor_io.hpp"
#include "test_support.hpp"

using namespace deepen;
using deepen::test::random_image;
using deepen::test::rel_diff;

TEST_CASE("fft round trip and Parseval") {
  std::mt19937_64 rng(11);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {6, 10}, {5, 7}, {32, 32}}) {
    const ComplexImage x = random_image(h, w, rng);
    const ComplexImage k = fft2_centered(x);
    CHECK(rel_diff(ifft2_centered(k), x) < 1e-12);
    CHECK(std::abs(norm(k) - norm(x)) / norm(x) < 1e-12);
  }
}

TEST_CASE("fft of a constant puts c*N at the center") {
  const std::size_t n = 8;
  const cplx c{0.7, -0.3};
  ComplexImage x(n, n);
  for (auto& v : x.data()) v = c;
  const ComplexImage k = fft2_centered(x);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t col = 0; col < n; ++col) {
      const cplx expected = (r == n / 2 && col == n / 2) ? c * static_cast<double>(n) : cplx{};
      CHECK(std::abs(k(r, col) - expected) < 1e-12);
    }
  }
}

TEST_CASE("fft matches the explicit centered DFT matrix, even and odd sizes") {
  std::mt19937_64 rng(3);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 6}, {5, 3}}) {
    const ComplexImage x = random_image(h, w, rng);
    const Eigen::MatrixXcd f =
        Eigen::kroneckerProduct(test::centered_dft_matrix(h), test::centered_dft_matrix(w));
    const ComplexImage expected = test::from_vec(f * test::to_vec(x), h, w);
    CHECK(rel_diff(fft2_centered(x), expected) < 1e-12);
  }
}

TEST_CASE("fft adjoint identity") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const ComplexImage x = random_image(12, 10, rng);
    const ComplexImage y = random_image(12, 10, rng);
    const cplx lhs = dot(fft2_centered(x), y);
    const cplx rhs = dot(x, ifft2_centered(y));
    CHECK(std::abs(lhs - rhs) / (norm(x) * norm(y)) < 1e-12);
  }
}

TEST_CASE("fft rejects degenerate shapes and leaves its input alone") {
  CHECK_THROWS_AS(fft2_centered(ComplexImage(0, 4)), InvalidArgument);
  CHECK_THROWS_AS(fft2_centered(ComplexImage(1, 4)), InvalidArgument);
  std::mt19937_64 rng(1);
  const ComplexImage x = random_image(6, 6, rng);
  const ComplexImage copy = x;
  (void)fft2_centered(x);
  CHECK(x == copy);
}

TEST_CASE("cg: identity converges in one iteration") {
  std::mt19937_64 rng(2);
  const ComplexImage r = random_image(4, 4, rng);
  const auto res = conjugate_gradient([](const ComplexImage& v) { return v; }, r, CgConfig{});
  CHECK(res.iterations == 1);
  CHECK(res.converged);
  CHECK(rel_diff(res.solution, r) < 1e-14);
}

TEST_CASE("cg: diagonal system solves by division") {
  ComplexImage d(2, 2, {1.0, 2.0, 3.0, 4.0});
  ComplexImage rhs(2, 2, {cplx{1, 1}, cplx{2, -1}, cplx{0.5, 3}, cplx{-4, 2}});
  const auto res = conjugate_gradient([&](const ComplexImage& v) { return hadamard(d, v); }, rhs,
                                      CgConfig{50, 1e-14});
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(res.solution[i] - rhs[i] / d[i]) < 1e-10);
}

TEST_CASE("cg: random Hermitian PD system matches a dense solve") {
  std::mt19937_64 rng(7);
  const Eigen::Index n = 16;
  Eigen::MatrixXcd b = Eigen::MatrixXcd::Random(n, n);
  const Eigen::MatrixXcd a = b.adjoint() * b + 0.5 * Eigen::MatrixXcd::Identity(n, n);
  const ComplexImage rhs = random_image(4, 4, rng);
  const auto op = [&](const ComplexImage& v) { return test::from_vec(a * test::to_vec(v), 4, 4); };
  const auto res = conjugate_gradient(op, rhs, CgConfig{500, 1e-12});
  const ComplexImage expected = test::from_vec(a.ldlt().solve(test::to_vec(rhs)), 4, 4);
  CHECK(rel_diff(res.solution, expected) < 1e-8);

  // Residual of the true error in the A-norm never grows.
  std::vector<double> energy_err;
  conjugate_gradient(op, rhs, CgConfig{500, 1e-12}, [&](int, const ComplexImage& it) {
    const Eigen::VectorXcd e = test::to_vec(it) - test::to_vec(expected);
    energy_err.push_back(std::sqrt(std::real(e.dot(a * e))));
  });
  for (std::size_t i = 1; i < energy_err.size(); ++i) {
    CHECK(energy_err[i] <= energy_err[i - 1] * (1 + 1e-10) + 1e-14);
  }
}

TEST_CASE("cg: breakdown and config errors") {
  ComplexImage rhs(2, 2, {1.0, 1.0, 1.0, 1.0});
  const auto nan_map = [](const ComplexImage& v) {
    ComplexImage out = v;
    out[0] = std::nan("");
    return out;
  };
  CHECK_THROWS_AS(conjugate_gradient(nan_map, rhs, CgConfig{}), NumericalBreakdown);
  CHECK_THROWS_AS(conjugate_gradient([](const ComplexImage& v) { return v; }, rhs, CgConfig{0, 1e-8}),
                  InvalidArgument);
  CHECK_THROWS_AS(conjugate_gradient([](const ComplexImage& v) { return v; }, rhs, CgConfig{10, 0.0}),
                  InvalidArgument);
  const auto zero = conjugate_gradient([](const ComplexImage& v) { return v; }, ComplexImage(2, 2), CgConfig{});
  CHECK(norm(zero.solution) == 0.0);
}

TEST_CASE("complex image arithmetic") {
  ComplexImage a(1, 2, {cplx{1, 2}, cplx{3, -1}});
  ComplexImage b(1, 2, {cplx{0, 1}, cplx{2, 2}});
  CHECK(dot(a, b) == std::conj(a[0]) * b[0] + std::conj(a[1]) * b[1]);
  CHECK(norm_sq(a) == doctest::Approx(15.0));
  axpy(cplx{2, 0}, b, a);
  CHECK(a[1] == cplx{7, 3});
  CHECK_THROWS_AS(a += ComplexImage(2, 1), InvalidArgument);
}

TEST_CASE("DPN1 tensor round trip and header bytes") {
  std::mt19937_64 rng(4);
  const ComplexImage x = random_image(3, 5, rng);
  const auto bytes = encode_tensor(to_tensor(x));
  REQUIRE(bytes.size() == 4 + 1 + 1 + 2 * 4 + 15 * 16);
  CHECK(bytes[0] == 0x44);
  CHECK(bytes[1] == 0x50);
  CHECK(bytes[2] == 0x4E);
  CHECK(bytes[3] == 0x31);
  CHECK(bytes[4] == 2);
  CHECK(bytes[5] == 2);
  CHECK(bytes[6] == 3);  // little-endian u32 height
  CHECK(image_from_tensor(decode_tensor(bytes)) == x);

  Tensor f32{DType::F32, {2, 2}, {0.5, -1.25, 3.0, 1e-3}};
  const Tensor back = decode_tensor(encode_tensor(f32));
  CHECK(back.dtype == DType::F32);
  CHECK(back.values[1] == -1.25);
  CHECK(back.values[3] == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("DPN1 rejects corrupt input") {
  std::vector<std::uint8_t> bad{'X', 'P', 'N', '1', 1, 1, 4, 0, 0, 0};
  CHECK_THROWS_AS(decode_tensor(bad), IoError);
  Tensor t{DType::F64, {2}, {1.0, 2.0}};
  auto bytes = encode_tensor(t);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_tensor(bytes), IoError);
  bytes = encode_tensor(t);
  bytes[4] = 9;
  CHECK_THROWS_AS(decode_tensor(bytes), IoError);
}

TEST_CASE("archive round trip, atomic write leaves no temp files") {
  const auto dir = std::filesystem::temp_directory_path() / "deepen_archive_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  TensorArchive a;
  a.header["format"] = "x";
  a.header["answer"] = "42";
  a.tensors.emplace_back("w", Tensor{DType::F64, {2, 3}, {1, 2, 3, 4, 5, 6}});
  a.tensors.emplace_back("b", Tensor{DType::F64, {1}, {-0.125}});
  write_archive(dir / "a.dpn1", a);
  const TensorArchive b = read_archive(dir / "a.dpn1");
  CHECK(b.header.at("answer") == "42");
  CHECK(b.at("w").values == a.at("w").values);
  CHECK(b.at("w").dims == std::vector<std::uint32_t>{2, 3});
  CHECK(b.at("b").values[0] == -0.125);
  CHECK_FALSE(b.contains("nope"));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);

  std::ofstream(dir / "junk.dpn1") << "DPN1garbage";
  CHECK_THROWS_AS(read_archive(dir / "junk.dpn1"), CheckpointIncompatible);
  std::filesystem::remove_all(dir);
}
