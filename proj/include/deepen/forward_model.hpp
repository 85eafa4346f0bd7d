#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deepen/cg.hpp"
#include "deepen/complex_image.hpp"

namespace deepen {

// 1D Cartesian sampling pattern: whole phase-encode columns are acquired or
// skipped, so the mask is stored per column.
struct SamplingMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> columns;  // 1 = acquired

  static SamplingMask full(std::size_t height, std::size_t width);
  bool selected(std::size_t /*row*/, std::size_t col) const { return columns[col] != 0; }
  std::size_t selected_count() const;
};

// A = S F C for every coil: coil weighting, centered unitary FFT, column mask.
// Immutable after construction.
class ForwardOperator {
 public:
  ForwardOperator(SamplingMask mask, CoilImages coil_maps);

  std::size_t height() const noexcept { return mask_.height; }
  std::size_t width() const noexcept { return mask_.width; }
  std::size_t coil_count() const noexcept { return coils_.size(); }
  const SamplingMask& mask() const noexcept { return mask_; }
  const CoilImages& coil_maps() const noexcept { return coils_; }

  // Per coil: S ⊙ F(C_c ⊙ x). Masked-out samples are exactly zero.
  CoilImages apply(const ComplexImage& x) const;
  // Σ_c conj(C_c) ⊙ Fᴴ(S ⊙ y_c)
  ComplexImage adjoint(const CoilImages& y) const;
  // AᴴA x
  ComplexImage normal(const ComplexImage& x) const;

  void check_image(const ComplexImage& x, const char* op) const;
  void check_kspace(const CoilImages& y, const char* op) const;

 private:
  void apply_mask(ComplexImage& k) const;

  SamplingMask mask_;
  CoilImages coils_;
};

// Solves (AᴴA + λ̃ I) x = Aᴴ b by conjugate gradients. Doubles as the SENSE
// baseline reconstruction and the chain initializer.
ComplexImage sense_init(const ForwardOperator& op, const CoilImages& b, double lambda_tilde,
                        const CgConfig& cfg = CgConfig{500, 1e-8});

// Variable-density column mask. About width/acceleration columns are kept,
// including a fully sampled center band of 8% of the columns; the remaining
// columns are drawn without replacement with density decaying away from the
// center.
SamplingMask make_vardens_mask(std::size_t height, std::size_t width, double acceleration,
                               std::uint64_t seed);

// Smooth Gaussian-bump coil profiles placed around the image border with
// smooth phase, normalized so Σ_c |C_c|² = 1 at every pixel.
CoilImages make_coil_maps(std::size_t height, std::size_t width, std::size_t n_coils);

struct DatasetSpec {
  std::size_t n_train = 200;
  std::size_t n_val = 8;
  std::size_t n_test = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t n_coils = 4;
  double acceleration = 4.0;
  double noise_std = 0.01;  // η, per real/imaginary component of k-space
  std::uint64_t seed = 1;

  void validate() const;
};

struct DatasetSplit {
  std::vector<ComplexImage> images;
  std::vector<CoilImages> kspace;

  std::size_t size() const noexcept { return images.size(); }
};

enum class SplitKind { Train, Val, Test };
const char* split_name(SplitKind kind);
SplitKind parse_split(const std::string& name);

struct Dataset {
  DatasetSpec spec;
  SamplingMask mask;
  CoilImages coil_maps;
  DatasetSplit train;
  DatasetSplit val;
  DatasetSplit test;

  ForwardOperator make_operator() const { return ForwardOperator(mask, coil_maps); }
  const DatasetSplit& split(SplitKind kind) const;
};

// Random piecewise-smooth ellipse phantom with a smooth complex phase ramp.
// Magnitudes lie in [0, 1]; the region outside the outer ellipse is zero.
ComplexImage make_phantom(std::size_t height, std::size_t width, std::uint64_t seed);

// Builds phantoms, mask, coil maps and measurements b = A x + n, n complex
// Gaussian with std noise_std per component on acquired samples.
Dataset gen_phantoms(const DatasetSpec& spec);

// Layout: manifest.txt, mask.dpn1, coils.dpn1, {train,val,test}/img_%04d.dpn1
// and ksp_%04d.dpn1.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace deepen
