#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "deepen/posterior.hpp"
#include "deepen/sampler.hpp"

namespace deepen {

struct UncertaintyOptions {
  double lambda_tilde = 0.01;   // regularizer of the sense_init the random starts center on
  bool same_seed_per_chain = false;  // test hook: every chain reuses cfg.seed
  std::size_t keep_samples = 0;      // retain the first k final samples
};

struct UncertaintyReport {
  ComplexImage mmse;              // per-pixel sample mean
  std::vector<double> variance;   // unbiased var(re) + var(im), row-major
  std::size_t n_samples = 0;      // chains that survived
  std::size_t dropped = 0;        // chains that diverged
  std::vector<ComplexImage> kept;

  double mean_variance() const;
};

// Runs n_samples independent Langevin chains, each from a Gaussian random
// start centered on sense_init with complex std equal to its RMS, and reduces
// their final states to a mean and a variance map in chain order.
UncertaintyReport estimate_mmse_uncertainty(const PosteriorModel& m, const SamplerConfig& cfg,
                                            std::size_t n_samples,
                                            const UncertaintyOptions& opts = {});

inline constexpr double kPsnrCap = 200.0;

// 20 log10(max|ref| / rmse) on magnitude images; kPsnrCap when identical.
double psnr(const ComplexImage& reference, const ComplexImage& estimate);

// Mean local SSIM on magnitude images: 11x11 Gaussian window (σ = 1.5, valid
// region), k1 = 0.01, k2 = 0.03, dynamic range max|reference| unless given.
double ssim(const ComplexImage& reference, const ComplexImage& estimate,
            std::optional<double> dynamic_range = std::nullopt);

double mse(const ComplexImage& reference, const ComplexImage& estimate);

}  // namespace deepen
