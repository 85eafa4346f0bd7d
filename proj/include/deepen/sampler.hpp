#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deepen/posterior.hpp"
#include "deepen/rng.hpp"

namespace deepen {

enum class LangevinVariant {
  Standard,  // x - (ε²/2) ∇L(x) + ε z
  Scaled,    // x - ∇L(x) + ε z   (drift rescaled by 2/ε², used for training)
};

LangevinVariant parse_variant(const std::string& name);
const char* variant_name(LangevinVariant v);

struct SamplerConfig {
  double epsilon = 0.001;
  int n_steps = 30;
  LangevinVariant variant = LangevinVariant::Scaled;
  std::uint64_t seed = 0;
  double divergence_cost = 1e12;

  void validate() const;
};

struct StepStat {
  int step = 0;
  double cost = 0.0;  // L at the state the step started from
  double grad_norm = 0.0;
};

struct SampleResult {
  ComplexImage sample;
  std::vector<StepStat> stats;
};

// Complex standard Gaussian: real and imaginary parts independent, unit variance.
void fill_complex_normal(ComplexImage& z, Rng& rng);

ComplexImage langevin_step_standard(const PosteriorModel& m, const ComplexImage& x, double epsilon,
                                    Rng& rng);
ComplexImage langevin_step_scaled(const PosteriorModel& m, const ComplexImage& x, double epsilon,
                                  Rng& rng);

// Called after every step with the new state; lets callers stream statistics
// without the sampler retaining intermediate states.
using SampleObserver = std::function<void(int step, const ComplexImage& state)>;

// Runs cfg.n_steps Langevin steps from x0 with an rng seeded from cfg.seed.
// Only the current state is kept; per-step cost and gradient norm are logged.
// Throws DivergenceError when the cost leaves [0, divergence_cost] or turns
// non-finite.
SampleResult sample_posterior(const PosteriorModel& m, const ComplexImage& x0,
                              const SamplerConfig& cfg, const SampleObserver& observer = {});

void write_trajectory_csv(const std::vector<StepStat>& stats, const std::filesystem::path& path);

}  // namespace deepen
