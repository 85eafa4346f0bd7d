#include "deepen/sampler.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "deepen/errors.hpp"
#include "deepen/tensor_io.hpp"

namespace deepen {

LangevinVariant parse_variant(const std::string& name) {
  if (name == "standard") return LangevinVariant::Standard;
  if (name == "scaled") return LangevinVariant::Scaled;
  throw InvalidArgument("unknown Langevin variant '" + name + "' (expected standard or scaled)");
}

const char* variant_name(LangevinVariant v) {
  return v == LangevinVariant::Standard ? "standard" : "scaled";
}

void SamplerConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("SamplerConfig: epsilon must be > 0");
  if (n_steps < 0) throw InvalidArgument("SamplerConfig: n_steps must be >= 0");
  if (!(divergence_cost > 0.0)) throw InvalidArgument("SamplerConfig: divergence_cost must be > 0");
}

void fill_complex_normal(ComplexImage& z, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : z.data()) {
    const double re = normal(rng);
    const double im = normal(rng);
    v = cplx{re, im};
  }
}

namespace {

// x_next = x - drift * g + epsilon * z
ComplexImage step_from_grad(const ComplexImage& x, const ComplexImage& g, double drift,
                            double epsilon, Rng& rng) {
  ComplexImage next(x.height(), x.width());
  fill_complex_normal(next, rng);
  for (std::size_t i = 0; i < next.size(); ++i) next[i] = x[i] - drift * g[i] + epsilon * next[i];
  return next;
}

double drift_for(LangevinVariant v, double epsilon) {
  return v == LangevinVariant::Standard ? 0.5 * epsilon * epsilon : 1.0;
}

}  // namespace

ComplexImage langevin_step_standard(const PosteriorModel& m, const ComplexImage& x, double epsilon,
                                    Rng& rng) {
  if (!(epsilon > 0.0)) throw InvalidArgument("langevin_step_standard: epsilon must be > 0");
  ComplexImage next = step_from_grad(x, m.grad(x), drift_for(LangevinVariant::Standard, epsilon), epsilon, rng);
  if (!next.all_finite()) throw DivergenceError("langevin_step_standard: non-finite state", 0);
  return next;
}

ComplexImage langevin_step_scaled(const PosteriorModel& m, const ComplexImage& x, double epsilon,
                                  Rng& rng) {
  if (!(epsilon > 0.0)) throw InvalidArgument("langevin_step_scaled: epsilon must be > 0");
  ComplexImage next = step_from_grad(x, m.grad(x), drift_for(LangevinVariant::Scaled, epsilon), epsilon, rng);
  if (!next.all_finite()) throw DivergenceError("langevin_step_scaled: non-finite state", 0);
  return next;
}

SampleResult sample_posterior(const PosteriorModel& m, const ComplexImage& x0,
                              const SamplerConfig& cfg, const SampleObserver& observer) {
  cfg.validate();
  m.op().check_image(x0, "sample_posterior");
  SampleResult result;
  result.sample = x0;
  result.stats.reserve(static_cast<std::size_t>(cfg.n_steps));
  Rng rng(cfg.seed);
  const double drift = drift_for(cfg.variant, cfg.epsilon);
  for (int step = 0; step < cfg.n_steps; ++step) {
    auto [cost, g] = m.cost_and_grad(result.sample);
    const double gn = norm(g);
    if (!std::isfinite(cost) || !std::isfinite(gn) || cost > cfg.divergence_cost) {
      throw DivergenceError("sample_posterior: chain diverged, cost " + std::to_string(cost), step);
    }
    result.stats.push_back(StepStat{step, cost, gn});
    result.sample = step_from_grad(result.sample, g, drift, cfg.epsilon, rng);
    if (!result.sample.all_finite()) {
      throw DivergenceError("sample_posterior: non-finite state", step);
    }
    if (observer) observer(step, result.sample);
  }
  return result;
}

void write_trajectory_csv(const std::vector<StepStat>& stats, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "step,cost,gradNorm\n" << std::setprecision(17);
  for (const auto& s : stats) os << s.step << ',' << s.cost << ',' << s.grad_norm << '\n';
  write_file_atomic(path, os.str());
}

}  // namespace deepen
