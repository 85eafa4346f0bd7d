#include "deepen/bayes_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "deepen/errors.hpp"
#include "deepen/forward_model.hpp"

namespace deepen {

double UncertaintyReport::mean_variance() const {
  if (variance.empty()) return 0.0;
  double acc = 0.0;
  for (double v : variance) acc += v;
  return acc / static_cast<double>(variance.size());
}

UncertaintyReport estimate_mmse_uncertainty(const PosteriorModel& m, const SamplerConfig& cfg,
                                            std::size_t n_samples, const UncertaintyOptions& opts) {
  cfg.validate();
  if (n_samples < 2) throw InvalidArgument("estimate_mmse_uncertainty: need at least 2 samples");

  const ComplexImage center = sense_init(m.op(), m.measurements(), opts.lambda_tilde);
  const double component_std = rms(center) / std::sqrt(2.0);

  UncertaintyReport report;
  report.mmse = ComplexImage(center.height(), center.width());
  std::vector<double> m2(center.size(), 0.0);
  ComplexImage start(center.height(), center.width());

  for (std::size_t k = 0; k < n_samples; ++k) {
    const std::uint64_t chain_seed = opts.same_seed_per_chain ? cfg.seed : derive_seed(cfg.seed, {k});
    Rng init_rng(derive_seed(chain_seed, {1}));
    fill_complex_normal(start, init_rng);
    for (std::size_t i = 0; i < start.size(); ++i) start[i] = center[i] + component_std * start[i];

    SamplerConfig chain = cfg;
    chain.seed = derive_seed(chain_seed, {2});
    ComplexImage sample;
    try {
      sample = sample_posterior(m, start, chain).sample;
    } catch (const DivergenceError&) {
      ++report.dropped;
      continue;
    }
    // Welford update, deterministic chain order.
    const double n = static_cast<double>(++report.n_samples);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const cplx delta = sample[i] - report.mmse[i];
      report.mmse[i] += delta / n;
      m2[i] += std::real(std::conj(delta) * (sample[i] - report.mmse[i]));
    }
    if (report.kept.size() < opts.keep_samples) report.kept.push_back(std::move(sample));
  }
  if (report.n_samples < 2) {
    throw NumericalError("estimate_mmse_uncertainty: only " + std::to_string(report.n_samples) +
                         " of " + std::to_string(n_samples) + " chains survived");
  }
  report.variance.resize(m2.size());
  const double denom = static_cast<double>(report.n_samples - 1);
  for (std::size_t i = 0; i < m2.size(); ++i) report.variance[i] = std::max(0.0, m2[i] / denom);
  return report;
}

namespace {

void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* op) {
  if (!a.same_shape(b)) throw InvalidArgument(std::string(op) + ": shape mismatch");
}

double max_magnitude(const ComplexImage& x) {
  double peak = 0.0;
  for (const auto& v : x.data()) peak = std::max(peak, std::abs(v));
  return peak;
}

}  // namespace

double mse(const ComplexImage& reference, const ComplexImage& estimate) {
  require_same_shape(reference, estimate, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) acc += std::norm(reference[i] - estimate[i]);
  return acc / static_cast<double>(reference.size());
}

double psnr(const ComplexImage& reference, const ComplexImage& estimate) {
  require_same_shape(reference, estimate, "psnr");
  const double peak = max_magnitude(reference);
  if (!(peak > 0.0)) throw InvalidArgument("psnr: reference image is identically zero");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = std::abs(reference[i]) - std::abs(estimate[i]);
    acc += d * d;
  }
  const double rmse = std::sqrt(acc / static_cast<double>(reference.size()));
  if (rmse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 20.0 * std::log10(peak / rmse));
}

double ssim(const ComplexImage& reference, const ComplexImage& estimate,
            std::optional<double> dynamic_range) {
  require_same_shape(reference, estimate, "ssim");
  const double range = dynamic_range.value_or(max_magnitude(reference));
  if (!(range > 0.0)) throw InvalidArgument("ssim: dynamic range must be positive");

  const std::size_t h = reference.height();
  const std::size_t w = reference.width();
  std::size_t win = std::min<std::size_t>({11, h, w});
  if (win % 2 == 0) --win;
  const double sigma = 1.5;
  std::vector<double> kernel(win * win);
  double ksum = 0.0;
  const double c0 = static_cast<double>(win / 2);
  for (std::size_t y = 0; y < win; ++y) {
    for (std::size_t x = 0; x < win; ++x) {
      const double dy = static_cast<double>(y) - c0;
      const double dx = static_cast<double>(x) - c0;
      kernel[y * win + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      ksum += kernel[y * win + x];
    }
  }
  for (auto& k : kernel) k /= ksum;

  const std::vector<double> a = magnitude(reference);
  const std::vector<double> b = magnitude(estimate);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + win <= h; ++y0) {
    for (std::size_t x0 = 0; x0 + win <= w; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t y = 0; y < win; ++y) {
        for (std::size_t x = 0; x < win; ++x) {
          const double k = kernel[y * win + x];
          const double va = a[(y0 + y) * w + x0 + x];
          const double vb = b[(y0 + y) * w + x0 + x];
          ma += k * va;
          mb += k * vb;
          saa += k * va * va;
          sbb += k * vb * vb;
          sab += k * va * vb;
        }
      }
      const double var_a = saa - ma * ma;
      const double var_b = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace deepen
