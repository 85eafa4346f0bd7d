#include "deepen/map_recon.hpp"

#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "deepen/errors.hpp"
#include "deepen/tensor_io.hpp"

namespace deepen {

namespace {
std::atomic<long> g_runs{0};
std::atomic<long> g_iterations{0};
std::atomic<long> g_violations{0};
}  // namespace

void MapConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("MapConfig: beta must be in (0, 1)");
  if (!(rel_tol > 0.0)) throw InvalidArgument("MapConfig: rel_tol must be > 0");
  if (max_iters < 0) throw InvalidArgument("MapConfig: max_iters must be >= 0");
  if (max_backtracks < 1) throw InvalidArgument("MapConfig: max_backtracks must be >= 1");
}

BacktrackResult backtrack_step(const PosteriorModel& m, const ComplexImage& x, const ComplexImage& g,
                               double cost_x, const MapConfig& cfg) {
  cfg.validate();
  const double g2 = norm_sq(g);
  if (!(g2 > 0.0)) throw InvalidArgument("backtrack_step: zero gradient");

  BacktrackResult best;
  best.next_cost = std::numeric_limits<double>::infinity();
  bool have_decrease = false;

  double alpha = 1.0;
  ComplexImage trial(x.height(), x.width());
  for (int k = 0; k <= cfg.max_backtracks; ++k) {
    for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - alpha * g[i];
    const double c = m.cost(trial);
    if (std::isfinite(c) && c <= cost_x - cfg.beta * alpha * g2) {
      return BacktrackResult{alpha, trial, c, k, true};
    }
    if (std::isfinite(c) && c < cost_x && c < best.next_cost) {
      best = BacktrackResult{alpha, trial, c, k, false};
      have_decrease = true;
    }
    alpha *= cfg.beta;
  }
  if (have_decrease) return best;
  throw StagnationError("backtrack_step: no decrease after " + std::to_string(cfg.max_backtracks) +
                        " backtracks (cost " + std::to_string(cost_x) + ")");
}

ReconReport map_estimate(const PosteriorModel& m, const ComplexImage& x0, const MapConfig& cfg) {
  cfg.validate();
  m.op().check_image(x0, "map_estimate");
  g_runs.fetch_add(1, std::memory_order_relaxed);

  ReconReport report;
  report.estimate = x0;
  auto [cost, g] = m.cost_and_grad(report.estimate);
  if (!std::isfinite(cost)) throw NumericalError("map_estimate: non-finite cost at the start point");
  report.cost_trajectory.push_back(cost);
  report.grad_norms.push_back(norm(g));

  for (int k = 0; k < cfg.max_iters; ++k) {
    if (report.grad_norms.back() == 0.0) {
      report.converged = true;
      break;
    }
    BacktrackResult step;
    try {
      step = backtrack_step(m, report.estimate, g, cost, cfg);
    } catch (const StagnationError& e) {
      throw MapStagnationError(std::string(e.what()) + " at iteration " + std::to_string(k),
                               report.cost_trajectory);
    }
    report.estimate = std::move(step.next);
    report.step_sizes.push_back(step.alpha);
    report.iterations = k + 1;
    g_iterations.fetch_add(1, std::memory_order_relaxed);

    const double prev = cost;
    std::tie(cost, g) = m.cost_and_grad(report.estimate);
    if (cost > prev) g_violations.fetch_add(1, std::memory_order_relaxed);
    report.cost_trajectory.push_back(cost);
    report.grad_norms.push_back(norm(g));

    const double change = std::abs(cost - prev);
    if (prev == 0.0 ? change == 0.0 : change / std::abs(prev) <= cfg.rel_tol) {
      report.converged = true;
      break;
    }
  }
  return report;
}

MonotoneStats monotone_stats() {
  return MonotoneStats{g_runs.load(), g_iterations.load(), g_violations.load()};
}

void write_recon_trajectory_csv(const ReconReport& report, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "iteration,cost,stepSize,gradNorm\n" << std::setprecision(17);
  for (std::size_t k = 0; k < report.cost_trajectory.size(); ++k) {
    os << k << ',' << report.cost_trajectory[k] << ',';
    if (k > 0) os << report.step_sizes[k - 1];
    os << ',' << report.grad_norms[k] << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace deepen
