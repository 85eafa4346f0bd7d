#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "deepen/errors.hpp"
#include "deepen/posterior.hpp"

namespace deepen {

struct MapConfig {
  double beta = 0.5;       // shrink factor and sufficient-decrease coefficient
  int max_iters = 500;
  double rel_tol = 1e-6;   // stop when |L_{k+1} - L_k| / |L_k| <= rel_tol
  int max_backtracks = 50;

  void validate() const;
};

struct BacktrackResult {
  double alpha = 0.0;
  ComplexImage next;
  double next_cost = 0.0;
  int backtracks = 0;
  bool sufficient = true;  // false when only plain decrease was achieved
};

// Starting from α = 1, shrinks α by β until
//   L(x - α g) <= L(x) - β α ||g||².
// If max_backtracks is exhausted the best strictly decreasing trial is
// returned; if none decreased the cost, throws StagnationError.
BacktrackResult backtrack_step(const PosteriorModel& m, const ComplexImage& x, const ComplexImage& g,
                               double cost_x, const MapConfig& cfg);

struct ReconReport {
  ComplexImage estimate;
  std::vector<double> cost_trajectory;  // L(x_0), L(x_1), ...
  std::vector<double> step_sizes;
  std::vector<double> grad_norms;       // ||∇L(x_k)|| per iterate visited
  int iterations = 0;
  bool converged = false;
};

// Stagnation inside map_estimate; carries the cost trajectory up to the
// failing iteration.
class MapStagnationError : public StagnationError {
 public:
  MapStagnationError(const std::string& what, std::vector<double> trajectory)
      : StagnationError(what), trajectory_(std::move(trajectory)) {}
  const std::vector<double>& trajectory() const noexcept { return trajectory_; }

 private:
  std::vector<double> trajectory_;
};

// Steepest descent x_{k+1} = x_k - α_k ∇L(x_k) with backtracking.
ReconReport map_estimate(const PosteriorModel& m, const ComplexImage& x0, const MapConfig& cfg);

// Process-wide bookkeeping of the monotone-descent invariant across every
// map_estimate call.
struct MonotoneStats {
  long runs = 0;
  long iterations = 0;
  long violations = 0;
};
MonotoneStats monotone_stats();

void write_recon_trajectory_csv(const ReconReport& report, const std::filesystem::path& path);

}  // namespace deepen
