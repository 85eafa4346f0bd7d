#pragma once

#include <functional>
#include <vector>

#include "deepen/complex_image.hpp"

namespace deepen {

struct CgConfig {
  int max_iters = 200;
  double tolerance = 1e-8;  // on ||A x - rhs|| / ||rhs||

  void validate() const;
};

struct CgResult {
  ComplexImage solution;
  int iterations = 0;
  bool converged = false;
  // Relative residual after each iteration; entry 0 is the starting residual.
  std::vector<double> residual_log;
};

using LinearMap = std::function<ComplexImage(const ComplexImage&)>;
using CgObserver = std::function<void(int iteration, const ComplexImage& iterate)>;

// Solves normal(x) = rhs for a Hermitian positive definite map, starting from
// zero. Throws NumericalBreakdown if a non-finite value appears.
CgResult conjugate_gradient(const LinearMap& normal, const ComplexImage& rhs,
                            const CgConfig& cfg, const CgObserver& observer = {});

}  // namespace deepen
