#include "deepen/cg.hpp"

#include <cmath>

#include "deepen/errors.hpp"

namespace deepen {

void CgConfig::validate() const {
  if (!(tolerance > 0.0)) throw InvalidArgument("CgConfig: tolerance must be > 0");
  if (max_iters < 1) throw InvalidArgument("CgConfig: max_iters must be >= 1");
}

CgResult conjugate_gradient(const LinearMap& normal, const ComplexImage& rhs,
                            const CgConfig& cfg, const CgObserver& observer) {
  cfg.validate();
  if (!rhs.all_finite()) throw NumericalBreakdown("conjugate_gradient: non-finite rhs", 0);

  CgResult result;
  result.solution = ComplexImage(rhs.height(), rhs.width());
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) {
    result.converged = true;
    result.residual_log.push_back(0.0);
    return result;
  }

  ComplexImage& x = result.solution;
  ComplexImage r = rhs;
  ComplexImage p = r;
  double rr = norm_sq(r);
  result.residual_log.push_back(std::sqrt(rr) / rhs_norm);

  for (int k = 1; k <= cfg.max_iters; ++k) {
    ComplexImage q = normal(p);
    const double pq = dot(p, q).real();
    if (!std::isfinite(pq) || pq <= 0.0) {
      throw NumericalBreakdown("conjugate_gradient: curvature p^H A p = " + std::to_string(pq), k);
    }
    const double alpha = rr / pq;
    axpy(alpha, p, x);
    axpy(-alpha, q, r);
    const double rr_next = norm_sq(r);
    if (!std::isfinite(rr_next)) {
      throw NumericalBreakdown("conjugate_gradient: non-finite residual", k);
    }
    result.iterations = k;
    result.residual_log.push_back(std::sqrt(rr_next) / rhs_norm);
    if (observer) observer(k, x);
    if (std::sqrt(rr_next) <= cfg.tolerance * rhs_norm) {
      result.converged = true;
      break;
    }
    const double beta = rr_next / rr;
    rr = rr_next;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
  }
  return result;
}

}  // namespace deepen
