#pragma once

#include <memory>
#include <utility>

#include "deepen/complex_image.hpp"
#include "deepen/energy_net.hpp"
#include "deepen/forward_model.hpp"

namespace deepen {

// Negative log posterior up to an x-independent constant:
//   L(x) = ½ ||A x - b||² + E(x)
// The noise variance is absorbed into the energy. Immutable after construction.
class PosteriorModel {
 public:
  PosteriorModel(std::shared_ptr<const ForwardOperator> op,
                 std::shared_ptr<const EnergyModel> energy, CoilImages b);

  const ForwardOperator& op() const noexcept { return *op_; }
  const EnergyModel& energy_model() const noexcept { return *energy_; }
  const CoilImages& measurements() const noexcept { return b_; }
  std::shared_ptr<const ForwardOperator> op_ptr() const noexcept { return op_; }
  std::shared_ptr<const EnergyModel> energy_ptr() const noexcept { return energy_; }

  double data_term(const ComplexImage& x) const;
  double cost(const ComplexImage& x) const;
  // Aᴴ(A x - b) + ∇E(x)
  ComplexImage grad(const ComplexImage& x) const;
  std::pair<double, ComplexImage> cost_and_grad(const ComplexImage& x) const;

 private:
  CoilImages residual(const ComplexImage& x) const;

  std::shared_ptr<const ForwardOperator> op_;
  std::shared_ptr<const EnergyModel> energy_;
  CoilImages b_;
};

}  // namespace deepen
