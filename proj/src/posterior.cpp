#include "deepen/posterior.hpp"

#include "deepen/errors.hpp"

namespace deepen {

PosteriorModel::PosteriorModel(std::shared_ptr<const ForwardOperator> op,
                               std::shared_ptr<const EnergyModel> energy, CoilImages b)
    : op_(std::move(op)), energy_(std::move(energy)), b_(std::move(b)) {
  if (!op_ || !energy_) throw InvalidArgument("PosteriorModel: operator and energy are required");
  op_->check_kspace(b_, "PosteriorModel");
}

CoilImages PosteriorModel::residual(const ComplexImage& x) const {
  CoilImages r = op_->apply(x);
  for (std::size_t c = 0; c < r.size(); ++c) r[c] -= b_[c];
  return r;
}

double PosteriorModel::data_term(const ComplexImage& x) const { return 0.5 * norm_sq(residual(x)); }

double PosteriorModel::cost(const ComplexImage& x) const {
  return data_term(x) + energy_->energy(x);
}

ComplexImage PosteriorModel::grad(const ComplexImage& x) const {
  ComplexImage g = op_->adjoint(residual(x));
  g += energy_->grad_x(x);
  return g;
}

std::pair<double, ComplexImage> PosteriorModel::cost_and_grad(const ComplexImage& x) const {
  const CoilImages r = residual(x);
  auto [e, ge] = energy_->energy_and_grad(x);
  ComplexImage g = op_->adjoint(r);
  g += ge;
  return {0.5 * norm_sq(r) + e, std::move(g)};
}

}  // namespace deepen
