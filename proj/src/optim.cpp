#include "gmsde/optim.hpp"

#include <cmath>

namespace gmsde {

NonFiniteGradient::NonFiniteGradient(Eigen::Index index, double value)
    : std::runtime_error("non-finite gradient at parameter " + std::to_string(index) + " (" +
                         std::to_string(value) + ")"),
      index_(index) {}

void AdamState::step(Eigen::Ref<Eigen::VectorXd> params,
                     const Eigen::Ref<const Eigen::VectorXd>& grad, double lr) {
  if (params.size() != m.size() || grad.size() != m.size())
    throw std::invalid_argument("adam: parameter/gradient/state size mismatch");
  for (Eigen::Index i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw NonFiniteGradient(i, grad[i]);

  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

AdamResult adam_step(const AdamState& state, const Eigen::VectorXd& params,
                     const Eigen::VectorXd& grad, double lr) {
  AdamResult out{state, params};
  out.state.step(out.params, grad, lr);
  return out;
}

}  // namespace gmsde
