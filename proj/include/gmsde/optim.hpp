#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace gmsde {

/// Bias-corrected Adam moments for one parameter vector.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

  /// In-place descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad,
            double lr);
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(Eigen::Index index, double value);
  Eigen::Index index() const { return index_; }

 private:
  Eigen::Index index_;
};

struct AdamResult {
  AdamState state;
  Eigen::VectorXd params;
};

/// Pure form of AdamState::step.
AdamResult adam_step(const AdamState& state, const Eigen::VectorXd& params,
                     const Eigen::VectorXd& grad, double lr);

}  // namespace gmsde
