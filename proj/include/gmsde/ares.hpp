#pragma once

#include "gmsde/inference.hpp"
#include "gmsde/optim.hpp"
#include "gmsde/sampling.hpp"

#include <cstdint>

namespace gmsde {

/// Fully connected critic D -> h1 -> h2 -> 1 with leaky-rectifier hidden layers.
/// Parameters live in one flat vector: W1 (h1 x D), b1, W2 (h2 x h1), b2, w3 (h2), b3,
/// matrices stored column-major.
class CriticNet {
 public:
  CriticNet(Index input_dim, Index hidden1 = 256, Index hidden2 = 128, double slope = 0.2);

  Index input_dim() const { return d_; }
  Index hidden1() const { return h1_; }
  Index hidden2() const { return h2_; }
  double slope() const { return slope_; }
  Index param_count() const { return params_.size(); }

  const VectorXd& params() const { return params_; }
  /// Mutable access bumps the generation, invalidating outstanding caches.
  VectorXd& mutable_params() {
    ++generation_;
    return params_;
  }
  std::uint64_t generation() const { return generation_; }

  Eigen::Map<const MatrixXd> W1() const { return {params_.data() + off_W1(), h1_, d_}; }
  Eigen::Map<const VectorXd> b1() const { return {params_.data() + off_b1(), h1_}; }
  Eigen::Map<const MatrixXd> W2() const { return {params_.data() + off_W2(), h2_, h1_}; }
  Eigen::Map<const VectorXd> b2() const { return {params_.data() + off_b2(), h2_}; }
  Eigen::Map<const VectorXd> w3() const { return {params_.data() + off_w3(), h2_}; }
  double b3() const { return params_[off_b3()]; }

  Index off_W1() const { return 0; }
  Index off_b1() const { return h1_ * d_; }
  Index off_W2() const { return off_b1() + h1_; }
  Index off_b2() const { return off_W2() + h2_ * h1_; }
  Index off_w3() const { return off_b2() + h2_; }
  Index off_b3() const { return off_w3() + h2_; }

  /// Uniform in [-scale, scale].
  void init_uniform(double scale, Rng& rng);

 private:
  Index d_, h1_, h2_;
  double slope_;
  VectorXd params_;
  std::uint64_t generation_ = 0;
};

struct CriticCache {
  MatrixXd X, Z1, Z2, A2;  // A1 is recomputed from Z1
  std::uint64_t generation = 0;
  const CriticNet* net = nullptr;
};

struct CriticForward {
  VectorXd scores;
  CriticCache cache;
};

struct CriticGrads {
  VectorXd weights;  // same layout as CriticNet::params()
  MatrixXd inputs;   // M x D
};

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

CriticForward critic_forward(const CriticNet& net, const MatrixXd& batch);

/// Gradients of sum_i upstream_i * score_i.
CriticGrads critic_backward(const CriticNet& net, const CriticCache& cache, const VectorXd& upstream);

void clip_weights(CriticNet& net, double c);

/// Product of layer spectral norms; leaky rectifiers with slope <= 1 are 1-Lipschitz.
double lipschitz_bound(const CriticNet& net);

struct AresConfig {
  double learning_rate = 1e-4;
  int iterations = 5000;
  double clip = 0.01;
  Index batch_size = 256;
  int n_critic = 5;
  double init_scale = 0.05;
  Index hidden1 = 256;
  Index hidden2 = 128;
  double slope = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Alternating critic/generator optimization. Exposed for step-level tests.
class AresTrainer {
 public:
  AresTrainer(const AncestralSampler& sampler, VectorXd theta0, const AresConfig& config);

  /// One critic ascent step on mean C(zdot_d) - mean C(zdot_s); returns that objective.
  double critic_step();
  /// One generator step on theta with a fresh SDE batch.
  void generator_step();
  /// n_critic critic steps then one generator step; returns the last critic objective.
  double iterate(int n_critic);

  const VectorXd& theta() const { return theta_; }
  const CriticNet& critic() const { return net_; }

 private:
  const AncestralSampler& sampler_;
  AresConfig config_;
  Rng rng_;
  CriticNet net_;
  AdamState critic_adam_;
  AdamState theta_adam_;
  VectorXd theta_;
  double last_objective_ = 0.0;
};

InferenceResult ares_infer(const AncestralSampler& sampler, const VectorXd& theta0,
                           const AresConfig& config, const TraceSink& sink = {});

}  // namespace gmsde
