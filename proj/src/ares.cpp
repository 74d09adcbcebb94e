#include "gmsde/ares.hpp"

#include <algorithm>
#include <cmath>

namespace gmsde {

CriticNet::CriticNet(Index input_dim, Index hidden1, Index hidden2, double slope)
    : d_(input_dim), h1_(hidden1), h2_(hidden2), slope_(slope) {
  if (d_ < 1 || h1_ < 1 || h2_ < 1) throw std::invalid_argument("critic: layer widths must be positive");
  if (!(slope_ >= 0.0 && slope_ <= 1.0)) throw std::invalid_argument("critic: slope must lie in [0, 1]");
  params_ = VectorXd::Zero(h1_ * d_ + h1_ + h2_ * h1_ + h2_ + h2_ + 1);
}

void CriticNet::init_uniform(double scale, Rng& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VectorXd& p = mutable_params();
  for (Index i = 0; i < p.size(); ++i) p[i] = u(rng);
}

namespace {

MatrixXd leaky(const MatrixXd& Z, double slope) {
  return Z.unaryExpr([slope](double z) { return z > 0.0 ? z : slope * z; });
}

MatrixXd leaky_grad(const MatrixXd& Z, double slope) {
  return Z.unaryExpr([slope](double z) { return z > 0.0 ? 1.0 : slope; });
}

}  // namespace

CriticForward critic_forward(const CriticNet& net, const MatrixXd& batch) {
  if (batch.cols() != net.input_dim())
    throw std::invalid_argument("critic_forward: batch width " + std::to_string(batch.cols()) +
                                " does not match input dimension " +
                                std::to_string(net.input_dim()));
  CriticForward out;
  auto& c = out.cache;
  c.X = batch;
  c.Z1.noalias() = batch * net.W1().transpose();
  c.Z1.rowwise() += net.b1().transpose();
  const MatrixXd A1 = leaky(c.Z1, net.slope());
  c.Z2.noalias() = A1 * net.W2().transpose();
  c.Z2.rowwise() += net.b2().transpose();
  c.A2 = leaky(c.Z2, net.slope());
  out.scores = c.A2 * net.w3();
  out.scores.array() += net.b3();
  c.generation = net.generation();
  c.net = &net;
  return out;
}

CriticGrads critic_backward(const CriticNet& net, const CriticCache& cache,
                            const VectorXd& upstream) {
  if (cache.net != &net || cache.generation != net.generation())
    throw StaleCacheError("critic_backward: cache was produced by a different network state");
  if (upstream.size() != cache.X.rows())
    throw std::invalid_argument("critic_backward: upstream length does not match the batch");

  CriticGrads g;
  g.weights = VectorXd::Zero(net.param_count());
  const double s = net.slope();

  Eigen::Map<VectorXd>(g.weights.data() + net.off_w3(), net.hidden2()) = cache.A2.transpose() * upstream;
  g.weights[net.off_b3()] = upstream.sum();

  MatrixXd dZ2 = upstream * net.w3().transpose();
  dZ2.array() *= leaky_grad(cache.Z2, s).array();
  const MatrixXd A1 = leaky(cache.Z1, s);
  Eigen::Map<MatrixXd>(g.weights.data() + net.off_W2(), net.hidden2(), net.hidden1()) =
      dZ2.transpose() * A1;
  Eigen::Map<VectorXd>(g.weights.data() + net.off_b2(), net.hidden2()) = dZ2.colwise().sum().transpose();

  MatrixXd dZ1 = dZ2 * net.W2();
  dZ1.array() *= leaky_grad(cache.Z1, s).array();
  Eigen::Map<MatrixXd>(g.weights.data() + net.off_W1(), net.hidden1(), net.input_dim()) =
      dZ1.transpose() * cache.X;
  Eigen::Map<VectorXd>(g.weights.data() + net.off_b1(), net.hidden1()) = dZ1.colwise().sum().transpose();

  g.inputs = dZ1 * net.W1();
  return g;
}

void clip_weights(CriticNet& net, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("clip_weights: c must be positive");
  VectorXd& p = net.mutable_params();
  p = p.cwiseMax(-c).cwiseMin(c);
}

double lipschitz_bound(const CriticNet& net) {
  auto spectral = [](const MatrixXd& W) {
    return Eigen::JacobiSVD<MatrixXd>(W).singularValues()(0);
  };
  return spectral(net.W1()) * spectral(net.W2()) * net.w3().norm();
}

void AresConfig::validate() const {
  if (!(clip > 0.0)) throw std::invalid_argument("ares: clip parameter must be positive");
  if (n_critic < 1) throw std::invalid_argument("ares: n_critic must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("ares: batch size must be positive");
  if (iterations < 1) throw std::invalid_argument("ares: iterations must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ares: learning rate must be positive");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("ares: init scale must be non-negative");
}

AresTrainer::AresTrainer(const AncestralSampler& sampler, VectorXd theta0, const AresConfig& config)
    : sampler_(sampler),
      config_(config),
      rng_(config.seed),
      net_(sampler.dim(), config.hidden1, config.hidden2, config.slope),
      theta_(std::move(theta0)) {
  config_.validate();
  if (theta_.size() != sampler.system().P)
    throw std::invalid_argument("ares: theta0 has wrong dimension");
  net_.init_uniform(config_.init_scale, rng_);
  clip_weights(net_, config_.clip);
  critic_adam_ = AdamState(net_.param_count());
  theta_adam_ = AdamState(theta_.size());
}

double AresTrainer::critic_step() {
  const Index M = config_.batch_size;
  const auto b = sampler_.sample(theta_, M, rng_);
  const auto fd = critic_forward(net_, b.data.samples);
  const auto fs = critic_forward(net_, b.sde.samples);
  const double objective = fd.scores.mean() - fs.scores.mean();

  const VectorXd up = VectorXd::Constant(M, 1.0 / static_cast<double>(M));
  VectorXd grad = critic_backward(net_, fd.cache, up).weights;
  grad -= critic_backward(net_, fs.cache, up).weights;
  // ascent on the objective
  critic_adam_.step(net_.mutable_params(), -grad, config_.learning_rate);
  clip_weights(net_, config_.clip);
  last_objective_ = objective;
  return objective;
}

void AresTrainer::generator_step() {
  const Index M = config_.batch_size;
  const auto latent = sampler_.draw_latent(M, rng_);
  const MatrixXd zs = sampler_.sde_derivatives(latent, theta_);
  const auto fs = critic_forward(net_, zs);
  // loss = -(1/M) sum C(zdot_s)
  const VectorXd up = VectorXd::Constant(M, -1.0 / static_cast<double>(M));
  const MatrixXd dz = critic_backward(net_, fs.cache, up).inputs;
  const VectorXd g = sampler_.contract_theta_grad(latent, theta_, dz);
  theta_adam_.step(theta_, g, config_.learning_rate);
}

double AresTrainer::iterate(int n_critic) {
  for (int i = 0; i < n_critic; ++i) critic_step();
  generator_step();
  return last_objective_;
}

InferenceResult ares_infer(const AncestralSampler& sampler, const VectorXd& theta0,
                           const AresConfig& config, const TraceSink& sink) {
  AresTrainer trainer(sampler, theta0, config);
  InferenceResult result;
  result.trace.reserve(static_cast<std::size_t>(config.iterations));
  for (int it = 0; it < config.iterations; ++it) {
    const VectorXd theta_before = trainer.theta();
    const double obj = trainer.iterate(config.n_critic);
    TraceEntry entry{it, theta_before, obj};
    if (sink) sink(entry);
    result.trace.push_back(std::move(entry));
    const VectorXd& th = trainer.theta();
    if (!th.allFinite() || th.cwiseAbs().maxCoeff() > kDivergenceBound)
      throw DivergenceError("ares: theta diverged at iteration " + std::to_string(it),
                            std::move(result.trace));
  }
  result.theta = trainer.theta();
  return result;
}

}  // namespace gmsde
