#include "gmsde/mmd.hpp"

#include "gmsde/optim.hpp"

#include <algorithm>
#include <cmath>

namespace gmsde {

void RqKernelSpec::validate() const {
  if (alphas.empty()) throw std::invalid_argument("rq kernel: alphas must be non-empty");
  for (double a : alphas)
    if (!(a > 0.0)) throw std::invalid_argument("rq kernel: alphas must be positive");
  if (!(lengthscale > 0.0)) throw std::invalid_argument("rq kernel: lengthscale must be positive");
}

namespace {

// b^-alpha with cheap paths for the common exponents.
double inv_pow(double b, double alpha) {
  if (alpha == 1.0) return 1.0 / b;
  if (alpha == 2.0) return 1.0 / (b * b);
  if (alpha == 0.5) return 1.0 / std::sqrt(b);
  if (alpha == 5.0) {
    const double b2 = b * b;
    return 1.0 / (b2 * b2 * b);
  }
  return std::pow(b, -alpha);
}

// Kernel value and d k / d(r^2) at squared distance r2.
struct RqEval {
  double k;
  double dk;
};

RqEval rq_eval(double r2, const RqKernelSpec& spec) {
  const double inv2l2 = 1.0 / (2.0 * spec.lengthscale * spec.lengthscale);
  double k = 0.0, dk = 0.0;
  for (double a : spec.alphas) {
    const double b = 1.0 + r2 * inv2l2 / a;
    const double p = inv_pow(b, a);
    k += p;
    dk -= inv2l2 * p / b;
  }
  const double n = static_cast<double>(spec.alphas.size());
  return {k / n, dk / n};
}

MatrixXd squared_distances(const MatrixXd& X, const MatrixXd& Y) {
  const VectorXd xn = X.rowwise().squaredNorm();
  const VectorXd yn = Y.rowwise().squaredNorm();
  MatrixXd D2(X.rows(), Y.rows());
  D2.noalias() = -2.0 * X * Y.transpose();
  D2.colwise() += xn;
  D2.rowwise() += yn.transpose();
  return D2.cwiseMax(0.0);
}

void check_batches(const MatrixXd& X, const MatrixXd& Y) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols())
    throw std::invalid_argument("mmd: batches must have equal shape (" +
                                std::to_string(X.rows()) + "x" + std::to_string(X.cols()) +
                                " vs " + std::to_string(Y.rows()) + "x" +
                                std::to_string(Y.cols()) + ")");
  if (X.rows() < 2) throw std::invalid_argument("mmd: unbiased estimator needs at least 2 samples");
}

// Elementwise kernel values and d k / d(r^2) over a squared-distance matrix.
struct RqMatrix {
  MatrixXd K, dK;
};

RqMatrix rq_matrix(const MatrixXd& D2, const RqKernelSpec& spec, bool with_grad = true) {
  const double inv2l2 = 1.0 / (2.0 * spec.lengthscale * spec.lengthscale);
  const double n = static_cast<double>(spec.alphas.size());
  const Index rows = D2.rows();
  RqMatrix out;
  out.K.resize(rows, D2.cols());
  if (with_grad) out.dK.resize(rows, D2.cols());
  // Column at a time so the temporaries stay in L1.
  Eigen::ArrayXd Binv(rows), P(rows), k(rows), dk(rows);
  for (Index j = 0; j < D2.cols(); ++j) {
    k.setZero();
    dk.setZero();
    for (double a : spec.alphas) {
      Binv = (1.0 + D2.col(j).array() * (inv2l2 / a)).inverse();
      if (a == 1.0)
        P = Binv;
      else if (a == 2.0)
        P = Binv.square();
      else if (a == 0.5)
        P = Binv.sqrt();
      else if (a == 5.0)
        P = Binv.square().square() * Binv;
      else
        P = (a * Binv.log()).exp();
      k += P;
      if (with_grad) dk -= P * Binv;
    }
    out.K.col(j) = k / n;
    if (with_grad) out.dK.col(j) = dk * (inv2l2 / n);
  }
  return out;
}

double off_diagonal_sum(const MatrixXd& K) { return K.sum() - K.diagonal().sum(); }

}  // namespace

double rq_kernel(const VectorXd& u, const VectorXd& v, const RqKernelSpec& spec) {
  return rq_eval((u - v).squaredNorm(), spec).k;
}

MmdWithGrad mmd2_with_grad(const MatrixXd& X, const MatrixXd& Y, const RqKernelSpec& spec) {
  check_batches(X, Y);
  spec.validate();
  const Index M = X.rows();
  const auto xx = rq_matrix(squared_distances(X, X), spec);
  const auto yy = rq_matrix(squared_distances(Y, Y), spec);
  const auto xy = rq_matrix(squared_distances(X, Y), spec);
  const double norm = 1.0 / (static_cast<double>(M) * static_cast<double>(M - 1));

  MmdWithGrad out;
  out.value = norm * (off_diagonal_sum(xx.K) + off_diagonal_sum(yy.K) - 2.0 * off_diagonal_sum(xy.K));

  MatrixXd wxx = xx.dK, wxy = xy.dK;
  wxx.diagonal().setZero();
  wxy.diagonal().setZero();
  // d/dx_a: 4 norm [ sum_j wxx_aj (x_a - x_j) - sum_j wxy_aj (x_a - y_j) ]
  out.grad_X = (wxx.rowwise().sum() - wxy.rowwise().sum()).asDiagonal() * X;
  out.grad_X.noalias() -= wxx * X;
  out.grad_X.noalias() += wxy * Y;
  out.grad_X *= 4.0 * norm;
  return out;
}

double mmd2_unbiased(const MatrixXd& X, const MatrixXd& Y, const RqKernelSpec& spec) {
  check_batches(X, Y);
  spec.validate();
  const Index M = X.rows();
  const double sxx = off_diagonal_sum(rq_matrix(squared_distances(X, X), spec, false).K);
  const double syy = off_diagonal_sum(rq_matrix(squared_distances(Y, Y), spec, false).K);
  const double sxy = off_diagonal_sum(rq_matrix(squared_distances(X, Y), spec, false).K);
  return (sxx + syy - 2.0 * sxy) / (static_cast<double>(M) * static_cast<double>(M - 1));
}

MatrixXd mmd2_grad_X(const MatrixXd& X, const MatrixXd& Y, const RqKernelSpec& spec) {
  return mmd2_with_grad(X, Y, spec).grad_X;
}

double median_heuristic_lengthscale(const MatrixXd& X) {
  const Index M = X.rows();
  if (M < 2) throw std::invalid_argument("median heuristic needs at least two rows");
  const MatrixXd d2 = squared_distances(X, X);
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(M * (M - 1) / 2));
  for (Index j = 0; j < M; ++j)
    for (Index i = j + 1; i < M; ++i) vals.push_back(d2(i, j));
  auto mid = vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2);
  std::nth_element(vals.begin(), mid, vals.end());
  const double med = *mid;
  return med > 0.0 ? std::sqrt(med) : 1.0;
}

void MarsConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("mars: batch size must be at least 2");
  if (iterations < 1) throw std::invalid_argument("mars: iterations must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("mars: learning rate must be positive");
  RqKernelSpec{alphas, 1.0}.validate();
}

InferenceResult mars_infer(const AncestralSampler& sampler, const VectorXd& theta0,
                           const MarsConfig& config, const TraceSink& sink) {
  config.validate();
  if (theta0.size() != sampler.system().P)
    throw std::invalid_argument("mars: theta0 has wrong dimension");

  Rng rng(config.seed);
  InferenceResult result;
  result.theta = theta0;
  result.trace.reserve(static_cast<std::size_t>(config.iterations));
  AdamState adam(theta0.size());
  RqKernelSpec kernel{config.alphas, 1.0};

  for (int it = 0; it < config.iterations; ++it) {
    const auto batches = sampler.sample(result.theta, config.batch_size, rng);
    if (it == 0) kernel.lengthscale = median_heuristic_lengthscale(batches.data.samples);

    const auto mmd = mmd2_with_grad(batches.sde.samples, batches.data.samples, kernel);
    const VectorXd g = sampler.contract_theta_grad(batches.latent, result.theta, mmd.grad_X);

    TraceEntry entry{it, result.theta, mmd.value};
    if (sink) sink(entry);
    result.trace.push_back(std::move(entry));

    adam.step(result.theta, g, config.learning_rate);
    if (!result.theta.allFinite() || result.theta.cwiseAbs().maxCoeff() > kDivergenceBound)
      throw DivergenceError("mars: theta diverged at iteration " + std::to_string(it),
                            std::move(result.trace));
  }
  return result;
}

}  // namespace gmsde
