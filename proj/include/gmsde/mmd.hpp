#pragma once

#include "gmsde/inference.hpp"
#include "gmsde/sampling.hpp"

#include <cstdint>
#include <vector>

namespace gmsde {

/// Scale mixture of rational quadratic kernels:
/// k(u, v) = mean over alpha of (1 + |u - v|^2 / (2 alpha l^2))^-alpha.
struct RqKernelSpec {
  std::vector<double> alphas{0.2, 0.5, 1.0, 2.0, 5.0};
  double lengthscale = 1.0;

  void validate() const;
};

double rq_kernel(const VectorXd& u, const VectorXd& v, const RqKernelSpec& spec);

/// Unbiased MMD^2 between equally sized batches (rows are samples); the
/// diagonal i == j is excluded from all three sums.
double mmd2_unbiased(const MatrixXd& X, const MatrixXd& Y, const RqKernelSpec& spec);

/// d MMD^2_u / d X, same shape as X.
MatrixXd mmd2_grad_X(const MatrixXd& X, const MatrixXd& Y, const RqKernelSpec& spec);

struct MmdWithGrad {
  double value;
  MatrixXd grad_X;
};
MmdWithGrad mmd2_with_grad(const MatrixXd& X, const MatrixXd& Y, const RqKernelSpec& spec);

/// sqrt of the median pairwise squared distance between rows.
double median_heuristic_lengthscale(const MatrixXd& X);

struct MarsConfig {
  double learning_rate = 0.01;
  int iterations = 2000;
  Index batch_size = 256;
  std::uint64_t seed = 0;
  std::vector<double> alphas{0.2, 0.5, 1.0, 2.0, 5.0};

  void validate() const;
};

/// MMD-minimizing gradient matching over theta.
InferenceResult mars_infer(const AncestralSampler& sampler, const VectorXd& theta0,
                           const MarsConfig& config, const TraceSink& sink = {});

}  // namespace gmsde
