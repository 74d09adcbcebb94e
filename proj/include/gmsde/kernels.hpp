#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace gmsde {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelKind { Rbf, Sigmoid };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// Covariance function over time with positive parameters.
///
/// Rbf:     params = [variance, lengthscale]
///          k(a, b) = variance * exp(-(a - b)^2 / (2 lengthscale^2))
/// Sigmoid: params = [variance, offset, slope]
///          k(a, b) = variance * asin((slope a b + offset) /
///                      sqrt((slope a^2 + offset + 1)(slope b^2 + offset + 1)))
///          i.e. the arcsine ("neural network") kernel with a scalar input.
struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  VectorXd params;

  static KernelSpec rbf(double variance, double lengthscale);
  static KernelSpec sigmoid(double variance, double offset, double slope);
  static Index param_count(KernelKind kind);
  static std::vector<std::string> param_names(KernelKind kind);
};

double kernel_eval(const KernelSpec& spec, double a, double b);

struct KernelTimeDerivs {
  double d_a;   // dk/da
  double d_b;   // dk/db
  double d_ab;  // d^2k / (da db)
};

KernelTimeDerivs kernel_time_derivs(const KernelSpec& spec, double a, double b);

/// Gradient of k(a, b) with respect to each entry of spec.params.
VectorXd kernel_param_derivs(const KernelSpec& spec, double a, double b);

/// Per-state GP matrices over the time grid t.
///   C   = k(t_i, t_j)            Cp  = dk/da   ("'C")
///   pC  = dk/db  ("C'")          Cpp = d2k/dadb
///   D   = Cp (C + jitter I)^-1   A   = Cpp - Cp (C + jitter I)^-1 pC
struct KernelMatrices {
  MatrixXd C, Cp, pC, Cpp, D, A;
  double jitter = 0.0;  // jitter actually used to factor C
};

MatrixXd gram(const KernelSpec& spec, const VectorXd& t);

KernelMatrices build_kernel_matrices(const KernelSpec& spec, const VectorXd& t, double jitter);

/// dC / d params[i] for every parameter, each N x N.
std::vector<MatrixXd> kernel_param_grads(const KernelSpec& spec, const VectorXd& t);

}  // namespace gmsde
