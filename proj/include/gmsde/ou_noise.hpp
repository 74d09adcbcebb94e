#pragma once

#include <Eigen/Dense>

namespace gmsde {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Covariance of the unit-diffusion OU process do = -o dt + dw with o(0) = 0:
/// 1/2 exp(-|ti - tj|) - 1/2 exp(-(ti + tj)).
double ou_cov(double ti, double tj);

/// N x N matrix of ou_cov over the time grid.
MatrixXd omega_one(const VectorXd& t);

/// B = G ⊗ I_N: maps a state-major vector of independent unit OU paths to o = G o_hat.
MatrixXd build_B(const MatrixXd& G, Index N);

/// Covariance of o = B o_hat, computed as (G G^T) ⊗ Omega_one.
MatrixXd omega_tilde(const MatrixXd& G, const MatrixXd& Omega_one);

/// Reference path B (I_K ⊗ Omega_one) B^T, O(N^3 K^3).
MatrixXd omega_tilde_explicit(const MatrixXd& G, const MatrixXd& Omega_one);

/// Sigma = C_phi + diag(T) + OmegaTilde, symmetrized.
MatrixXd assemble_sigma(const MatrixXd& C_phi, const VectorXd& T_diag, const MatrixXd& OmegaTilde);

/// H = G^T G.
MatrixXd increments_variance(const MatrixXd& G);

/// Lower-triangular diffusion matrix with an unconstrained parameterization:
/// K(K+1)/2 reals, row-major over the lower triangle, softplus on the diagonal.
struct DiffusionMatrix {
  MatrixXd G;

  static Index param_count(Index K) { return K * (K + 1) / 2; }
  static DiffusionMatrix from_unconstrained(const VectorXd& eta, Index K);
  VectorXd to_unconstrained() const;

  /// Chain rule: gradient over the lower triangle of G -> gradient over eta.
  static VectorXd chain_to_unconstrained(const MatrixXd& dG, const VectorXd& eta, Index K);
};

double softplus(double x);
double softplus_inverse(double y);

}  // namespace gmsde
