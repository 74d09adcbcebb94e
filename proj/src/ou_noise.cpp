#include "gmsde/ou_noise.hpp"

#include "gmsde/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace gmsde {

double ou_cov(double ti, double tj) {
  return 0.5 * std::exp(-std::abs(ti - tj)) - 0.5 * std::exp(-(ti + tj));
}

MatrixXd omega_one(const VectorXd& t) {
  const Index N = t.size();
  MatrixXd W(N, N);
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j <= i; ++j) W(i, j) = W(j, i) = ou_cov(t[i], t[j]);
  return W;
}

MatrixXd build_B(const MatrixXd& G, Index N) { return kron(G, MatrixXd::Identity(N, N)); }

MatrixXd omega_tilde(const MatrixXd& G, const MatrixXd& Omega_one) {
  return kron(G * G.transpose(), Omega_one);
}

MatrixXd omega_tilde_explicit(const MatrixXd& G, const MatrixXd& Omega_one) {
  const Index K = G.rows();
  const MatrixXd B = build_B(G, Omega_one.rows());
  const MatrixXd Omega = kron(MatrixXd::Identity(K, K), Omega_one);
  return B * Omega * B.transpose();
}

MatrixXd assemble_sigma(const MatrixXd& C_phi, const VectorXd& T_diag,
                        const MatrixXd& OmegaTilde) {
  if (C_phi.rows() != OmegaTilde.rows() || C_phi.cols() != OmegaTilde.cols() ||
      T_diag.size() != C_phi.rows())
    throw std::invalid_argument("assemble_sigma: shape mismatch");
  MatrixXd S = C_phi + OmegaTilde;
  S.diagonal() += T_diag;
  return symmetrize(S);
}

MatrixXd increments_variance(const MatrixXd& G) { return G.transpose() * G; }

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::domain_error("softplus_inverse: argument must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

DiffusionMatrix DiffusionMatrix::from_unconstrained(const VectorXd& eta, Index K) {
  if (eta.size() != param_count(K)) throw std::invalid_argument("diffusion: wrong parameter count");
  DiffusionMatrix d{MatrixXd::Zero(K, K)};
  Index idx = 0;
  for (Index i = 0; i < K; ++i)
    for (Index j = 0; j <= i; ++j, ++idx) d.G(i, j) = (i == j) ? softplus(eta[idx]) : eta[idx];
  return d;
}

VectorXd DiffusionMatrix::to_unconstrained() const {
  const Index K = G.rows();
  VectorXd eta(param_count(K));
  Index idx = 0;
  for (Index i = 0; i < K; ++i)
    for (Index j = 0; j <= i; ++j, ++idx) eta[idx] = (i == j) ? softplus_inverse(G(i, j)) : G(i, j);
  return eta;
}

VectorXd DiffusionMatrix::chain_to_unconstrained(const MatrixXd& dG, const VectorXd& eta, Index K) {
  VectorXd out(param_count(K));
  Index idx = 0;
  for (Index i = 0; i < K; ++i)
    for (Index j = 0; j <= i; ++j, ++idx) {
      const double slope = (i == j) ? 1.0 / (1.0 + std::exp(-eta[idx])) : 1.0;
      out[idx] = dG(i, j) * slope;
    }
  return out;
}

}  // namespace gmsde
