#pragma once

#include "gmsde/gpfit.hpp"
#include "gmsde/kernels.hpp"
#include "gmsde/linalg.hpp"
#include "gmsde/models.hpp"

#include <random>
#include <vector>

namespace gmsde {

using Rng = std::mt19937_64;

/// p(o | y) = N(m_o, C_o) and p(z | o, y) = N(W_z (y - o), C_z), standardized units.
struct SdePosterior {
  VectorXd y;
  VectorXd m_o;
  MatrixXd C_o;
  MatrixXd W_z;  // C_phi (C_phi + T)^-1
  MatrixXd C_z;

  VectorXd m_z(const VectorXd& o) const { return W_z * (y - o); }
};

/// p(z | y) with o marginalized out.
struct DataPosterior {
  VectorXd mu;
  MatrixXd Sigma;
};

SdePosterior sde_posteriors(const VectorXd& y_std, const GpCovariances& cov);
DataPosterior data_posteriors(const VectorXd& y_std, const GpCovariances& cov);

/// Algebraically equivalent forms of the posterior covariances, used to
/// cross-check the production (Woodbury) forms. They invert C_phi, T and
/// OmegaTilde directly and need those to be well conditioned.
namespace posterior_forms {
MatrixXd C_z_information(const GpCovariances& cov);  // (C^-1 + T^-1)^-1
MatrixXd C_z_subtractive(const GpCovariances& cov);  // C - C (C + T)^-1 C
MatrixXd C_o_information(const GpCovariances& cov);  // (Ot^-1 + (C + T)^-1)^-1
MatrixXd C_o_subtractive(const GpCovariances& cov);  // Ot - Ot Sigma^-1 Ot
MatrixXd Sigma_z_information(const GpCovariances& cov);  // ((Ot + T)^-1 + C^-1)^-1
MatrixXd Sigma_z_subtractive(const GpCovariances& cov);  // C - C Sigma^-1 C
MatrixXd Sigma_z_left(const GpCovariances& cov);         // (Ot + T) Sigma^-1 C
VectorXd mu_z_direct(const VectorXd& y_std, const GpCovariances& cov);  // Sigma_z (Ot + T)^-1 y
}  // namespace posterior_forms

/// Pre-factored multivariate normal.
class MvnSampler {
 public:
  MvnSampler() = default;
  MvnSampler(VectorXd mean, const MatrixXd& cov, const std::string& label);

  /// M x d, one draw per row; draws consume the RNG sample by sample.
  MatrixXd draw(Index M, Rng& rng) const;
  const MatrixXd& factor() const { return chol_.L; }
  const VectorXd& mean() const { return mean_; }

 private:
  VectorXd mean_;
  RobustCholesky chol_;
};

/// Standard normal matrix of size rows x cols filled column by column.
MatrixXd standard_normal(Index rows, Index cols, Rng& rng);

MatrixXd sample_mvn(const VectorXd& mean, const MatrixXd& cov, Index M, Rng& rng);

enum class DerivativeSource { Sde, Data };

struct DerivativeBatch {
  MatrixXd samples;  // M x NK, standardized state per time unit
  DerivativeSource source = DerivativeSource::Sde;
};

/// theta-independent part of an SDE-model draw. Rows are samples.
struct LatentDraw {
  MatrixXd o;  // standardized
  MatrixXd z;  // standardized
  MatrixXd x;  // original units: mu_y + sigma_y (z + o)
};

struct SamplerOptions {
  double kernel_jitter = 1e-6;  // relative to mean(diag) of each state's Gram matrix
};

/// Ancestral sampler for both generative models of the latent derivatives.
class AncestralSampler {
 public:
  AncestralSampler(const ObservationSet& obs, const GpFitResult& fit, const SdeSystem& system,
                   const SamplerOptions& options = {});

  struct Batches {
    DerivativeBatch sde;
    DerivativeBatch data;
    LatentDraw latent;
  };

  /// Draws o_s, z_s (shared realization), then z_d and zdot_d, then evaluates zdot_s.
  Batches sample(const VectorXd& theta, Index M, Rng& rng) const;

  LatentDraw draw_latent(Index M, Rng& rng) const;
  MatrixXd draw_data_derivatives(Index M, Rng& rng) const;

  /// zdot_s = f(x, theta) / sigma_y + o, per row of the latent draw.
  MatrixXd sde_derivatives(const LatentDraw& latent, const VectorXd& theta) const;

  /// Per-sample Jacobians d zdot_s / d theta, each NK x P.
  std::vector<MatrixXd> sde_batch_grad_theta(const LatentDraw& latent, const VectorXd& theta) const;

  /// sum_i sum_j upstream(i, j) d zdot_s(i, j) / d theta, without materializing Jacobians.
  VectorXd contract_theta_grad(const LatentDraw& latent, const VectorXd& theta,
                               const MatrixXd& upstream) const;

  Index N() const { return N_; }
  Index K() const { return K_; }
  Index dim() const { return N_ * K_; }
  const SdePosterior& sde_posterior() const { return sde_post_; }
  const DataPosterior& data_posterior() const { return data_post_; }
  const MatrixXd& D() const { return D_; }
  const MatrixXd& A() const { return A_; }
  const SdeSystem& system() const { return system_; }

 private:
  Index N_, K_;
  SdeSystem system_;
  Standardizer standardizer_;
  SdePosterior sde_post_;
  DataPosterior data_post_;
  MatrixXd D_, A_;  // block diagonal over states
  MvnSampler o_sampler_;
  MatrixXd z_factor_;  // Cholesky factor of C_z
  MvnSampler zd_sampler_;
  MatrixXd A_factor_;
};

}  // namespace gmsde
