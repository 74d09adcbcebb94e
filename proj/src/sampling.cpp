#include "gmsde/sampling.hpp"

#include <stdexcept>

namespace gmsde {

SdePosterior sde_posteriors(const VectorXd& y_std, const GpCovariances& cov) {
  const Index n = cov.Sigma.rows();
  if (y_std.size() != n) throw std::invalid_argument("sde_posteriors: size mismatch");
  SdePosterior post;
  post.y = y_std;

  MatrixXd CT = cov.C_phi;
  CT.diagonal() += cov.T_diag;

  const auto sigma_chol = robust_cholesky(cov.Sigma, "observation marginal covariance");
  // m_o = Ot Sigma^-1 y ; C_o = Ot Sigma^-1 (C + T)
  post.m_o = cov.OmegaTilde * sigma_chol.solve(y_std);
  post.C_o = symmetrize(cov.OmegaTilde * sigma_chol.solve(CT));

  const auto ct_chol = robust_cholesky(CT, "latent prior plus noise covariance");
  // W_z = C (C + T)^-1 = ((C + T)^-1 C)^T
  post.W_z = ct_chol.solve(cov.C_phi).transpose();
  post.C_z = symmetrize(post.W_z * cov.T_diag.asDiagonal());
  return post;
}

DataPosterior data_posteriors(const VectorXd& y_std, const GpCovariances& cov) {
  const Index n = cov.Sigma.rows();
  if (y_std.size() != n) throw std::invalid_argument("data_posteriors: size mismatch");
  MatrixXd OT = cov.OmegaTilde;
  OT.diagonal() += cov.T_diag;

  const auto sigma_chol = robust_cholesky(cov.Sigma, "observation marginal covariance");
  DataPosterior post;
  // Sigma_z = C Sigma^-1 (Ot + T); mu_z = Sigma_z (Ot + T)^-1 y = C Sigma^-1 y
  post.Sigma = symmetrize(cov.C_phi * sigma_chol.solve(OT));
  post.mu = cov.C_phi * sigma_chol.solve(y_std);
  return post;
}

namespace posterior_forms {

namespace {
MatrixXd inverse(const MatrixXd& A, const char* label) {
  return robust_cholesky(A, label).solve(MatrixXd(MatrixXd::Identity(A.rows(), A.cols())));
}
MatrixXd plus_diag(MatrixXd A, const VectorXd& d) {
  A.diagonal() += d;
  return A;
}
}  // namespace

MatrixXd C_z_information(const GpCovariances& cov) {
  MatrixXd P = inverse(cov.C_phi, "C_phi");
  P.diagonal() += cov.T_diag.cwiseInverse();
  return inverse(symmetrize(P), "C_z precision");
}

MatrixXd C_z_subtractive(const GpCovariances& cov) {
  const MatrixXd CT = plus_diag(cov.C_phi, cov.T_diag);
  return cov.C_phi - cov.C_phi * robust_cholesky(CT, "C + T").solve(cov.C_phi);
}

MatrixXd C_o_information(const GpCovariances& cov) {
  const MatrixXd CT = plus_diag(cov.C_phi, cov.T_diag);
  return inverse(symmetrize(inverse(cov.OmegaTilde, "OmegaTilde") + inverse(CT, "C + T")),
                 "C_o precision");
}

MatrixXd C_o_subtractive(const GpCovariances& cov) {
  return cov.OmegaTilde -
         cov.OmegaTilde * robust_cholesky(cov.Sigma, "Sigma").solve(cov.OmegaTilde);
}

MatrixXd Sigma_z_information(const GpCovariances& cov) {
  const MatrixXd OT = plus_diag(cov.OmegaTilde, cov.T_diag);
  return inverse(symmetrize(inverse(OT, "Ot + T") + inverse(cov.C_phi, "C_phi")),
                 "Sigma_z precision");
}

MatrixXd Sigma_z_subtractive(const GpCovariances& cov) {
  return cov.C_phi - cov.C_phi * robust_cholesky(cov.Sigma, "Sigma").solve(cov.C_phi);
}

MatrixXd Sigma_z_left(const GpCovariances& cov) {
  const MatrixXd OT = plus_diag(cov.OmegaTilde, cov.T_diag);
  return OT * robust_cholesky(cov.Sigma, "Sigma").solve(cov.C_phi);
}

VectorXd mu_z_direct(const VectorXd& y_std, const GpCovariances& cov) {
  const MatrixXd OT = plus_diag(cov.OmegaTilde, cov.T_diag);
  const MatrixXd Sz = symmetrize(cov.C_phi * robust_cholesky(cov.Sigma, "Sigma").solve(OT));
  return Sz * robust_cholesky(OT, "Ot + T").solve(y_std);
}

}  // namespace posterior_forms

MatrixXd standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd xi(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) xi(r, c) = normal(rng);
  return xi;
}

MvnSampler::MvnSampler(VectorXd mean, const MatrixXd& cov, const std::string& label)
    : mean_(std::move(mean)), chol_(robust_cholesky(symmetrize(cov), label)) {
  if (cov.rows() != mean_.size()) throw std::invalid_argument(label + ": mean/cov size mismatch");
}

MatrixXd MvnSampler::draw(Index M, Rng& rng) const {
  const Index d = mean_.size();
  const MatrixXd xi = standard_normal(d, M, rng);
  MatrixXd out(M, d);
  if (chol_.zero)
    out.setZero();
  else
    out.noalias() = (chol_.L.triangularView<Eigen::Lower>() * xi).transpose();
  out.rowwise() += mean_.transpose();
  return out;
}

MatrixXd sample_mvn(const VectorXd& mean, const MatrixXd& cov, Index M, Rng& rng) {
  return MvnSampler(mean, cov, "sample_mvn covariance").draw(M, rng);
}

namespace {

struct SamplerParts {
  SdePosterior sde;
  DataPosterior data;
  MatrixXd D, A;
};

SamplerParts build_parts(const ObservationSet& obs, const GpFitResult& fit,
                         const SamplerOptions& options) {
  const VectorXd y_std = fit.standardizer.standardize(obs.y);
  const auto cov = assemble_covariances(obs.times, fit.hyper);
  SamplerParts parts;
  parts.sde = sde_posteriors(y_std, cov);
  parts.data = data_posteriors(y_std, cov);

  std::vector<MatrixXd> Ds, As;
  for (const auto& spec : fit.hyper.phi) {
    const double scale = gram(spec, obs.times).diagonal().mean();
    auto km = build_kernel_matrices(spec, obs.times, options.kernel_jitter * scale);
    Ds.push_back(std::move(km.D));
    As.push_back(std::move(km.A));
  }
  parts.D = block_diag(Ds);
  parts.A = block_diag(As);
  return parts;
}

}  // namespace

AncestralSampler::AncestralSampler(const ObservationSet& obs, const GpFitResult& fit,
                                   const SdeSystem& system, const SamplerOptions& options)
    : N_(obs.N()),
      K_(obs.K()),
      system_(system),
      standardizer_(fit.standardizer) {
  if (K_ != system.K)
    throw std::invalid_argument("sampler: observations have " + std::to_string(K_) +
                                " states but system '" + system.name + "' has " +
                                std::to_string(system.K));
  if (fit.hyper.K() != K_ || standardizer_.N != N_)
    throw std::invalid_argument("sampler: fit does not match the observation set");
  auto parts = build_parts(obs, fit, options);
  sde_post_ = std::move(parts.sde);
  data_post_ = std::move(parts.data);
  D_ = std::move(parts.D);
  A_ = std::move(parts.A);
  o_sampler_ = MvnSampler(sde_post_.m_o, sde_post_.C_o, "OU posterior covariance C_o");
  z_factor_ = robust_cholesky(sde_post_.C_z, "latent posterior covariance C_z").L;
  zd_sampler_ = MvnSampler(data_post_.mu, data_post_.Sigma, "data posterior covariance Sigma_z");
  A_factor_ = robust_cholesky(A_, "derivative covariance A").L;
}

LatentDraw AncestralSampler::draw_latent(Index M, Rng& rng) const {
  LatentDraw d;
  d.o = o_sampler_.draw(M, rng);
  // z | o ~ N(W_z (y - o), C_z) using the same o realization.
  const MatrixXd xi = standard_normal(dim(), M, rng);
  d.z.noalias() = (sde_post_.W_z * (sde_post_.y.replicate(1, M) - d.o.transpose())).transpose();
  d.z.noalias() += (z_factor_.triangularView<Eigen::Lower>() * xi).transpose();
  d.x.resize(M, dim());
  for (Index k = 0; k < K_; ++k) {
    d.x.middleCols(k * N_, N_) =
        ((d.z.middleCols(k * N_, N_) + d.o.middleCols(k * N_, N_)).array() *
             standardizer_.scale[k] +
         standardizer_.mean[k])
            .matrix();
  }
  return d;
}

MatrixXd AncestralSampler::draw_data_derivatives(Index M, Rng& rng) const {
  const MatrixXd zd = zd_sampler_.draw(M, rng);
  const MatrixXd xi = standard_normal(dim(), M, rng);
  MatrixXd out(M, dim());
  out.noalias() = zd * D_.transpose();
  out.noalias() += (A_factor_.triangularView<Eigen::Lower>() * xi).transpose();
  return out;
}

MatrixXd AncestralSampler::sde_derivatives(const LatentDraw& latent, const VectorXd& theta) const {
  const Index M = latent.x.rows();
  MatrixXd out = latent.o;
  VectorXd state(K_);
  for (Index i = 0; i < M; ++i)
    for (Index n = 0; n < N_; ++n) {
      for (Index k = 0; k < K_; ++k) state[k] = latent.x(i, k * N_ + n);
      const VectorXd f = system_.drift(state, theta);
      for (Index k = 0; k < K_; ++k) out(i, k * N_ + n) += f[k] / standardizer_.scale[k];
    }
  return out;
}

std::vector<MatrixXd> AncestralSampler::sde_batch_grad_theta(const LatentDraw& latent,
                                                             const VectorXd& theta) const {
  const Index M = latent.x.rows();
  const Index P = system_.P;
  std::vector<MatrixXd> out(static_cast<std::size_t>(M), MatrixXd(dim(), P));
  VectorXd state(K_);
  for (Index i = 0; i < M; ++i)
    for (Index n = 0; n < N_; ++n) {
      for (Index k = 0; k < K_; ++k) state[k] = latent.x(i, k * N_ + n);
      const MatrixXd J = system_.drift_grad_theta(state, theta);
      for (Index k = 0; k < K_; ++k)
        out[static_cast<std::size_t>(i)].row(k * N_ + n) = J.row(k) / standardizer_.scale[k];
    }
  return out;
}

VectorXd AncestralSampler::contract_theta_grad(const LatentDraw& latent, const VectorXd& theta,
                                               const MatrixXd& upstream) const {
  const Index M = latent.x.rows();
  if (upstream.rows() != M || upstream.cols() != dim())
    throw std::invalid_argument("contract_theta_grad: upstream shape mismatch");
  VectorXd g = VectorXd::Zero(system_.P);
  VectorXd state(K_), w(K_);
  for (Index i = 0; i < M; ++i)
    for (Index n = 0; n < N_; ++n) {
      for (Index k = 0; k < K_; ++k) {
        state[k] = latent.x(i, k * N_ + n);
        w[k] = upstream(i, k * N_ + n) / standardizer_.scale[k];
      }
      g.noalias() += system_.drift_grad_theta(state, theta).transpose() * w;
    }
  return g;
}

AncestralSampler::Batches AncestralSampler::sample(const VectorXd& theta, Index M, Rng& rng) const {
  Batches b;
  b.latent = draw_latent(M, rng);
  b.data.samples = draw_data_derivatives(M, rng);
  b.data.source = DerivativeSource::Data;
  b.sde.samples = sde_derivatives(b.latent, theta);
  b.sde.source = DerivativeSource::Sde;
  return b;
}

}  // namespace gmsde
