#include "gmsde/ou_noise.hpp"
#include "gmsde/sampling.hpp"
#include "instances.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace gmsde;

using testing::condition;
using testing::fit_for;
using testing::max_abs;
using testing::observations_for;
using testing::random_instance;

TEST_CASE("posteriors equal brute-force joint Gaussian conditioning") {
  std::mt19937_64 rng(8);
  double worst = 0.0, worst_forms = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index K = 1 + trial % 2, N = 3 + trial % 6;
    const auto in = random_instance(rng, K, N);
    const auto& c = in.cov;
    const Index n = N * K;
    MatrixXd T = in.cov.T_diag.asDiagonal();

    // joint of (z, o, y): z ~ C, o ~ Ot, y = z + o + e
    const MatrixXd Syy = c.C_phi + c.OmegaTilde + T;
    const auto o_post = condition(c.OmegaTilde, c.OmegaTilde, Syy, in.y);
    const auto sde = sde_posteriors(in.y, c);
    worst = std::max({worst, (sde.m_o - o_post.mean).cwiseAbs().maxCoeff(), max_abs(sde.C_o, o_post.cov)});

    MatrixXd Sbb(2 * n, 2 * n), Szb(n, 2 * n);
    Sbb << c.OmegaTilde, c.OmegaTilde, c.OmegaTilde, Syy;
    Szb << MatrixXd::Zero(n, n), c.C_phi;
    const VectorXd o = testing::random_matrix(n, 1, rng);
    VectorXd ob(2 * n);
    ob << o, in.y;
    const auto z_post = condition(c.C_phi, Szb, Sbb, ob);
    worst = std::max({worst, (sde.m_z(o) - z_post.mean).cwiseAbs().maxCoeff(), max_abs(sde.C_z, z_post.cov)});

    const auto zy = condition(c.C_phi, c.C_phi, Syy, in.y);
    const auto data = data_posteriors(in.y, c);
    worst = std::max({worst, (data.mu - zy.mean).cwiseAbs().maxCoeff(), max_abs(data.Sigma, zy.cov)});

    // derivative process given z, per state
    for (const auto& spec : in.h.phi) {
      const auto km = build_kernel_matrices(spec, in.t, 0.0);
      MatrixXd Cj = km.C;
      Cj.diagonal().array() += km.jitter;
      // z drawn from its prior; directions C cannot produce are not meaningful to condition on
      const VectorXd zk = Eigen::LLT<MatrixXd>(Cj).matrixL() * testing::random_matrix(N, 1, rng);
      const auto dz = condition(km.Cpp, km.Cp, Cj, zk);
      worst = std::max({worst, (km.D * zk - dz.mean).cwiseAbs().maxCoeff(), max_abs(km.A, dz.cov)});
    }

    using namespace posterior_forms;
    worst_forms = std::max({worst_forms, max_abs(C_z_information(c), sde.C_z), max_abs(C_z_subtractive(c), sde.C_z),
                            max_abs(C_o_information(c), sde.C_o), max_abs(C_o_subtractive(c), sde.C_o),
                            max_abs(Sigma_z_information(c), data.Sigma), max_abs(Sigma_z_subtractive(c), data.Sigma),
                            max_abs(Sigma_z_left(c), data.Sigma),
                            (mu_z_direct(in.y, c) - data.mu).cwiseAbs().maxCoeff()});
  }
  INFO("oracle " << worst << " forms " << worst_forms);
  CHECK(worst < 1e-8);
  CHECK(worst_forms < 1e-8);
}

TEST_CASE("Sigma matches Monte Carlo of independently generated observations") {
  std::mt19937_64 rng(9);
  const Index K = 2, N = 5, n = 100000;
  const auto in = random_instance(rng, K, N);
  std::normal_distribution<double> normal;
  std::vector<Eigen::LLT<MatrixXd>> chols;
  for (const auto& spec : in.h.phi) {
    MatrixXd C(N, N);
    for (Index i = 0; i < N; ++i)
      for (Index j = 0; j < N; ++j) C(i, j) = kernel_eval(spec, in.t[i], in.t[j]);
    C.diagonal().array() += 1e-12;
    chols.emplace_back(C);
  }
  MatrixXd draws(n, N * K);
  VectorXd xi(N), ohat(K), prev(K);
  for (Index s = 0; s < n; ++s) {
    for (Index k = 0; k < K; ++k) {
      for (Index i = 0; i < N; ++i) xi[i] = normal(rng);
      draws.row(s).segment(k * N, N) = (chols[k].matrixL() * xi).transpose();
    }
    ohat.setZero();
    double tp = 0.0;
    for (Index i = 0; i < N; ++i) {
      const double dt = in.t[i] - tp;
      for (Index k = 0; k < K; ++k)
        ohat[k] = std::exp(-dt) * ohat[k] + std::sqrt(0.5 * (1 - std::exp(-2 * dt))) * normal(rng);
      const VectorXd o = in.h.G_std * ohat;
      for (Index k = 0; k < K; ++k) draws(s, k * N + i) += o[k] + in.h.sigma[k] * normal(rng);
      tp = in.t[i];
    }
  }
  const MatrixXd emp = draws.transpose() * draws / static_cast<double>(n);
  CHECK(testing::cov_z_score(emp, in.cov.Sigma, n) < 5.0);
}

TEST_CASE("ancestral samples have the analytic moments") {
  std::mt19937_64 rng(10);
  const Index K = 2, N = 5, M = 100000;
  auto in = random_instance(rng, K, N);
  const auto obs = observations_for(in, K);
  const auto fitres = fit_for(obs, in.h);
  const AncestralSampler sampler(obs, fitres, lotka_volterra(), SamplerOptions{0.0});
  const auto& sp = sampler.sde_posterior();
  const auto& dp = sampler.data_posterior();

  Rng r(77);
  const auto b = sampler.sample(lotka_volterra().theta_true, M, r);

  auto mean_z = [&](const MatrixXd& X, const VectorXd& mu, const MatrixXd& cov) {
    const VectorXd m = X.colwise().mean().transpose();
    double worst = 0.0;
    for (Index i = 0; i < m.size(); ++i)
      worst = std::max(worst, std::abs(m[i] - mu[i]) / std::sqrt(std::max(cov(i, i), 1e-300) / M));
    return worst;
  };
  CHECK(mean_z(b.latent.o, sp.m_o, sp.C_o) < 5.0);
  CHECK(testing::cov_z_score(testing::sample_cov(b.latent.o), sp.C_o, M) < 5.0);

  const MatrixXd z_cov = sp.C_z + sp.W_z * sp.C_o * sp.W_z.transpose();
  const VectorXd z_mean = sp.W_z * (sp.y - sp.m_o);
  CHECK(mean_z(b.latent.z, z_mean, z_cov) < 5.0);
  CHECK(testing::cov_z_score(testing::sample_cov(b.latent.z), z_cov, M) < 5.0);

  const MatrixXd d_cov = sampler.D() * dp.Sigma * sampler.D().transpose() + sampler.A();
  const VectorXd d_mean = sampler.D() * dp.mu;
  CHECK(mean_z(b.data.samples, d_mean, d_cov) < 5.0);
  CHECK(testing::cov_z_score(testing::sample_cov(b.data.samples), d_cov, M) < 5.0);
}

TEST_CASE("MvnSampler moments") {
  std::mt19937_64 rng(12);
  const MatrixXd R = testing::random_matrix(4, 4, rng);
  const MatrixXd S = R * R.transpose() + 0.1 * MatrixXd::Identity(4, 4);
  const VectorXd mu = testing::random_matrix(4, 1, rng);
  Rng r(3);
  const Index M = 100000;
  const MatrixXd X = sample_mvn(mu, S, M, r);
  CHECK(X.rows() == M);
  CHECK(testing::cov_z_score(testing::sample_cov(X), S, M) < 5.0);
  const MatrixXd Z = MvnSampler(mu, MatrixXd::Zero(4, 4), "zero").draw(10, r);
  for (Index i = 0; i < 10; ++i) CHECK(Z.row(i).transpose() == mu);
}

TEST_CASE("SDE derivative Jacobians match finite differences under common random numbers") {
  std::mt19937_64 rng(13);
  const Index K = 2, N = 6;
  auto in = random_instance(rng, K, N);
  const auto obs = observations_for(in, K);
  const AncestralSampler sampler(obs, fit_for(obs, in.h), lotka_volterra());
  Rng r(5);
  const auto latent = sampler.draw_latent(4, r);
  const VectorXd theta = lotka_volterra().theta_true;
  const auto J = sampler.sde_batch_grad_theta(latent, theta);
  for (Index p = 0; p < theta.size(); ++p) {
    VectorXd up = theta, dn = theta;
    up[p] += 1e-6;
    dn[p] -= 1e-6;
    const MatrixXd fd = (sampler.sde_derivatives(latent, up) - sampler.sde_derivatives(latent, dn)) / 2e-6;
    for (Index i = 0; i < 4; ++i)
      CHECK(testing::rel_err(VectorXd(J[i].col(p)), VectorXd(fd.row(i).transpose())) < 1e-6);
  }
  const MatrixXd U = testing::random_matrix(4, N * K, rng);
  VectorXd expected = VectorXd::Zero(theta.size());
  for (Index i = 0; i < 4; ++i) expected += J[i].transpose() * U.row(i).transpose();
  CHECK(testing::rel_err(sampler.contract_theta_grad(latent, theta, U), expected) < 1e-12);
}

TEST_CASE("latent draws share the OU realization") {
  // With no observation noise, z | o, y collapses onto y - o, so x = z + o reproduces y.
  std::mt19937_64 rng(14);
  auto in = random_instance(rng, 1, 6);
  in.h.sigma.setConstant(1e-9);
  const auto obs = observations_for(in, 1);
  const AncestralSampler sampler(obs, fit_for(obs, in.h), ornstein_uhlenbeck());
  Rng r(6);
  const auto latent = sampler.draw_latent(50, r);
  for (Index i = 0; i < 50; ++i) CHECK((latent.x.row(i).transpose() - obs.y).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("sampling is deterministic given the RNG state") {
  std::mt19937_64 rng(15);
  auto in = random_instance(rng, 1, 6);
  const auto obs = observations_for(in, 1);
  const AncestralSampler sampler(obs, fit_for(obs, in.h), ornstein_uhlenbeck());
  Rng a(1), b(1);
  const VectorXd theta = ornstein_uhlenbeck().theta_true;
  const auto x = sampler.sample(theta, 8, a);
  const auto y = sampler.sample(theta, 8, b);
  CHECK(x.sde.samples == y.sde.samples);
  CHECK(x.data.samples == y.data.samples);
  CHECK(x.sde.source == DerivativeSource::Sde);
  CHECK(x.data.source == DerivativeSource::Data);
  CHECK(x.sde.samples.allFinite());
  CHECK_THROWS_AS(AncestralSampler(obs, fit_for(obs, in.h), lotka_volterra()), std::invalid_argument);
}
