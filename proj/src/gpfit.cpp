#include "gmsde/gpfit.hpp"

#include "gmsde/linalg.hpp"
#include "gmsde/optim.hpp"
#include "gmsde/ou_noise.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace gmsde {

Standardizer Standardizer::fit(const ObservationSet& obs) {
  Standardizer s;
  s.N = obs.N();
  s.mean = obs.Y.rowwise().mean();
  s.scale.resize(obs.K());
  for (Index k = 0; k < obs.K(); ++k) {
    const double sd = std::sqrt((obs.Y.row(k).array() - s.mean[k]).square().mean());
    s.scale[k] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

VectorXd Standardizer::mu_y() const {
  VectorXd mu(mean.size() * N);
  for (Index k = 0; k < mean.size(); ++k) mu.segment(k * N, N).setConstant(mean[k]);
  return mu;
}

VectorXd Standardizer::standardize(const VectorXd& y) const {
  VectorXd out(y.size());
  for (Index k = 0; k < mean.size(); ++k)
    out.segment(k * N, N) = (y.segment(k * N, N).array() - mean[k]) / scale[k];
  return out;
}

VectorXd Standardizer::destandardize(const VectorXd& y_std) const {
  VectorXd out(y_std.size());
  for (Index k = 0; k < mean.size(); ++k)
    out.segment(k * N, N) = y_std.segment(k * N, N).array() * scale[k] + mean[k];
  return out;
}

Index GpHyper::packed_size(KernelKind kind, Index K) {
  return K * KernelSpec::param_count(kind) + K + DiffusionMatrix::param_count(K);
}

VectorXd GpHyper::pack() const {
  const Index K = this->K();
  VectorXd eta(packed_size(kind(), K));
  Index idx = 0;
  for (const auto& spec : phi) {
    eta.segment(idx, spec.params.size()) = spec.params.array().log();
    idx += spec.params.size();
  }
  eta.segment(idx, K) = sigma.array().log();
  idx += K;
  eta.tail(DiffusionMatrix::param_count(K)) = DiffusionMatrix{G_std}.to_unconstrained();
  return eta;
}

GpHyper GpHyper::unpack(const VectorXd& eta, KernelKind kind, Index K) {
  if (eta.size() != packed_size(kind, K)) throw std::invalid_argument("GpHyper::unpack: bad size");
  GpHyper h;
  const Index P = KernelSpec::param_count(kind);
  Index idx = 0;
  for (Index k = 0; k < K; ++k, idx += P)
    h.phi.push_back({kind, eta.segment(idx, P).array().exp().matrix()});
  h.sigma = eta.segment(idx, K).array().exp();
  idx += K;
  h.G_std = DiffusionMatrix::from_unconstrained(eta.tail(DiffusionMatrix::param_count(K)), K).G;
  return h;
}

GpCovariances assemble_covariances(const VectorXd& t, const GpHyper& h, bool explicit_B) {
  const Index K = h.K();
  const Index N = t.size();
  if (static_cast<Index>(h.phi.size()) != K || h.G_std.rows() != K)
    throw std::invalid_argument("assemble_covariances: inconsistent state dimension");
  GpCovariances c;
  std::vector<MatrixXd> blocks;
  blocks.reserve(K);
  for (const auto& spec : h.phi) blocks.push_back(gram(spec, t));
  c.C_phi = block_diag(blocks);
  c.T_diag.resize(N * K);
  for (Index k = 0; k < K; ++k) c.T_diag.segment(k * N, N).setConstant(h.sigma[k] * h.sigma[k]);
  c.Omega_one = omega_one(t);
  c.OmegaTilde = explicit_B ? omega_tilde_explicit(h.G_std, c.Omega_one)
                            : omega_tilde(h.G_std, c.Omega_one);
  c.Sigma = assemble_sigma(c.C_phi, c.T_diag, c.OmegaTilde);
  return c;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gaussian_log_density(const RobustCholesky& chol, const VectorXd& y, VectorXd* alpha_out) {
  const VectorXd alpha = chol.solve(y);
  const double value =
      -0.5 * y.dot(alpha) - 0.5 * chol.log_det() - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
  if (alpha_out) *alpha_out = alpha;
  return value;
}

}  // namespace

double log_evidence(const VectorXd& y_std, const VectorXd& t, const GpHyper& h, bool explicit_B) {
  const auto cov = assemble_covariances(t, h, explicit_B);
  if (y_std.size() != cov.Sigma.rows()) throw std::invalid_argument("log_evidence: size mismatch");
  const auto chol = robust_cholesky(cov.Sigma, "evidence covariance");
  return gaussian_log_density(chol, y_std, nullptr);
}

EvidenceGradient evidence_natural_grad(const VectorXd& y_std, const VectorXd& t,
                                       const GpHyper& h) {
  const Index K = h.K();
  const Index N = t.size();
  const auto cov = assemble_covariances(t, h);
  const auto chol = robust_cholesky(cov.Sigma, "evidence covariance");

  EvidenceGradient g;
  VectorXd alpha;
  g.value = gaussian_log_density(chol, y_std, &alpha);

  // dL/dtheta = 1/2 tr(Q dSigma), Q = alpha alpha^T - Sigma^-1
  const MatrixXd Q = alpha * alpha.transpose() - chol.solve(MatrixXd(MatrixXd::Identity(N * K, N * K)));

  g.d_phi.resize(K);
  g.d_sigma.resize(K);
  MatrixXd R(K, K);
  for (Index k = 0; k < K; ++k) {
    const auto Qkk = Q.block(k * N, k * N, N, N);
    const auto dC = kernel_param_grads(h.phi[k], t);
    g.d_phi[k].resize(static_cast<Index>(dC.size()));
    for (std::size_t p = 0; p < dC.size(); ++p)
      g.d_phi[k][static_cast<Index>(p)] = 0.5 * Qkk.cwiseProduct(dC[p]).sum();
    g.d_sigma[k] = h.sigma[k] * Qkk.trace();
    for (Index l = 0; l < K; ++l)
      R(k, l) = Q.block(k * N, l * N, N, N).cwiseProduct(cov.Omega_one).sum();
  }
  // OmegaTilde = (G G^T) ⊗ Omega_one  =>  dL/dG = R G
  g.d_G = (R * h.G_std).triangularView<Eigen::Lower>();
  return g;
}

EvidenceValue evidence_grad(const VectorXd& y_std, const VectorXd& t, const VectorXd& eta,
                            KernelKind kind, Index K) {
  const GpHyper h = GpHyper::unpack(eta, kind, K);
  const auto g = evidence_natural_grad(y_std, t, h);
  EvidenceValue out;
  out.value = g.value;
  out.grad.resize(eta.size());
  Index idx = 0;
  for (Index k = 0; k < K; ++k) {
    const auto& p = h.phi[k].params;
    out.grad.segment(idx, p.size()) = g.d_phi[k].cwiseProduct(p);
    idx += p.size();
  }
  out.grad.segment(idx, K) = g.d_sigma.cwiseProduct(h.sigma);
  idx += K;
  out.grad.tail(DiffusionMatrix::param_count(K)) =
      DiffusionMatrix::chain_to_unconstrained(g.d_G, eta.tail(DiffusionMatrix::param_count(K)), K);
  return out;
}

AscentResult ascend_evidence(const VectorXd& y_std, const VectorXd& t, KernelKind kind, Index K,
                             VectorXd eta, const VectorXd& mask, double lr, int iterations) {
  AdamState adam(eta.size());
  AscentResult best{eta, -std::numeric_limits<double>::infinity(), {}};
  best.trace.reserve(static_cast<std::size_t>(iterations));
  for (int it = 0; it < iterations; ++it) {
    EvidenceValue ev;
    try {
      ev = evidence_grad(y_std, t, eta, kind, K);
    } catch (const FactorizationError&) {
      if (it == 0) throw;
      break;
    }
    if (!std::isfinite(ev.value) || !ev.grad.allFinite()) {
      if (it == 0) throw std::runtime_error("gp fit: non-finite evidence at the initial point");
      break;
    }
    best.trace.push_back(ev.value);
    if (ev.value > best.value) {
      best.value = ev.value;
      best.eta = eta;
    }
    // Adam descends; ascend the evidence by negating the gradient.
    adam.step(eta, -ev.grad.cwiseProduct(mask), lr);
    // Keep log-parameters in a range where the covariance stays representable.
    eta = eta.cwiseMax(-12.0).cwiseMin(12.0);
  }
  return best;
}

namespace {

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return u(rng);
}

VectorXd random_start(const VectorXd& t, KernelKind kind, Index K, std::mt19937_64& rng) {
  const double span = t.maxCoeff() - t.minCoeff();
  GpHyper h;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index k = 0; k < K; ++k) {
    if (kind == KernelKind::Rbf) {
      h.phi.push_back(KernelSpec::rbf(std::exp(log_uniform(rng, 0.3, 3.0)),
                                      std::exp(log_uniform(rng, 0.02 * span, 0.3 * span))));
    } else {
      h.phi.push_back(KernelSpec::sigmoid(std::exp(log_uniform(rng, 0.3, 3.0)),
                                          std::exp(log_uniform(rng, 0.01, 10.0)),
                                          std::exp(log_uniform(rng, 0.01, 10.0))));
    }
  }
  h.sigma.resize(K);
  for (Index k = 0; k < K; ++k) h.sigma[k] = std::exp(log_uniform(rng, 0.01, 0.3));
  h.G_std = MatrixXd::Zero(K, K);
  for (Index k = 0; k < K; ++k) h.G_std(k, k) = 0.05 + 0.45 * unif(rng);
  return h.pack();
}

}  // namespace

MatrixXd GpFitResult::H() const { return increments_variance(G); }

GpFitResult fit(const ObservationSet& obs, KernelKind kind, const GpFitOptions& opts) {
  const Index K = obs.K();
  const Index N = obs.N();
  if (N < 5) throw std::invalid_argument("gp fit: need at least 5 observations per state");
  if (opts.restarts < 1 || opts.iterations < 1)
    throw std::invalid_argument("gp fit: restarts and iterations must be positive");

  GpFitResult out;
  out.standardizer = Standardizer::fit(obs);
  out.seed = opts.seed;
  const VectorXd y_std = out.standardizer.standardize(obs.y);

  const VectorXd mask = VectorXd::Ones(GpHyper::packed_size(kind, K));

  std::mt19937_64 rng(opts.seed);
  std::optional<AscentResult> best;
  for (int r = 0; r < opts.restarts; ++r) {
    VectorXd eta0 = random_start(obs.times, kind, K, rng);
    try {
      auto res = ascend_evidence(y_std, obs.times, kind, K, std::move(eta0), mask,
                                 opts.learning_rate, opts.iterations);
      if (!best || res.value > best->value) best = std::move(res);
    } catch (const std::exception&) {
      ++out.failed_restarts;
    }
  }
  if (!best) throw std::runtime_error("gp fit: every restart failed to factorize the covariance");

  out.hyper = GpHyper::unpack(best->eta, kind, K);
  out.log_evidence = best->value;
  out.trace = std::move(best->trace);
  out.G = out.standardizer.scale.asDiagonal() * out.hyper.G_std;
  return out;
}

namespace {

nlohmann::json matrix_json(const MatrixXd& M) {
  nlohmann::json j = nlohmann::json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < M.cols(); ++c) row.push_back(M(i, c));
    j.push_back(row);
  }
  return j;
}

nlohmann::json vector_json(const VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

MatrixXd json_matrix(const nlohmann::json& j) {
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
  MatrixXd M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (static_cast<Index>(j.at(i).size()) != cols) throw std::invalid_argument("ragged matrix");
    for (Index c = 0; c < cols; ++c) M(i, c) = j.at(i).at(c).get<double>();
  }
  return M;
}

VectorXd json_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const GpFitResult& fit) {
  nlohmann::json j;
  j["kernel"] = to_string(fit.hyper.kind());
  j["phi"] = nlohmann::json::array();
  for (const auto& spec : fit.hyper.phi) {
    nlohmann::json p;
    const auto names = KernelSpec::param_names(spec.kind);
    for (std::size_t i = 0; i < names.size(); ++i) p[names[i]] = spec.params[static_cast<Index>(i)];
    j["phi"].push_back(p);
  }
  j["sigma"] = vector_json(fit.hyper.sigma);
  j["G_std"] = matrix_json(fit.hyper.G_std);
  j["G"] = matrix_json(fit.G);
  j["H"] = matrix_json(fit.H());
  j["log_evidence"] = fit.log_evidence;
  j["seed"] = fit.seed;
  j["failed_restarts"] = fit.failed_restarts;
  j["standardizer"] = {{"mean", vector_json(fit.standardizer.mean)},
                       {"scale", vector_json(fit.standardizer.scale)},
                       {"N", fit.standardizer.N}};
  return j;
}

GpFitResult gpfit_from_json(const nlohmann::json& j) {
  GpFitResult fit;
  const KernelKind kind = kernel_kind_from_string(j.at("kernel").get<std::string>());
  const auto names = KernelSpec::param_names(kind);
  for (const auto& p : j.at("phi")) {
    KernelSpec spec{kind, VectorXd(static_cast<Index>(names.size()))};
    for (std::size_t i = 0; i < names.size(); ++i)
      spec.params[static_cast<Index>(i)] = p.at(names[i]).get<double>();
    fit.hyper.phi.push_back(spec);
  }
  fit.hyper.sigma = json_vector(j.at("sigma"));
  fit.hyper.G_std = json_matrix(j.at("G_std"));
  fit.G = json_matrix(j.at("G"));
  fit.log_evidence = j.at("log_evidence").get<double>();
  fit.seed = j.at("seed").get<std::uint64_t>();
  fit.failed_restarts = j.value("failed_restarts", 0);
  const auto& s = j.at("standardizer");
  fit.standardizer.mean = json_vector(s.at("mean"));
  fit.standardizer.scale = json_vector(s.at("scale"));
  fit.standardizer.N = s.at("N").get<Index>();
  const Index K = fit.hyper.sigma.size();
  if (static_cast<Index>(fit.hyper.phi.size()) != K || fit.hyper.G_std.rows() != K ||
      fit.standardizer.mean.size() != K)
    throw std::invalid_argument("fit json: inconsistent state dimension");
  return fit;
}

}  // namespace gmsde
