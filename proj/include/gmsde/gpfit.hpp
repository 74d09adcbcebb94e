#pragma once

#include "gmsde/kernels.hpp"
#include "gmsde/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace gmsde {

/// State-wise affine map to zero mean, unit standard deviation.
struct Standardizer {
  VectorXd mean;   // K
  VectorXd scale;  // K, sigma_y
  Index N = 0;

  static Standardizer fit(const ObservationSet& obs);
  VectorXd mu_y() const;  // NK, each mean repeated N times
  VectorXd standardize(const VectorXd& y) const;
  VectorXd destandardize(const VectorXd& y_std) const;
};

/// Observation-model hyperparameters in standardized units.
struct GpHyper {
  std::vector<KernelSpec> phi;  // one kernel per state
  VectorXd sigma;               // observation noise std per state
  MatrixXd G_std;               // lower-triangular diffusion

  Index K() const { return sigma.size(); }
  KernelKind kind() const { return phi.front().kind; }

  /// Unconstrained vector: per-state log kernel params, then log sigma, then
  /// the softplus-diagonal lower triangle of G_std.
  VectorXd pack() const;
  static GpHyper unpack(const VectorXd& eta, KernelKind kind, Index K);
  static Index packed_size(KernelKind kind, Index K);
};

/// Covariance blocks of the observation marginal y ~ N(0, Sigma).
struct GpCovariances {
  MatrixXd C_phi;       // NK x NK block diagonal
  VectorXd T_diag;      // NK
  MatrixXd Omega_one;   // N x N
  MatrixXd OmegaTilde;  // NK x NK
  MatrixXd Sigma;
};

GpCovariances assemble_covariances(const VectorXd& t, const GpHyper& h, bool explicit_B = false);

/// log N(y | 0, C_phi + T + B Omega B^T).
double log_evidence(const VectorXd& y_std, const VectorXd& t, const GpHyper& h,
                    bool explicit_B = false);

/// Evidence and its gradient with respect to the natural parameters.
struct EvidenceGradient {
  double value = 0.0;
  std::vector<VectorXd> d_phi;  // per state, per kernel parameter
  VectorXd d_sigma;
  MatrixXd d_G;  // lower triangle meaningful
};

EvidenceGradient evidence_natural_grad(const VectorXd& y_std, const VectorXd& t, const GpHyper& h);

struct EvidenceValue {
  double value = 0.0;
  VectorXd grad;  // over GpHyper::pack() coordinates
};

EvidenceValue evidence_grad(const VectorXd& y_std, const VectorXd& t, const VectorXd& eta,
                            KernelKind kind, Index K);

struct GpFitOptions {
  double learning_rate = 0.05;
  int iterations = 2000;
  int restarts = 5;
  std::uint64_t seed = 0;
};

struct GpFitResult {
  GpHyper hyper;
  Standardizer standardizer;
  MatrixXd G;  // original units: diag(sigma_y) G_std
  double log_evidence = 0.0;
  std::vector<double> trace;  // log evidence per iteration of the winning restart
  std::uint64_t seed = 0;
  int failed_restarts = 0;

  MatrixXd H() const;
};

/// Multi-restart Adam ascent of the log evidence. Deterministic given opts.seed.
GpFitResult fit(const ObservationSet& obs, KernelKind kind, const GpFitOptions& opts);

/// Runs Adam from a given starting point; exposed for the identifiability checks
/// and for callers that hold part of the hyperparameters fixed (`mask` = 0).
struct AscentResult {
  VectorXd eta;
  double value;
  std::vector<double> trace;
};
AscentResult ascend_evidence(const VectorXd& y_std, const VectorXd& t, KernelKind kind, Index K,
                             VectorXd eta, const VectorXd& mask, double lr, int iterations);

nlohmann::json to_json(const GpFitResult& fit);
GpFitResult gpfit_from_json(const nlohmann::json& j);

}  // namespace gmsde
