#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmsde {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// An Itô SDE dx = f(x, theta) dt + G dw with constant diffusion G.
struct SdeSystem {
  using Drift = std::function<VectorXd(const VectorXd& x, const VectorXd& theta)>;
  using DriftJacobian = std::function<MatrixXd(const VectorXd& x, const VectorXd& theta)>;

  std::string name;
  int K = 0;  // state dimension
  int P = 0;  // parameter dimension
  Drift drift;
  DriftJacobian drift_grad_theta;  // K x P
  VectorXd theta_true;
  MatrixXd G_true;  // lower triangular, K x K
  VectorXd x0;
};

struct Trajectory {
  VectorXd times;   // N, strictly increasing
  MatrixXd states;  // K x N
};

/// Noisy observations. `y` is the state-major vectorization of Y: row k of Y
/// occupies entries [k N, (k + 1) N).
struct ObservationSet {
  VectorXd times;
  MatrixXd Y;
  VectorXd y;

  static ObservationSet from_matrix(VectorXd times, MatrixXd Y);
  Index N() const { return times.size(); }
  Index K() const { return Y.rows(); }
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// State-major vectorization (row concatenation) and its inverse.
VectorXd vectorize(const MatrixXd& Y);
MatrixXd unvectorize(const VectorXd& y, Index K);

/// Euler–Maruyama on the uniform grid 0, dt, 2 dt, ..., t_end.
Trajectory euler_maruyama(const SdeSystem& system, const VectorXd& theta, const MatrixXd& G,
                          const VectorXd& x0, double t_end, double dt, std::uint64_t rng_seed);

/// Samples `traj` at `obs_times` (nearest grid point, within half a step) and
/// adds independent N(0, sigma_k^2) noise per state.
ObservationSet observe(const Trajectory& traj, const VectorXd& obs_times, const VectorXd& sigma,
                       std::uint64_t rng_seed);

VectorXd equidistant(double t0, double t1, Index n);

SdeSystem ornstein_uhlenbeck();
SdeSystem lorenz63();
SdeSystem lotka_volterra();
SdeSystem double_well();

/// OU, Lorenz63, Lotka–Volterra, Double-Well, in that order.
std::vector<SdeSystem> builtin_systems();
SdeSystem system_by_name(const std::string& name);

/// CSV with header `t,x1..xK`, one row per time point, 17 significant digits.
void write_states_csv(std::ostream& os, const VectorXd& times, const MatrixXd& states);
void write_states_csv(const std::string& path, const VectorXd& times, const MatrixXd& states);

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& what, long line) : std::runtime_error(what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Parses a states CSV back into (times, K x N states). Throws CsvError with
/// the 1-based offending line number on malformed input.
Trajectory read_states_csv(std::istream& is);
Trajectory read_states_csv(const std::string& path);

}  // namespace gmsde
