#include "gmsde/models.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace gmsde {

ObservationSet ObservationSet::from_matrix(VectorXd times, MatrixXd Y) {
  if (times.size() != Y.cols())
    throw std::invalid_argument("observation times and Y columns disagree");
  ObservationSet obs;
  obs.times = std::move(times);
  obs.Y = std::move(Y);
  obs.y = vectorize(obs.Y);
  return obs;
}

VectorXd vectorize(const MatrixXd& Y) {
  VectorXd y(Y.size());
  const Index N = Y.cols();
  for (Index k = 0; k < Y.rows(); ++k) y.segment(k * N, N) = Y.row(k).transpose();
  return y;
}

MatrixXd unvectorize(const VectorXd& y, Index K) {
  if (K <= 0 || y.size() % K != 0) throw std::invalid_argument("unvectorize: size not divisible");
  const Index N = y.size() / K;
  MatrixXd Y(K, N);
  for (Index k = 0; k < K; ++k) Y.row(k) = y.segment(k * N, N).transpose();
  return Y;
}

Trajectory euler_maruyama(const SdeSystem& system, const VectorXd& theta, const MatrixXd& G,
                          const VectorXd& x0, double t_end, double dt, std::uint64_t rng_seed) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_maruyama: dt must be positive");
  if (!(t_end >= 0.0)) throw std::invalid_argument("euler_maruyama: t_end must be non-negative");
  if (x0.size() != system.K || G.rows() != system.K || G.cols() != system.K)
    throw std::invalid_argument("euler_maruyama: dimension mismatch for " + system.name);

  const long steps = std::lround(t_end / dt);
  Trajectory traj;
  traj.times.resize(steps + 1);
  traj.states.resize(system.K, steps + 1);
  traj.times[0] = 0.0;
  traj.states.col(0) = x0;

  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sqrt_dt = std::sqrt(dt);
  VectorXd x = x0;
  VectorXd xi(system.K);
  for (long n = 0; n < steps; ++n) {
    for (Index k = 0; k < xi.size(); ++k) xi[k] = normal(rng);
    x += system.drift(x, theta) * dt + G * xi * sqrt_dt;
    if (!x.allFinite())
      throw SimulationError(system.name + ": non-finite state at step " + std::to_string(n + 1),
                            n + 1);
    traj.times[n + 1] = static_cast<double>(n + 1) * dt;
    traj.states.col(n + 1) = x;
  }
  return traj;
}

ObservationSet observe(const Trajectory& traj, const VectorXd& obs_times, const VectorXd& sigma,
                       std::uint64_t rng_seed) {
  const Index K = traj.states.rows();
  if (sigma.size() != K) throw std::invalid_argument("observe: sigma must have one entry per state");
  if (traj.times.size() == 0) throw std::invalid_argument("observe: empty trajectory");
  const double step = traj.times.size() > 1 ? traj.times[1] - traj.times[0] : 0.0;
  const double t0 = traj.times[0];
  const double t1 = traj.times[traj.times.size() - 1];

  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd Y(K, obs_times.size());
  for (Index n = 0; n < obs_times.size(); ++n) {
    const double t = obs_times[n];
    if (t < t0 - 0.5 * step || t > t1 + 0.5 * step) {
      std::ostringstream os;
      os << "observe: time " << t << " outside trajectory span [" << t0 << ", " << t1 << "]";
      throw std::out_of_range(os.str());
    }
    // Grids produced by euler_maruyama are uniform; fall back to a search otherwise.
    Index idx = step > 0.0 ? static_cast<Index>(std::lround((t - t0) / step)) : 0;
    idx = std::clamp<Index>(idx, 0, traj.times.size() - 1);
    if (std::abs(traj.times[idx] - t) > 0.5 * step + 1e-12) {
      (traj.times.array() - t).abs().minCoeff(&idx);
      if (std::abs(traj.times[idx] - t) > 0.5 * step + 1e-12)
        throw std::out_of_range("observe: no grid point within half a step of " +
                                std::to_string(t));
    }
    Y.col(n) = traj.states.col(idx);
  }
  // Noise drawn state-major so that adding a state does not reshuffle earlier ones.
  for (Index k = 0; k < K; ++k)
    for (Index n = 0; n < Y.cols(); ++n) Y(k, n) += sigma[k] * normal(rng);
  return ObservationSet::from_matrix(obs_times, std::move(Y));
}

VectorXd equidistant(double t0, double t1, Index n) {
  if (n < 2) throw std::invalid_argument("equidistant: need at least two points");
  return VectorXd::LinSpaced(n, t0, t1);
}

SdeSystem ornstein_uhlenbeck() {
  SdeSystem s;
  s.name = "ou";
  s.K = 1;
  s.P = 2;
  s.drift = [](const VectorXd& x, const VectorXd& th) {
    return VectorXd::Constant(1, th[0] * (th[1] - x[0]));
  };
  s.drift_grad_theta = [](const VectorXd& x, const VectorXd& th) {
    MatrixXd J(1, 2);
    J << th[1] - x[0], th[0];
    return J;
  };
  s.theta_true = (VectorXd(2) << 0.5, 1.0).finished();
  s.G_true = MatrixXd::Constant(1, 1, 0.5);
  s.x0 = VectorXd::Constant(1, 10.0);
  return s;
}

SdeSystem lorenz63() {
  SdeSystem s;
  s.name = "lorenz63";
  s.K = 3;
  s.P = 3;
  s.drift = [](const VectorXd& x, const VectorXd& th) {
    VectorXd f(3);
    f << th[0] * (x[1] - x[0]), th[1] * x[0] - x[1] - x[0] * x[2], x[0] * x[1] - th[2] * x[2];
    return f;
  };
  s.drift_grad_theta = [](const VectorXd& x, const VectorXd&) {
    MatrixXd J = MatrixXd::Zero(3, 3);
    J(0, 0) = x[1] - x[0];
    J(1, 1) = x[0];
    J(2, 2) = -x[2];
    return J;
  };
  s.theta_true = (VectorXd(3) << 10.0, 28.0, 2.667).finished();
  s.G_true = std::sqrt(10.0) * MatrixXd::Identity(3, 3);
  s.x0 = VectorXd::Ones(3);
  return s;
}

SdeSystem lotka_volterra() {
  SdeSystem s;
  s.name = "lv";
  s.K = 2;
  s.P = 4;
  s.drift = [](const VectorXd& x, const VectorXd& th) {
    VectorXd f(2);
    f << th[0] * x[0] - th[1] * x[0] * x[1], -th[2] * x[1] + th[3] * x[0] * x[1];
    return f;
  };
  s.drift_grad_theta = [](const VectorXd& x, const VectorXd&) {
    MatrixXd J = MatrixXd::Zero(2, 4);
    J(0, 0) = x[0];
    J(0, 1) = -x[0] * x[1];
    J(1, 2) = -x[1];
    J(1, 3) = x[0] * x[1];
    return J;
  };
  s.theta_true = (VectorXd(4) << 2.0, 1.0, 4.0, 1.0).finished();
  // Lower-triangular factor with G^T G = [[0.05, 0.03], [0.03, 0.09]].
  s.G_true = (MatrixXd(2, 2) << 0.2, 0.0, 0.1, 0.3).finished();
  s.x0 = (VectorXd(2) << 3.0, 5.0).finished();
  return s;
}

SdeSystem double_well() {
  SdeSystem s;
  s.name = "dw";
  s.K = 1;
  s.P = 2;
  s.drift = [](const VectorXd& x, const VectorXd& th) {
    return VectorXd::Constant(1, th[0] * x[0] * (th[1] - x[0] * x[0]));
  };
  s.drift_grad_theta = [](const VectorXd& x, const VectorXd& th) {
    MatrixXd J(1, 2);
    J << x[0] * (th[1] - x[0] * x[0]), th[0] * x[0];
    return J;
  };
  s.theta_true = (VectorXd(2) << 0.1, 4.0).finished();
  s.G_true = MatrixXd::Constant(1, 1, 0.5);
  s.x0 = VectorXd::Zero(1);
  return s;
}

std::vector<SdeSystem> builtin_systems() {
  return {ornstein_uhlenbeck(), lorenz63(), lotka_volterra(), double_well()};
}

SdeSystem system_by_name(const std::string& name) {
  for (auto& s : builtin_systems())
    if (s.name == name) return s;
  throw std::invalid_argument("unknown system '" + name + "' (expected ou, lorenz63, lv or dw)");
}

void write_states_csv(std::ostream& os, const VectorXd& times, const MatrixXd& states) {
  if (times.size() != states.cols()) throw std::invalid_argument("write_states_csv: size mismatch");
  os << "t";
  for (Index k = 0; k < states.rows(); ++k) os << ",x" << (k + 1);
  os << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index n = 0; n < times.size(); ++n) {
    os << times[n];
    for (Index k = 0; k < states.rows(); ++k) os << ',' << states(k, n);
    os << '\n';
  }
}

void write_states_csv(const std::string& path, const VectorXd& times, const MatrixXd& states) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_states_csv(os, times, states);
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, long line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw CsvError("line " + std::to_string(line) + ": '" + cell + "' is not a number", line);
  }
  while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
  if (used != cell.size())
    throw CsvError("line " + std::to_string(line) + ": '" + cell + "' is not a number", line);
  return v;
}

}  // namespace

Trajectory read_states_csv(std::istream& is) {
  std::string line;
  long lineno = 0;
  if (!std::getline(is, line)) throw CsvError("line 1: missing header", 1);
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "t") throw CsvError("line 1: header must be t,x1..xK", 1);
  for (std::size_t k = 1; k < header.size(); ++k)
    if (header[k] != "x" + std::to_string(k)) throw CsvError("line 1: header must be t,x1..xK", 1);
  const std::size_t K = header.size() - 1;

  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != K + 1)
      throw CsvError("line " + std::to_string(lineno) + ": expected " + std::to_string(K + 1) +
                         " fields, found " + std::to_string(cells.size()),
                     lineno);
    const double t = parse_number(cells[0], lineno);
    if (!times.empty() && !(t > times.back()))
      throw CsvError("line " + std::to_string(lineno) + ": times must be strictly increasing",
                     lineno);
    times.push_back(t);
    std::vector<double> row(K);
    for (std::size_t k = 0; k < K; ++k) row[k] = parse_number(cells[k + 1], lineno);
    rows.push_back(std::move(row));
  }
  if (times.empty()) throw CsvError("no data rows", lineno);

  Trajectory out;
  out.times = Eigen::Map<VectorXd>(times.data(), static_cast<Index>(times.size()));
  out.states.resize(static_cast<Index>(K), static_cast<Index>(times.size()));
  for (std::size_t n = 0; n < rows.size(); ++n)
    for (std::size_t k = 0; k < K; ++k) out.states(k, n) = rows[n][k];
  return out;
}

Trajectory read_states_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_states_csv(is);
}

}  // namespace gmsde
