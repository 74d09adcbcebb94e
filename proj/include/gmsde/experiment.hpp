#pragma once

#include "gmsde/ares.hpp"
#include "gmsde/gpfit.hpp"
#include "gmsde/mmd.hpp"
#include "gmsde/sampling.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gmsde {

/// Bad configuration, missing files, malformed input: exit code 2 territory.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { Mars, Ares };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct ExperimentConfig {
  std::string system = "ou";
  Method method = Method::Mars;
  int realizations = 20;
  std::uint64_t base_seed = 1;

  // observation schedule
  Index n_obs = 50;
  double t_start = 0.0;
  double t_end = 10.0;
  std::vector<double> noise{0.1};  // one entry per state, or one broadcast entry
  double dt = 1e-3;
  int trajectory_stride = 10;  // fine-grid steps between rows of trajectory.csv
  int simulation_attempts = 10;  // redraws of a path that leaves the finite range

  KernelKind kernel = KernelKind::Sigmoid;
  GpFitOptions gp;
  SamplerOptions sampler;
  std::vector<double> theta_low, theta_high;  // initialization box
  MarsConfig mars;
  AresConfig ares;

  /// Defaults for a built-in system; every value here is overridable from the config file.
  static ExperimentConfig defaults_for(const std::string& system);

  void validate() const;
  VectorXd noise_vector(Index K) const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(std::istream& is);
void save_config(const ExperimentConfig& cfg, const std::string& path);
void write_config(const ExperimentConfig& cfg, std::ostream& os);

/// splitmix64 of (seed, stream); decorrelates the RNG streams of one realization.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum SeedStream : std::uint64_t { kSimulate = 1, kObserve = 2, kGpFit = 3, kInit = 4, kInfer = 5 };

struct SimulationOutput {
  Trajectory fine;
  ObservationSet obs;
  int attempts = 1;
};

SimulationOutput simulate(const ExperimentConfig& cfg, std::uint64_t seed);
GpFitResult fit_observations(const ExperimentConfig& cfg, const ObservationSet& obs,
                             std::uint64_t seed);
VectorXd initial_theta(const ExperimentConfig& cfg, std::uint64_t seed);
InferenceResult run_inference(const ExperimentConfig& cfg, const ObservationSet& obs,
                              const GpFitResult& fit, const VectorXd& theta0, std::uint64_t seed,
                              const TraceSink& sink = {});

/// One trace.jsonl record: iter, theta and the engine's objective (mmd2 or critic_objective).
nlohmann::json trace_json(Method method, const TraceEntry& entry);

struct RealizationResult {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  VectorXd theta0, theta;
  MatrixXd H;
  double log_evidence = 0.0;
  int simulation_attempts = 0;
  double seconds_simulate = 0.0, seconds_fit = 0.0, seconds_infer = 0.0;
};

/// simulate -> fit -> infer for realization seed `seed`. Never throws for
/// pipeline failures; they are reported through `ok`/`error`. Artifacts go to
/// `out_dir` when given.
RealizationResult run_realization(const ExperimentConfig& cfg, int index, std::uint64_t seed,
                                  const std::optional<std::string>& out_dir = std::nullopt);

struct Summary {
  double median = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
};
Summary summarize(std::vector<double> values);

/// Entry names: theta0.. and H (K = 1) or H11, H21, H22, ... (lower triangle).
std::vector<std::string> h_entry_names(Index K);
std::vector<double> h_entries(const MatrixXd& H);

struct BenchmarkReport {
  nlohmann::json json;
  int failed = 0;
  int total = 0;
  bool too_many_failures() const { return 4 * failed > total; }
};

BenchmarkReport run_benchmark(const ExperimentConfig& cfg, int threads,
                              const std::optional<std::string>& out_dir = std::nullopt);

/// Human-readable table of a report, one row per parameter and H entry.
std::string format_report_table(const nlohmann::json& report);

/// Report with wall-clock fields removed.
nlohmann::json strip_timing(nlohmann::json report);

}  // namespace gmsde
