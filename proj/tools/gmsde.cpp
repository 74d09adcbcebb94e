#include "gmsde/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace gmsde;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string system;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<std::string> method;
  std::optional<int> realizations;
  int threads = 1;
  bool experimental = false;
  std::string obs, fit, report;
};

class InferenceFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
    if (!o.system.empty() && system_by_name(o.system).name != cfg.system)
      throw UsageError("--system " + o.system + " conflicts with config system " + cfg.system);
  } else if (!o.system.empty()) {
    try {
      cfg = ExperimentConfig::defaults_for(o.system);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else {
    throw UsageError("either --config or --system is required");
  }
  if (o.seed) cfg.base_seed = *o.seed;
  if (o.method) cfg.method = method_from_string(*o.method);
  if (o.realizations) cfg.realizations = *o.realizations;
  if (cfg.system == "lorenz63" && !o.experimental)
    throw UsageError("the lorenz63 benchmark is experimental; pass --experimental to run it");
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw UsageError("cannot write '" + p.string() + "'");
  out << text;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("malformed JSON in '" + path + "': " + e.what());
  }
}

ObservationSet read_observations(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("observation file '" + path + "' does not exist");
  try {
    auto traj = read_states_csv(path);
    return ObservationSet::from_matrix(traj.times, traj.states);
  } catch (const CsvError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

json vec(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

int cmd_simulate(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto sys = system_by_name(cfg.system);
  fs::create_directories(o.out);
  const auto sim = simulate(cfg, cfg.base_seed);

  const Index stride = cfg.trajectory_stride;
  const Index rows = (sim.fine.times.size() - 1) / stride + 1;
  VectorXd t(rows);
  MatrixXd x(sys.K, rows);
  for (Index i = 0; i < rows; ++i) {
    t[i] = sim.fine.times[i * stride];
    x.col(i) = sim.fine.states.col(i * stride);
  }
  write_states_csv((fs::path(o.out) / "trajectory.csv").string(), t, x);
  write_states_csv((fs::path(o.out) / "observations.csv").string(), sim.obs.times, sim.obs.Y);

  json G = json::array();
  for (Index i = 0; i < sys.K; ++i) G.push_back(vec(sys.G_true.row(i).transpose()));
  const json meta{{"system", sys.name},
                  {"theta_true", vec(sys.theta_true)},
                  {"G_true", G},
                  {"seed", cfg.base_seed},
                  {"n_obs", cfg.n_obs},
                  {"noise", cfg.noise},
                  {"simulation_attempts", sim.attempts}};
  write_file(fs::path(o.out) / "meta.json", meta.dump(2) + "\n");
  std::cout << "wrote " << sim.obs.N() << " observations of " << sys.name << " to " << o.out << "\n";
  return 0;
}

int cmd_fit(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto obs = read_observations(o.obs);
  GpFitResult gp;
  try {
    gp = fit_observations(cfg, obs, cfg.base_seed);
  } catch (const std::exception& e) {
    throw InferenceFailure(std::string("GP fit failed: ") + e.what());
  }
  fs::create_directories(o.out);
  write_file(fs::path(o.out) / "fit.json", to_json(gp).dump(2) + "\n");
  std::cout << "log evidence " << gp.log_evidence << "\nH =\n" << gp.H() << "\n";
  return 0;
}

int cmd_infer(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto obs = read_observations(o.obs);
  GpFitResult gp;
  try {
    gp = gpfit_from_json(read_json(o.fit));
  } catch (const json::exception& e) {
    throw UsageError("malformed fit file '" + o.fit + "': " + e.what());
  }
  fs::create_directories(o.out);
  std::ofstream trace(fs::path(o.out) / "trace.jsonl");
  if (!trace) throw UsageError("cannot write trace in '" + o.out + "'");

  const VectorXd theta0 = initial_theta(cfg, cfg.base_seed);
  const auto t0 = std::chrono::steady_clock::now();
  InferenceResult res;
  try {
    res = run_inference(cfg, obs, gp, theta0, cfg.base_seed, [&](const TraceEntry& e) {
      trace << trace_json(cfg.method, e).dump() << "\n";
    });
  } catch (const DivergenceError& e) {
    trace.flush();
    throw InferenceFailure(e.what());
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    trace.flush();
    throw InferenceFailure(e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const MatrixXd H = gp.H();
  json Hj = json::array();
  for (Index i = 0; i < H.rows(); ++i) Hj.push_back(vec(H.row(i).transpose()));
  const json result{{"system", cfg.system},   {"method", to_string(cfg.method)},
                    {"seed", cfg.base_seed},  {"theta0", vec(theta0)},
                    {"theta", vec(res.theta)}, {"H", Hj},
                    {"seconds", secs}};
  write_file(fs::path(o.out) / "result.json", result.dump(2) + "\n");
  std::cout << "theta = " << res.theta.transpose() << "  (" << secs << " s)\n";
  return 0;
}

int cmd_benchmark(const Options& o) {
  const auto cfg = resolve_config(o);
  fs::create_directories(o.out);
  const auto report = run_benchmark(cfg, o.threads, (fs::path(o.out) / "runs").string());
  write_file(fs::path(o.out) / "report.json", report.json.dump(2) + "\n");
  const std::string table = format_report_table(report.json);
  write_file(fs::path(o.out) / "report.txt", table);
  std::cout << table;
  if (report.too_many_failures()) {
    std::cerr << report.failed << " of " << report.total << " realizations failed\n";
    return 1;
  }
  return 0;
}

int cmd_report(const Options& o) {
  const json report = read_json(o.report);
  try {
    std::cout << format_report_table(report);
  } catch (const json::exception& e) {
    throw UsageError("malformed report '" + o.report + "': " + e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drift and diffusion estimation for SDEs by gradient matching"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (INI)")->check(CLI::ExistingFile);
    sub->add_option("--system", o.system, "Built-in system (ou, dw, lv, lorenz63) when no config is given");
    sub->add_option("--seed", o.seed, "Base seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--experimental", o.experimental, "Allow the experimental Lorenz '63 benchmark");
  };
  auto method = [&o](CLI::App* sub) {
    sub->add_option("--method", o.method, "Inference engine")->check(CLI::IsMember({"ares", "mars"}));
  };

  auto* sim = app.add_subcommand("simulate", "Simulate a trajectory and noisy observations");
  common(sim);
  auto* fit = app.add_subcommand("fit", "Fit the GP observation model");
  common(fit);
  fit->add_option("--obs", o.obs, "Observations CSV")->required();
  auto* inf = app.add_subcommand("infer", "Infer drift parameters from observations and a fit");
  common(inf);
  method(inf);
  inf->add_option("--obs", o.obs, "Observations CSV")->required();
  inf->add_option("--fit", o.fit, "fit.json from the fit command")->required();
  auto* bench = app.add_subcommand("benchmark", "Run independent simulate-fit-infer realizations");
  common(bench);
  method(bench);
  bench->add_option("--realizations", o.realizations, "Number of realizations")->check(CLI::PositiveNumber);
  bench->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* rep = app.add_subcommand("report", "Print the table of a benchmark report");
  rep->add_option("report", o.report, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*fit) return cmd_fit(o);
    if (*inf) return cmd_infer(o);
    if (*bench) return cmd_benchmark(o);
    if (*rep) return cmd_report(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InferenceFailure& e) {
    std::cerr << "inference failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
