#include "gmsde/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace gmsde {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Method m) { return m == Method::Mars ? "mars" : "ares"; }

Method method_from_string(const std::string& s) {
  if (s == "mars") return Method::Mars;
  if (s == "ares") return Method::Ares;
  throw UsageError("unknown method '" + s + "' (expected mars or ares)");
}

ExperimentConfig ExperimentConfig::defaults_for(const std::string& system) {
  const SdeSystem sys = system_by_name(system);
  ExperimentConfig c;
  c.system = sys.name;
  if (sys.name == "ou") {
    c.n_obs = 50, c.t_end = 10.0, c.noise = {0.1};
    c.kernel = KernelKind::Sigmoid;
    c.theta_low = {0.1, 0.1}, c.theta_high = {2.0, 2.0};
  } else if (sys.name == "dw") {
    c.n_obs = 50, c.t_end = 20.0, c.noise = {0.2};
    c.kernel = KernelKind::Sigmoid;
    c.theta_low = {0.01, 1.0}, c.theta_high = {0.5, 8.0};
  } else if (sys.name == "lv") {
    c.n_obs = 50, c.t_end = 20.0, c.noise = {0.0};
    c.kernel = KernelKind::Rbf;
  } else if (sys.name == "lorenz63") {
    c.n_obs = 100, c.t_end = 10.0, c.noise = {1.0};
    c.kernel = KernelKind::Rbf;
  }
  if (c.theta_low.empty()) {
    for (Index p = 0; p < sys.P; ++p) {
      c.theta_low.push_back(0.5 * sys.theta_true[p]);
      c.theta_high.push_back(1.5 * sys.theta_true[p]);
    }
  }
  return c;
}

void ExperimentConfig::validate() const {
  SdeSystem sys;
  try {
    sys = system_by_name(system);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  auto fail = [](const std::string& m) { throw UsageError("config: " + m); };
  if (realizations < 1) fail("realizations must be at least 1");
  if (n_obs < 5) fail("n_obs must be at least 5");
  if (!(t_end > t_start)) fail("t_end must exceed t_start");
  if (!(dt > 0.0)) fail("dt must be positive");
  if (trajectory_stride < 1) fail("trajectory_stride must be positive");
  if (simulation_attempts < 1) fail("simulation_attempts must be positive");
  if (noise.size() != 1 && noise.size() != static_cast<std::size_t>(sys.K))
    fail("noise needs 1 or " + std::to_string(sys.K) + " entries");
  for (double s : noise)
    if (!(s >= 0.0)) fail("noise levels must be non-negative");
  if (theta_low.size() != static_cast<std::size_t>(sys.P) ||
      theta_high.size() != static_cast<std::size_t>(sys.P))
    fail("init box needs " + std::to_string(sys.P) + " entries per bound");
  for (std::size_t p = 0; p < theta_low.size(); ++p)
    if (!(theta_low[p] <= theta_high[p])) fail("theta_low must not exceed theta_high");
  if (gp.restarts < 1 || gp.iterations < 1 || !(gp.learning_rate > 0.0))
    fail("gpfit settings must be positive");
  try {
    mars.validate();
    ares.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

VectorXd ExperimentConfig::noise_vector(Index K) const {
  if (noise.size() == 1) return VectorXd::Constant(K, noise[0]);
  return Eigen::Map<const VectorXd>(noise.data(), static_cast<Index>(noise.size()));
}

// ---------------------------------------------------------------------------
// INI round trip

namespace {

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& s, const std::string& key) {
  T v{};
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e) throw UsageError("config: bad value '" + s + "' for " + key);
  return v;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out;
}

std::vector<double> parse_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(item, key));
  if (out.empty()) throw UsageError("config: empty list for " + key);
  return out;
}

struct Field {
  std::string section, key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename T>
Field num(const char* sec, const char* key, T& ref) {
  const std::string full = std::string(sec) + "." + key;
  return {sec, key,
          [&ref] {
            if constexpr (std::is_floating_point_v<T>)
              return fmt(ref);
            else
              return std::to_string(ref);
          },
          [&ref, full](const std::string& s) { ref = parse_number<T>(s, full); }};
}

Field list(const char* sec, const char* key, std::vector<double>& ref) {
  const std::string full = std::string(sec) + "." + key;
  return {sec, key, [&ref] { return fmt_list(ref); },
          [&ref, full](const std::string& s) { ref = parse_list(s, full); }};
}

std::vector<Field> fields(ExperimentConfig& c) {
  return {
      {"experiment", "system", [&c] { return c.system; }, [&c](const std::string& s) { c.system = s; }},
      {"experiment", "method", [&c] { return to_string(c.method); },
       [&c](const std::string& s) { c.method = method_from_string(s); }},
      num("experiment", "realizations", c.realizations),
      num("experiment", "base_seed", c.base_seed),
      num("observations", "n_obs", c.n_obs),
      num("observations", "t_start", c.t_start),
      num("observations", "t_end", c.t_end),
      list("observations", "noise", c.noise),
      num("observations", "dt", c.dt),
      num("observations", "trajectory_stride", c.trajectory_stride),
      num("observations", "simulation_attempts", c.simulation_attempts),
      {"gpfit", "kernel", [&c] { return to_string(c.kernel); },
       [&c](const std::string& s) {
         try {
           c.kernel = kernel_kind_from_string(s);
         } catch (const std::exception& e) {
           throw UsageError(std::string("config: ") + e.what());
         }
       }},
      num("gpfit", "learning_rate", c.gp.learning_rate),
      num("gpfit", "iterations", c.gp.iterations),
      num("gpfit", "restarts", c.gp.restarts),
      num("sampler", "kernel_jitter", c.sampler.kernel_jitter),
      list("init", "theta_low", c.theta_low),
      list("init", "theta_high", c.theta_high),
      num("mars", "learning_rate", c.mars.learning_rate),
      num("mars", "iterations", c.mars.iterations),
      num("mars", "batch_size", c.mars.batch_size),
      list("mars", "alphas", c.mars.alphas),
      num("ares", "learning_rate", c.ares.learning_rate),
      num("ares", "iterations", c.ares.iterations),
      num("ares", "clip", c.ares.clip),
      num("ares", "batch_size", c.ares.batch_size),
      num("ares", "n_critic", c.ares.n_critic),
      num("ares", "init_scale", c.ares.init_scale),
      num("ares", "hidden1", c.ares.hidden1),
      num("ares", "hidden2", c.ares.hidden2),
      num("ares", "slope", c.ares.slope),
  };
}

}  // namespace

ExperimentConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw UsageError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  // Defaults come from the system named in the file, then every key overrides.
  const auto system = tree.get_optional<std::string>("experiment.system");
  if (!system) throw UsageError("config: missing experiment.system");
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::defaults_for(*system);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  auto fs_ = fields(cfg);
  std::set<std::string> known;
  for (const auto& f : fs_) known.insert(f.section + "." + f.key);
  for (const auto& [sec, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw UsageError("config: key '" + sec + "' outside a section");
    for (const auto& [key, val] : body)
      if (!known.count(sec + "." + key)) throw UsageError("config: unknown key " + sec + "." + key);
  }
  for (auto& f : fs_)
    if (auto v = tree.get_optional<std::string>(f.section + "." + f.key)) f.set(*v);
  // the defaults reflect `system`; set again in case the field table reordered it
  cfg.system = system_by_name(cfg.system).name;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  return parse_config(in);
}

void write_config(const ExperimentConfig& cfg_in, std::ostream& os) {
  ExperimentConfig cfg = cfg_in;
  std::string section;
  for (const auto& f : fields(cfg)) {
    if (f.section != section) {
      os << (section.empty() ? "" : "\n") << "[" << f.section << "]\n";
      section = f.section;
    }
    os << f.key << " = " << f.get() << "\n";
  }
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write config file '" + path + "'");
  write_config(cfg, out);
}

// ---------------------------------------------------------------------------
// pipeline

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SimulationOutput simulate(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SdeSystem sys = system_by_name(cfg.system);
  SimulationOutput out;
  // Additive noise can push a path out of the drift's stable region (LV populations going
  // negative). Such paths are redrawn; attempt 0 keeps the plain per-realization stream.
  const std::uint64_t base = derive_seed(seed, kSimulate);
  for (int attempt = 0;; ++attempt) {
    try {
      out.fine = euler_maruyama(sys, sys.theta_true, sys.G_true, sys.x0, cfg.t_end, cfg.dt,
                                attempt == 0 ? base : derive_seed(base, static_cast<std::uint64_t>(attempt)));
      out.attempts = attempt + 1;
      break;
    } catch (const SimulationError&) {
      if (attempt + 1 >= cfg.simulation_attempts) throw;
    }
  }
  const VectorXd times = equidistant(cfg.t_start, cfg.t_end, cfg.n_obs);
  out.obs = observe(out.fine, times, cfg.noise_vector(sys.K), derive_seed(seed, kObserve));
  return out;
}

GpFitResult fit_observations(const ExperimentConfig& cfg, const ObservationSet& obs,
                             std::uint64_t seed) {
  GpFitOptions opts = cfg.gp;
  opts.seed = derive_seed(seed, kGpFit);
  return fit(obs, cfg.kernel, opts);
}

VectorXd initial_theta(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kInit));
  VectorXd theta(static_cast<Index>(cfg.theta_low.size()));
  for (Index p = 0; p < theta.size(); ++p) {
    std::uniform_real_distribution<double> u(cfg.theta_low[p], cfg.theta_high[p]);
    theta[p] = u(rng);
  }
  return theta;
}

InferenceResult run_inference(const ExperimentConfig& cfg, const ObservationSet& obs,
                              const GpFitResult& fit, const VectorXd& theta0, std::uint64_t seed,
                              const TraceSink& sink) {
  const SdeSystem sys = system_by_name(cfg.system);
  const AncestralSampler sampler(obs, fit, sys, cfg.sampler);
  if (cfg.method == Method::Mars) {
    MarsConfig mc = cfg.mars;
    mc.seed = derive_seed(seed, kInfer);
    return mars_infer(sampler, theta0, mc, sink);
  }
  AresConfig ac = cfg.ares;
  ac.seed = derive_seed(seed, kInfer);
  return ares_infer(sampler, theta0, ac, sink);
}

namespace {

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

}  // namespace

nlohmann::json trace_json(Method method, const TraceEntry& e) {
  return {{"iter", e.iter},
          {"theta", vec_json(e.theta)},
          {method == Method::Mars ? "mmd2" : "critic_objective", e.objective}};
}

RealizationResult run_realization(const ExperimentConfig& cfg, int index, std::uint64_t seed,
                                  const std::optional<std::string>& out_dir) {
  RealizationResult r;
  r.index = index;
  r.seed = seed;
  std::optional<fs::path> dir;
  if (out_dir) {
    dir = fs::path(*out_dir);
    fs::create_directories(*dir);
  }
  try {
    auto t0 = std::chrono::steady_clock::now();
    const auto sim = simulate(cfg, seed);
    r.seconds_simulate = seconds_since(t0);
    r.simulation_attempts = sim.attempts;
    if (dir) write_states_csv(((*dir) / "observations.csv").string(), sim.obs.times, sim.obs.Y);

    t0 = std::chrono::steady_clock::now();
    const auto gp = fit_observations(cfg, sim.obs, seed);
    r.seconds_fit = seconds_since(t0);
    r.H = gp.H();
    r.log_evidence = gp.log_evidence;
    if (dir) write_json((*dir) / "fit.json", to_json(gp));

    t0 = std::chrono::steady_clock::now();
    r.theta0 = initial_theta(cfg, seed);
    std::ofstream trace;
    if (dir) trace.open((*dir) / "trace.jsonl");
    const auto res = run_inference(cfg, sim.obs, gp, r.theta0, seed, [&](const TraceEntry& e) {
      if (trace.is_open())
        trace << trace_json(cfg.method, e).dump() << "\n";
    });
    r.seconds_infer = seconds_since(t0);
    r.theta = res.theta;
    r.ok = true;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

Summary summarize(std::vector<double> values) {
  Summary s;
  const std::size_t n = values.size();
  if (n == 0) return {std::nan(""), std::nan("")};
  std::sort(values.begin(), values.end());
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  if (n > 1) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    s.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

std::vector<std::string> h_entry_names(Index K) {
  if (K == 1) return {"H"};
  std::vector<std::string> out;
  for (Index i = 0; i < K; ++i)
    for (Index j = 0; j <= i; ++j) out.push_back("H" + std::to_string(i + 1) + std::to_string(j + 1));
  return out;
}

std::vector<double> h_entries(const MatrixXd& H) {
  std::vector<double> out;
  for (Index i = 0; i < H.rows(); ++i)
    for (Index j = 0; j <= i; ++j) out.push_back(H(i, j));
  return out;
}

BenchmarkReport run_benchmark(const ExperimentConfig& cfg, int threads,
                              const std::optional<std::string>& out_dir) {
  cfg.validate();
  const SdeSystem sys = system_by_name(cfg.system);
  const int R = cfg.realizations;
  std::vector<RealizationResult> results(static_cast<std::size_t>(R));

  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr usage_error;
  auto worker = [&] {
    for (int i = next++; i < R; i = next++) {
      std::optional<std::string> dir;
      if (out_dir) {
        std::ostringstream name;
        name << "realization_" << std::setw(3) << std::setfill('0') << i;
        dir = (fs::path(*out_dir) / name.str()).string();
      }
      try {
        results[static_cast<std::size_t>(i)] =
            run_realization(cfg, i, cfg.base_seed + static_cast<std::uint64_t>(i), dir);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!usage_error) usage_error = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(threads, 1, R);
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (usage_error) std::rethrow_exception(usage_error);

  BenchmarkReport report;
  report.total = R;
  std::vector<const RealizationResult*> ok;
  for (const auto& r : results) {
    if (r.ok)
      ok.push_back(&r);
    else
      ++report.failed;
  }

  json j;
  j["system"] = sys.name;
  j["method"] = to_string(cfg.method);
  j["realizations"] = R;
  j["successful"] = static_cast<int>(ok.size());
  j["failed"] = report.failed;
  j["base_seed"] = cfg.base_seed;
  std::ostringstream cfg_text;
  write_config(cfg, cfg_text);
  j["config"] = cfg_text.str();

  json params = json::array();
  for (Index p = 0; p < sys.P; ++p) {
    std::vector<double> vals;
    for (const auto* r : ok) vals.push_back(r->theta[p]);
    const auto s = summarize(vals);
    params.push_back({{"name", "theta" + std::to_string(p)},
                      {"truth", sys.theta_true[p]},
                      {"median", s.median},
                      {"std", s.stddev}});
  }
  j["parameters"] = params;

  const MatrixXd H_true = sys.G_true.transpose() * sys.G_true;
  const auto names = h_entry_names(sys.K);
  const auto truth = h_entries(H_true);
  json hs = json::array();
  for (std::size_t e = 0; e < names.size(); ++e) {
    std::vector<double> vals;
    for (const auto* r : ok) vals.push_back(h_entries(r->H)[e]);
    const auto s = summarize(vals);
    hs.push_back({{"name", names[e]}, {"truth", truth[e]}, {"median", s.median}, {"std", s.stddev}});
  }
  j["H"] = hs;

  json runs = json::array();
  std::vector<double> t_sim, t_fit, t_inf;
  for (const auto& r : results) {
    json run{{"index", r.index}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      run["theta0"] = vec_json(r.theta0);
      run["theta"] = vec_json(r.theta);
      run["H"] = mat_json(r.H);
      run["log_evidence"] = r.log_evidence;
      run["simulation_attempts"] = r.simulation_attempts;
      t_sim.push_back(r.seconds_simulate);
      t_fit.push_back(r.seconds_fit);
      t_inf.push_back(r.seconds_infer);
    } else {
      run["error"] = r.error;
    }
    runs.push_back(run);
  }
  j["runs"] = runs;

  auto timing = [](const std::vector<double>& v) {
    const auto s = summarize(v);
    double total = 0.0;
    for (double x : v) total += x;
    return json{{"median", v.empty() ? 0.0 : s.median}, {"std", v.empty() ? 0.0 : s.stddev}, {"total", total}};
  };
  j["timing"] = {{"simulate", timing(t_sim)}, {"fit", timing(t_fit)}, {"infer", timing(t_inf)}};

  report.json = std::move(j);
  return report;
}

json strip_timing(json report) {
  report.erase("timing");
  return report;
}

std::string format_report_table(const json& report) {
  std::ostringstream os;
  os << "system " << report.at("system").get<std::string>() << ", method "
     << report.at("method").get<std::string>() << ", " << report.at("successful").get<int>() << "/"
     << report.at("realizations").get<int>() << " realizations succeeded\n";
  os << std::left << std::setw(10) << "entry" << std::right << std::setw(12) << "truth"
     << std::setw(12) << "median" << std::setw(12) << "std" << "\n";
  auto rows = [&os](const json& arr) {
    for (const auto& e : arr) {
      auto val = [](const json& v) {
        std::ostringstream s;
        if (v.is_number())
          s << std::fixed << std::setprecision(4) << v.get<double>();
        else
          s << "nan";
        return s.str();
      };
      os << std::left << std::setw(10) << e.at("name").get<std::string>() << std::right
         << std::setw(12) << val(e.at("truth")) << std::setw(12) << val(e.at("median"))
         << std::setw(12) << val(e.at("std")) << "\n";
    }
  };
  rows(report.at("parameters"));
  rows(report.at("H"));
  if (report.contains("timing")) {
    const auto& t = report.at("timing");
    os << std::fixed << std::setprecision(2) << "median seconds: simulate "
       << t.at("simulate").at("median").get<double>() << ", fit "
       << t.at("fit").at("median").get<double>() << ", infer "
       << t.at("infer").at("median").get<double>() << "\n";
  }
  return os.str();
}

}  // namespace gmsde
