// parseq: batch runner for parallel evaluation experiments.
//   parseq <subcommand> --config <path> [--out <path>] [--workers N]

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "parseq/experiments.hpp"

namespace {

using namespace parseq;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitViolation = 2;
constexpr int kExitConfig = 3;

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

// --workers wins, then PARSEQ_WORKERS, then the config's "workers", then the hardware.
std::size_t resolve_workers(std::optional<std::size_t> flag, const json& config) {
  if (flag) {
    if (*flag == 0) throw ConfigError("--workers must be >= 1");
    return *flag;
  }
  if (std::getenv("PARSEQ_WORKERS") || !config.contains("workers")) return default_workers();
  const auto w = cfg::get<std::size_t>(config, "workers", "config");
  if (w == 0) throw ConfigError("config: workers must be >= 1");
  return w;
}

// Writes to --out (creating parent directories) or stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path.empty()) return;
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    file_.open(path);
    if (!file_) throw std::runtime_error("cannot write '" + path + "'");
  }
  std::ostream& os() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string sibling_path(const std::string& out, const std::string& suffix) {
  std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

void check_experiment(const json& config, const std::string& expected) {
  if (config.contains("experiment") && config["experiment"] != expected)
    throw ConfigError("config is for '" + config["experiment"].dump() + "', not '" + expected + "'");
}

struct Single {
  SystemInstance sys;
  std::size_t T;
  std::uint64_t seed;
};

Single single_system(const json& config, std::initializer_list<const char*> extra) {
  std::vector<const char*> keys{"experiment", "system", "T", "seed", "workers", "output"};
  keys.insert(keys.end(), extra);
  const std::set<std::string> allowed(keys.begin(), keys.end());
  if (!config.is_object()) throw ConfigError("config: expected an object");
  for (const auto& [k, v] : config.items())
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  const auto T = cfg::get<std::size_t>(config, "T", "config");
  const auto seed = cfg::get_or<std::uint64_t>(config, "seed", 0, "config");
  return {make_system(cfg::get<json>(config, "system", "config"), T, seed), T, seed};
}

int cmd_rollout(const json& config, const std::string& out, std::size_t) {
  const Single s = single_system(config, {});
  const Trajectory traj = sequential_rollout(*s.sys.model, s.sys.s0, s.T);
  Sink sink(out);
  write_trajectory_csv(sink.os(), traj);
  return kExitOk;
}

int cmd_solve(const json& config, const std::string& out, std::size_t workers) {
  const Single s = single_system(config, {"solver", "method", "include_final"});
  SolverConfig sc = parse_solver_config(config.value("solver", json(nullptr)));
  sc.seed = s.seed;
  sc.workers = workers;
  SolverKind kind;
  try {
    kind = parse_solver(config.value("method", "deer"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("method: ") + e.what());
  }
  sc.validate(*s.sys.model);
  bool aborted = false;
  SolverReport rep;
  try {
    rep = solve(kind, *s.sys.model, s.sys.s0, sc);
  } catch (const SolverError& e) {
    rep = e.report();
    aborted = true;
    std::cerr << "parseq: " << e.what() << '\n';
  }
  json j = report_json(rep, config.value("include_final", true));
  j["method"] = solver_name(kind);
  j["aborted"] = aborted;
  Sink sink(out);
  sink.os() << j.dump(2) << '\n';
  return aborted ? kExitFailure : kExitOk;
}

int cmd_lle(const json& config, const std::string& out, std::size_t) {
  const Single s = single_system(config, {"n_vectors", "burn_in"});
  if (s.T < 10) throw ConfigError("lle: T must be >= 10");
  LleOptions o;
  o.seed = s.seed;
  o.n_vectors = cfg::get_or<std::size_t>(config, "n_vectors", 3, "config");
  o.burn_in = cfg::get_or(config, "burn_in", true, "config");
  if (o.n_vectors == 0) throw ConfigError("lle: n_vectors must be >= 1");
  const Trajectory traj = sequential_rollout(*s.sys.model, s.sys.s0, s.T);
  if (!traj.finite()) throw std::runtime_error("rollout overflowed");
  const auto est = trajectory_lle_estimates(*s.sys.model, traj, o);
  json per = json::array();
  for (double x : est) per.push_back(number(x));
  const double lambda = mean(est);
  Sink sink(out);
  sink.os() << json{{"lambda", number(lambda)},
                    {"lambda_per_time", number(lambda * s.sys.time_scale)},
                    {"time_scale", s.sys.time_scale},
                    {"per_vector", per},
                    {"T", s.T},
                    {"seed", s.seed}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

int cmd_bounds(const json& config, const std::string& out, std::size_t) {
  const BoundsResult b = run_bounds(config);
  json j = conditioning_json(b.report);
  j["r0_norm"] = number(b.r0_norm);
  j["beta"] = number(b.rate.beta);
  j["chi"] = number(b.rate.chi);
  j["lle_per_time"] = number(b.report.lle * b.time_scale);
  j["parallelizable"] = b.report.lle < 0.0;
  Sink sink(out);
  sink.os() << j.dump(2) << '\n';
  std::cout << verdict_line(b.report) << std::endl;
  return kExitOk;
}

int cmd_threshold(const json& config, const std::string& out, std::size_t workers) {
  const auto rows = run_threshold(parse_threshold_config(config), workers);
  Sink sink(out);
  write_threshold_csv(sink.os(), rows);
  return kExitOk;
}

int cmd_twowell(const json& config, const std::string& out, std::size_t workers) {
  const auto rows = run_twowell(parse_twowell_config(config), workers);
  Sink sink(out);
  write_twowell_csv(sink.os(), rows);
  if (!out.empty()) {
    Sink lle(sibling_path(out, "_lle"));
    write_twowell_lle_csv(lle.os(), rows);
  }
  return kExitOk;
}

int cmd_observer(const json& config, const std::string& out, std::size_t workers) {
  const auto rows = run_observer(parse_observer_config(config), workers);
  Sink sink(out);
  write_observer_csv(sink.os(), rows);
  return kExitOk;
}

int cmd_oracle_check(const json& config, const std::string& out, std::size_t workers) {
  const auto suites = run_oracle_check(parse_oracle_config(config), workers);
  const json j = oracle_json(suites);
  Sink sink(out);
  sink.os() << j.dump(2) << '\n';
  for (const auto& s : suites)
    std::cerr << (s.ok() ? "PASS " : "FAIL ") << s.name << " " << s.passed << "/" << s.total << '\n';
  return j["passed"].get<bool>() ? kExitOk : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel evaluation of nonlinear state space models"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<std::size_t> workers_flag;
  using Handler = int (*)(const json&, const std::string&, std::size_t);
  const std::pair<const char*, Handler> commands[] = {
      {"rollout", cmd_rollout},       {"solve", cmd_solve},       {"lle", cmd_lle},
      {"bounds", cmd_bounds},         {"threshold", cmd_threshold}, {"twowell", cmd_twowell},
      {"observer", cmd_observer},     {"oracle-check", cmd_oracle_check}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config")->required();
    sub->add_option("--out", out_path, "Output path (default stdout)");
    sub->add_option("--workers", workers_flag, "Worker threads");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  const auto* sub = app.get_subcommands().front();
  Handler handler = nullptr;
  for (const auto& [name, fn] : commands)
    if (sub->get_name() == name) handler = fn;

  try {
    const json config = load_config(config_path);
    check_experiment(config, sub->get_name());
    const std::size_t workers = resolve_workers(workers_flag, config);
    return handler(config, out_path, workers);
  } catch (const ConfigError& e) {
    std::cerr << "parseq: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "parseq: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "parseq: " << e.what() << '\n';
    return kExitFailure;
  }
}
