#ifndef PARSEQ_EXPERIMENTS_HPP_
#define PARSEQ_EXPERIMENTS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "parseq/analysis.hpp"
#include "parseq/core.hpp"
#include "parseq/oracle.hpp"
#include "parseq/parallel.hpp"
#include "parseq/solvers.hpp"
#include "parseq/systems.hpp"

namespace parseq {

using json = nlohmann::json;

inline constexpr int kCsvSchemaVersion = 1;

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cfg {

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key, where);
}

/// A list of numbers, or {"min", "max", "count"} expanded to a linspace.
inline std::vector<double> number_grid(const json& j, const std::string& where) {
  if (j.is_array()) {
    std::vector<double> out;
    for (const auto& x : j) {
      if (!x.is_number()) throw ConfigError(where + ": grid entries must be numbers");
      out.push_back(x.get<double>());
    }
    if (out.empty()) throw ConfigError(where + ": grid must be non-empty");
    return out;
  }
  allow_keys(j, where, {"min", "max", "count"});
  const double lo = get<double>(j, "min", where), hi = get<double>(j, "max", where);
  const auto n = get<std::size_t>(j, "count", where);
  if (n == 0) throw ConfigError(where + ": count must be >= 1");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

inline std::vector<std::size_t> size_grid(const json& j, const std::string& where) {
  std::vector<std::size_t> out;
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty list of integers");
  for (const auto& x : j) {
    if (!x.is_number_integer() || x.get<long long>() < 1)
      throw ConfigError(where + ": entries must be positive integers");
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

/// Explicit list of seeds, or {"count": n} for 0..n-1.
inline std::vector<std::uint64_t> seed_list(const json& j, const std::string& where) {
  std::vector<std::uint64_t> out;
  if (j.is_object()) {
    allow_keys(j, where, {"count"});
    const auto n = get<std::size_t>(j, "count", where);
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
  } else if (j.is_array()) {
    for (const auto& x : j) {
      if (!x.is_number_unsigned() && !(x.is_number_integer() && x.get<long long>() >= 0))
        throw ConfigError(where + ": seeds must be non-negative integers");
      out.push_back(x.get<std::uint64_t>());
    }
  }
  if (out.empty()) throw ConfigError(where + ": seeds must be explicit and non-empty");
  return out;
}

inline Vec vec(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected a list of numbers");
  Vec out;
  for (const auto& x : j) {
    if (!x.is_number()) throw ConfigError(where + ": expected a list of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace cfg

// --- systems from config --------------------------------------------------------

/// A constructed model, its initial condition, and the factor that converts
/// per-step exponents into the reported unit (1/dt for flows).
struct SystemInstance {
  std::shared_ptr<const DynamicsModel> model;
  Vec s0;
  double time_scale = 1.0;
};

inline ObserverStyle parse_observer_style(const std::string& s) {
  if (s == "substitution") return ObserverStyle::substitution;
  if (s == "gain_feedback") return ObserverStyle::gain_feedback;
  throw ConfigError("unknown observer style '" + s + "'");
}

inline std::string observer_style_name(ObserverStyle s) {
  return s == ObserverStyle::substitution ? "substitution" : "gain_feedback";
}

inline SystemInstance make_system(const json& spec, std::size_t T, std::uint64_t seed) {
  const std::string where = "system";
  const auto name = cfg::get<std::string>(spec, "name", where);
  if (T == 0) throw ConfigError("T must be >= 1");
  SystemInstance out;
  try {
    if (name == "mean_field_rnn") {
      cfg::allow_keys(spec, where, {"name", "D", "g", "amplitude"});
      const auto D = cfg::get<std::size_t>(spec, "D", where);
      const auto g = cfg::get<double>(spec, "g", where);
      const double amp = cfg::get_or(spec, "amplitude", 0.1, where);
      out.model = std::make_shared<MeanFieldRnn>(mean_field_rnn(D, g, T, seed, amp));
      out.s0 = random_initial_state(D, seed);
    } else if (name == "two_well") {
      cfg::allow_keys(spec, where, {"name", "eps", "D", "center_a", "center_b", "var_a", "var_b", "s0"});
      TwoWellParams p;
      if (spec.contains("center_a")) p.center_a = cfg::vec(spec["center_a"], where + ".center_a");
      if (spec.contains("center_b")) p.center_b = cfg::vec(spec["center_b"], where + ".center_b");
      if (spec.contains("var_a")) p.var_a = cfg::vec(spec["var_a"], where + ".var_a");
      if (spec.contains("var_b")) p.var_b = cfg::vec(spec["var_b"], where + ".var_b");
      const auto D = cfg::get_or<std::size_t>(spec, "D", 2, where);
      const double eps = cfg::get_or(spec, "eps", p.eps, where);
      auto model = std::make_shared<TwoWellLangevin>(two_well(eps, T, seed, D, p));
      out.s0 = spec.contains("s0") ? cfg::vec(spec["s0"], where + ".s0") : model->params().center_a;
      out.model = std::move(model);
    } else if (name == "linear") {
      cfg::allow_keys(spec, where, {"name", "D", "scale"});
      const auto D = cfg::get<std::size_t>(spec, "D", where);
      out.model = std::make_shared<LinearTimeVarying>(
          random_linear_system(D, T, seed, cfg::get_or(spec, "scale", 0.9, where)));
      out.s0 = random_initial_state(D, seed);
    } else if (name == "logistic") {
      cfg::allow_keys(spec, where, {"name", "r", "x0"});
      out.model = std::make_shared<LogisticMap>(cfg::get_or(spec, "r", 4.0, where), T);
      out.s0 = {cfg::get_or(spec, "x0", 0.3, where)};
    } else if (name == "henon") {
      cfg::allow_keys(spec, where, {"name", "a", "b", "s0"});
      out.model = std::make_shared<HenonMap>(cfg::get_or(spec, "a", 1.4, where),
                                             cfg::get_or(spec, "b", 0.3, where), T);
      out.s0 = spec.contains("s0") ? cfg::vec(spec["s0"], where + ".s0") : Vec{0.1, 0.1};
    } else if (name == "contractive_scalar_rnn") {
      cfg::allow_keys(spec, where, {"name", "b_param", "input_scale"});
      Rng rng = make_rng(seed, streams::inputs);
      std::normal_distribution<double> nd(0.0, cfg::get_or(spec, "input_scale", 1.0, where));
      Vec u(T);
      for (double& x : u) x = nd(rng);
      out.model = std::make_shared<ContractiveScalarRnn>(cfg::get<double>(spec, "b_param", where), std::move(u));
      out.s0 = {0.0};
    } else if (name == "lorenz" || name == "rossler") {
      cfg::allow_keys(spec, where, {"name", "dt", "mode", "style", "gain"});
      const double dt = cfg::get_or(spec, "dt", 0.01, where);
      const auto mode = cfg::get_or<std::string>(spec, "mode", "system", where);
      const auto style = parse_observer_style(cfg::get_or<std::string>(spec, "style", "substitution", where));
      std::optional<Vec3> gain;
      if (spec.contains("gain")) {
        const Vec k = cfg::vec(spec["gain"], where + ".gain");
        if (k.size() != 3) throw ConfigError(where + ".gain: expected 3 entries");
        gain = Vec3{k[0], k[1], k[2]};
      }
      auto setup = std::make_shared<ObserverSetup>(make_observer_setup(parse_flow(name), dt, T, seed, style, gain));
      if (mode == "system") {
        out.s0 = setup->system_s0;
        out.model = std::shared_ptr<const DynamicsModel>(setup, &setup->system);
      } else if (mode == "observer") {
        out.s0 = setup->observer_s0;
        out.model = std::shared_ptr<const DynamicsModel>(setup, &setup->observer);
      } else {
        throw ConfigError(where + ": mode must be 'system' or 'observer'");
      }
      out.time_scale = 1.0 / dt;
    } else {
      throw ConfigError(where + ": unknown system '" + name + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return out;
}

inline SolverConfig parse_solver_config(const json& j) {
  SolverConfig c;
  if (j.is_null()) return c;
  const std::string where = "solver";
  cfg::allow_keys(j, where,
                  {"tol", "max_iters", "init", "step_size", "nan_policy", "nan_reset_same", "track_lle",
                   "scan_mode", "chunks"});
  try {
    c.tol = cfg::get_or(j, "tol", c.tol, where);
    if (j.contains("max_iters") && !j["max_iters"].is_null()) c.max_iters = cfg::get<std::size_t>(j, "max_iters", where);
    c.init = parse_init(cfg::get_or<std::string>(j, "init", init_name(c.init), where));
    c.step_size = cfg::get_or(j, "step_size", c.step_size, where);
    c.nan_policy = parse_nan_policy(cfg::get_or<std::string>(j, "nan_policy", "reset_to_init", where));
    c.nan_reset_same = cfg::get_or(j, "nan_reset_same", false, where);
    c.track_lle = cfg::get_or(j, "track_lle", false, where);
    const auto mode = cfg::get_or<std::string>(j, "scan_mode", "parallel", where);
    if (mode == "sequential") c.scan.mode = ScanMode::sequential;
    else if (mode == "parallel") c.scan.mode = ScanMode::parallel;
    else throw ConfigError(where + ": scan_mode must be 'sequential' or 'parallel'");
    c.scan.chunks = cfg::get_or<std::size_t>(j, "chunks", 0, where);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (!(c.tol > 0.0)) throw ConfigError("solver: tol must be > 0");
  if (c.max_iters && *c.max_iters < 1) throw ConfigError("solver: max_iters must be >= 1");
  if (!(c.step_size > 0.0)) throw ConfigError("solver: step_size must be > 0");
  if (c.init == InitKind::given) throw ConfigError("solver: init 'given' is library-only");
  return c;
}

// --- JSON views --------------------------------------------------------------

/// Non-finite numbers become null.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json trajectory_json(const Trajectory& traj) {
  json states = json::array();
  for (std::size_t t = 1; t <= traj.length(); ++t) {
    json row = json::array();
    for (double x : traj.state(t)) row.push_back(number(x));
    states.push_back(std::move(row));
  }
  json s0 = json::array();
  for (double x : traj.s0()) s0.push_back(number(x));
  return {{"s0", s0}, {"states", states}, {"T", traj.length()}, {"D", traj.dim()}};
}

inline json report_json(const SolverReport& r, bool include_final = true) {
  json hist = json::array();
  for (double m : r.merit_history) hist.push_back(number(m));
  json out = {{"iterations", r.iterations},
              {"merit_history", hist},
              {"converged", r.converged},
              {"nan_resets", r.nan_resets},
              {"wall_seconds", r.wall_seconds}};
  if (r.per_iter_lle) {
    json l = json::array();
    for (double x : *r.per_iter_lle) l.push_back(number(x));
    out["per_iter_lle"] = l;
  } else {
    out["per_iter_lle"] = nullptr;
  }
  if (include_final) out["final"] = trajectory_json(r.final);
  return out;
}

inline json conditioning_json(const ConditioningReport& c) {
  return {{"lle", number(c.lle)},
          {"a", number(c.a)},
          {"b", number(c.b)},
          {"sqrt_mu_lower", number(c.sqrt_mu_lower)},
          {"sqrt_mu_upper", number(c.sqrt_mu_upper)},
          {"tilde_mu", number(c.tilde_mu)},
          {"lipschitz", number(c.lipschitz)},
          {"basin_radius", number(c.basin_radius)},
          {"predicted_steps", number(c.predicted_steps)}};
}

inline std::string csv_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return format_double(x);
}

inline std::string csv_seconds(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

/// Runs a solver and never throws: failures become a non-converged report.
inline SolverReport solve_recorded(SolverKind kind, const DynamicsModel& model, std::span<const double> s0,
                                   const SolverConfig& c) {
  try {
    return solve(kind, model, s0, c);
  } catch (const SolverError& e) {
    return e.report();
  } catch (const std::exception&) {
    SolverReport r;
    r.merit_history.push_back(std::numeric_limits<double>::quiet_NaN());
    return r;
  }
}

inline double final_merit(const SolverReport& r) {
  return r.merit_history.empty() ? std::numeric_limits<double>::quiet_NaN() : r.merit_history.back();
}

/// Per-step LLE on a rollout, NaN when T < 10.
inline double rollout_lle(const DynamicsModel& model, const Trajectory& traj, std::uint64_t seed) {
  if (traj.length() < 10 || !traj.finite()) return std::numeric_limits<double>::quiet_NaN();
  LleOptions o;
  o.seed = seed;
  return trajectory_lle(model, traj, o);
}

// --- threshold sweep ---------------------------------------------------------

struct ThresholdConfig {
  json system;  ///< mean_field_rnn spec without g
  std::vector<double> g;
  std::vector<std::size_t> T;
  std::vector<std::uint64_t> seeds;
  std::vector<SolverKind> solvers{SolverKind::deer};
  std::vector<double> gd_step_sizes{0.01, 0.1, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  SolverConfig solver;
};

struct ThresholdRow {
  double g = 0.0;
  double lambda = 0.0;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  SolverKind solver = SolverKind::deer;
  std::size_t steps = 0;
  bool converged = false;
  double final_merit = 0.0;
  std::size_t nan_resets = 0;
  double wall_seconds = 0.0;
  double step_size = 1.0;
  double tilde_mu = 0.0;  ///< conditioning proxy from lambda and T
};

inline std::vector<SolverKind> parse_solver_list(const json& j, const std::string& where) {
  std::vector<SolverKind> out;
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty list of solver names");
  for (const auto& s : j) {
    try {
      out.push_back(parse_solver(s.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return out;
}

inline ThresholdConfig parse_threshold_config(const json& j) {
  cfg::allow_keys(j, "config", {"experiment", "system", "grid", "solvers", "gd_step_sizes", "solver", "workers", "output"});
  ThresholdConfig c;
  c.system = j.value("system", json{{"name", "mean_field_rnn"}, {"D", 50}});
  if (c.system.value("name", "") != "mean_field_rnn") throw ConfigError("threshold: system must be mean_field_rnn");
  if (c.system.contains("g")) throw ConfigError("threshold: g comes from grid.g, not the system spec");
  const json grid = j.value("grid", json::object());
  cfg::allow_keys(grid, "grid", {"g", "T", "seeds"});
  c.g = cfg::number_grid(grid.value("g", json{{"min", 0.5}, {"max", 2.0}, {"count", 16}}), "grid.g");
  c.T = cfg::size_grid(grid.value("T", json::array({100, 317, 954})), "grid.T");
  c.seeds = cfg::seed_list(grid.value("seeds", json{{"count", 5}}), "grid.seeds");
  if (j.contains("solvers")) c.solvers = parse_solver_list(j["solvers"], "solvers");
  if (j.contains("gd_step_sizes")) c.gd_step_sizes = cfg::number_grid(j["gd_step_sizes"], "gd_step_sizes");
  for (double a : c.gd_step_sizes)
    if (!(a > 0.0)) throw ConfigError("gd_step_sizes: entries must be > 0");
  for (double g : c.g)
    if (!(g > 0.0)) throw ConfigError("grid.g: entries must be > 0");
  c.solver = parse_solver_config(j.value("solver", json(nullptr)));
  return c;
}

/// One row per (g, T, seed, solver). Gradient descent tries every step size and
/// keeps, for each (g, T), the one with the smallest median step count.
inline std::vector<ThresholdRow> run_threshold(const ThresholdConfig& c, std::size_t workers) {
  struct Point {
    double g;
    std::size_t T;
    std::uint64_t seed;
  };
  std::vector<Point> points;
  for (double g : c.g)
    for (std::size_t T : c.T)
      for (std::uint64_t s : c.seeds) points.push_back({g, T, s});

  const bool with_gd = std::find(c.solvers.begin(), c.solvers.end(), SolverKind::gd) != c.solvers.end();
  // results[p][k] for the non-gd solvers; gd[p][a] per step size.
  std::vector<std::vector<ThresholdRow>> results(points.size());
  std::vector<std::vector<ThresholdRow>> gd(points.size());

  parallel_for(points.size(), workers, [&](std::size_t i) {
    const Point& p = points[i];
    json spec = c.system;
    spec["g"] = p.g;
    const SystemInstance sys = make_system(spec, p.T, p.seed);
    const Trajectory truth = sequential_rollout(*sys.model, sys.s0, p.T);
    const double lambda = rollout_lle(*sys.model, truth, p.seed);
    SolverConfig sc = c.solver;
    sc.seed = p.seed;
    auto row = [&](SolverKind k, const SolverReport& r, double alpha) {
      ThresholdRow out;
      out.g = p.g;
      out.lambda = lambda;
      out.T = p.T;
      out.seed = p.seed;
      out.solver = k;
      out.steps = r.iterations;
      out.converged = r.converged;
      out.final_merit = final_merit(r);
      out.nan_resets = r.nan_resets;
      out.wall_seconds = r.wall_seconds;
      out.step_size = alpha;
      out.tilde_mu = std::isfinite(lambda) ? tilde_mu(lambda, p.T) : std::numeric_limits<double>::quiet_NaN();
      return out;
    };
    for (SolverKind k : c.solvers) {
      if (k == SolverKind::gd) continue;
      results[i].push_back(row(k, solve_recorded(k, *sys.model, sys.s0, sc), 1.0));
    }
    if (with_gd) {
      for (double a : c.gd_step_sizes) {
        SolverConfig g = sc;
        g.step_size = a;
        gd[i].push_back(row(SolverKind::gd, solve_recorded(SolverKind::gd, *sys.model, sys.s0, g), a));
      }
    }
  });

  if (with_gd) {
    // Unconverged runs count as one step past the cap when ranking step sizes.
    for (std::size_t i = 0; i < points.size();) {
      std::size_t j = i;
      while (j < points.size() && points[j].g == points[i].g && points[j].T == points[i].T) ++j;
      std::size_t best = 0;
      double best_med = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < c.gd_step_sizes.size(); ++a) {
        std::vector<double> steps;
        for (std::size_t k = i; k < j; ++k) {
          const auto& r = gd[k][a];
          steps.push_back(r.converged ? static_cast<double>(r.steps) : static_cast<double>(r.steps) + 1.0);
        }
        const double m = median(steps);
        if (m < best_med) {
          best_med = m;
          best = a;
        }
      }
      for (std::size_t k = i; k < j; ++k) results[k].push_back(gd[k][best]);
      i = j;
    }
  }

  std::vector<ThresholdRow> rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<ThresholdRow> ordered;
    for (SolverKind k : c.solvers)
      for (const auto& r : results[i])
        if (r.solver == k) ordered.push_back(r);
    rows.insert(rows.end(), ordered.begin(), ordered.end());
  }
  return rows;
}

inline void write_threshold_csv(std::ostream& os, const std::vector<ThresholdRow>& rows) {
  os << "schema_version,g,lambda,T,seed,solver,steps,converged,final_merit,nan_resets,wall_seconds,step_size,tilde_mu\n";
  for (const auto& r : rows)
    os << kCsvSchemaVersion << ',' << format_double(r.g) << ',' << csv_number(r.lambda) << ',' << r.T << ','
       << r.seed << ',' << solver_name(r.solver) << ',' << r.steps << ',' << (r.converged ? "true" : "false")
       << ',' << csv_number(r.final_merit) << ',' << r.nan_resets << ',' << csv_seconds(r.wall_seconds) << ','
       << format_double(r.step_size) << ',' << csv_number(r.tilde_mu) << '\n';
}

// --- two-well scaling ---------------------------------------------------------

struct TwowellConfig {
  json system;
  std::vector<std::size_t> T;
  std::vector<std::uint64_t> seeds;
  SolverConfig solver;
};

struct TwowellRow {
  std::size_t T = 0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double lambda = 0.0;
  bool converged = false;
  double final_merit = 0.0;
  std::size_t nan_resets = 0;
  double wall_seconds = 0.0;
  std::vector<double> per_iter_lle;
};

inline TwowellConfig parse_twowell_config(const json& j) {
  cfg::allow_keys(j, "config", {"experiment", "system", "grid", "solver", "workers", "output"});
  TwowellConfig c;
  c.system = j.value("system", json{{"name", "two_well"}});
  if (c.system.value("name", "") != "two_well") throw ConfigError("twowell: system must be two_well");
  const json grid = j.value("grid", json::object());
  cfg::allow_keys(grid, "grid", {"T", "seeds"});
  c.T = cfg::size_grid(grid.value("T", json::array({100, 1000, 10000})), "grid.T");
  c.seeds = cfg::seed_list(grid.value("seeds", json{{"count", 20}}), "grid.seeds");
  json solver = j.value("solver", json::object());
  if (!solver.contains("init")) solver["init"] = "std_normal";
  if (!solver.contains("track_lle")) solver["track_lle"] = true;
  c.solver = parse_solver_config(solver);
  return c;
}

inline std::vector<TwowellRow> run_twowell(const TwowellConfig& c, std::size_t workers) {
  std::vector<std::pair<std::size_t, std::uint64_t>> points;
  for (std::size_t T : c.T)
    for (std::uint64_t s : c.seeds) points.emplace_back(T, s);
  std::vector<TwowellRow> rows(points.size());
  parallel_for(points.size(), workers, [&](std::size_t i) {
    const auto [T, seed] = points[i];
    const SystemInstance sys = make_system(c.system, T, seed);
    const Trajectory truth = sequential_rollout(*sys.model, sys.s0, T);
    SolverConfig sc = c.solver;
    sc.seed = seed;
    const SolverReport r = solve_recorded(SolverKind::deer, *sys.model, sys.s0, sc);
    TwowellRow& row = rows[i];
    row.T = T;
    row.seed = seed;
    row.steps = r.iterations;
    row.lambda = rollout_lle(*sys.model, truth, seed);
    row.converged = r.converged;
    row.final_merit = final_merit(r);
    row.nan_resets = r.nan_resets;
    row.wall_seconds = r.wall_seconds;
    if (r.per_iter_lle) row.per_iter_lle = *r.per_iter_lle;
  });
  return rows;
}

inline void write_twowell_csv(std::ostream& os, const std::vector<TwowellRow>& rows) {
  os << "schema_version,T,seed,steps,lambda,converged,final_merit,nan_resets,wall_seconds\n";
  for (const auto& r : rows)
    os << kCsvSchemaVersion << ',' << r.T << ',' << r.seed << ',' << r.steps << ',' << csv_number(r.lambda) << ','
       << (r.converged ? "true" : "false") << ',' << csv_number(r.final_merit) << ',' << r.nan_resets << ','
       << csv_seconds(r.wall_seconds) << '\n';
}

/// Iteration 0 is the initialization.
inline void write_twowell_lle_csv(std::ostream& os, const std::vector<TwowellRow>& rows) {
  os << "schema_version,T,seed,iteration,lle\n";
  for (const auto& r : rows)
    for (std::size_t k = 0; k < r.per_iter_lle.size(); ++k)
      os << kCsvSchemaVersion << ',' << r.T << ',' << r.seed << ',' << k << ',' << csv_number(r.per_iter_lle[k])
         << '\n';
}

// --- observers ---------------------------------------------------------------

struct ObserverFlowSpec {
  Flow flow = Flow::lorenz;
  double dt = 0.01;
  ObserverStyle style = ObserverStyle::substitution;
  std::optional<Vec3> gain;
};

struct ObserverConfig {
  std::vector<ObserverFlowSpec> flows;
  std::size_t T = 30000;
  std::uint64_t seed = 0;
  /// Iteration cap for the chaotic system runs (defaults to T).
  std::optional<std::size_t> system_max_iters;
  SolverConfig solver;
};

struct ObserverRow {
  Flow flow = Flow::lorenz;
  std::string mode;
  double lambda = 0.0;  ///< per unit time
  std::size_t steps = 0;
  bool converged = false;
  std::size_t max_iters = 0;
  double final_merit = 0.0;
  std::size_t nan_resets = 0;
  double wall_seconds = 0.0;
};

inline ObserverConfig parse_observer_config(const json& j) {
  cfg::allow_keys(j, "config", {"experiment", "flows", "T", "seed", "system_max_iters", "solver", "workers", "output"});
  ObserverConfig c;
  const json flows = j.value("flows", json::array({json{{"flow", "lorenz"}}, json{{"flow", "rossler"}}}));
  if (!flows.is_array() || flows.empty()) throw ConfigError("flows: expected a non-empty list");
  for (const auto& f : flows) {
    cfg::allow_keys(f, "flows[]", {"flow", "dt", "style", "gain"});
    ObserverFlowSpec s;
    try {
      s.flow = parse_flow(cfg::get<std::string>(f, "flow", "flows[]"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("flows[]: ") + e.what());
    }
    s.dt = cfg::get_or(f, "dt", 0.01, "flows[]");
    if (!(s.dt > 0.0)) throw ConfigError("flows[]: dt must be > 0");
    s.style = parse_observer_style(cfg::get_or<std::string>(f, "style", "substitution", "flows[]"));
    if (f.contains("gain")) {
      const Vec k = cfg::vec(f["gain"], "flows[].gain");
      if (k.size() != 3) throw ConfigError("flows[].gain: expected 3 entries");
      s.gain = Vec3{k[0], k[1], k[2]};
    }
    c.flows.push_back(s);
  }
  c.T = cfg::get_or<std::size_t>(j, "T", 30000, "config");
  if (c.T < 10) throw ConfigError("observer: T must be >= 10");
  c.seed = cfg::get_or<std::uint64_t>(j, "seed", 0, "config");
  if (j.contains("system_max_iters") && !j["system_max_iters"].is_null())
    c.system_max_iters = cfg::get<std::size_t>(j, "system_max_iters", "config");
  json solver = j.value("solver", json::object());
  if (!solver.contains("init")) solver["init"] = "std_normal";
  c.solver = parse_solver_config(solver);
  return c;
}

inline json flow_spec_json(const ObserverFlowSpec& f, const std::string& mode) {
  json j = {{"name", flow_name(f.flow)}, {"dt", f.dt}, {"mode", mode}, {"style", observer_style_name(f.style)}};
  if (f.gain) j["gain"] = {(*f.gain)[0], (*f.gain)[1], (*f.gain)[2]};
  return j;
}

/// Rows for each flow: the chaotic system, then its observer.
inline std::vector<ObserverRow> run_observer(const ObserverConfig& c, std::size_t workers) {
  std::vector<std::pair<std::size_t, std::string>> points;
  for (std::size_t i = 0; i < c.flows.size(); ++i) {
    points.emplace_back(i, "system");
    points.emplace_back(i, "observer");
  }
  std::vector<ObserverRow> rows(points.size());
  parallel_for(points.size(), workers, [&](std::size_t i) {
    const auto& [fi, mode] = points[i];
    const ObserverFlowSpec& f = c.flows[fi];
    const SystemInstance sys = make_system(flow_spec_json(f, mode), c.T, c.seed);
    const Trajectory roll = sequential_rollout(*sys.model, sys.s0, c.T);
    SolverConfig sc = c.solver;
    sc.seed = c.seed;
    if (mode == "system" && c.system_max_iters) sc.max_iters = c.system_max_iters;
    const SolverReport r = solve_recorded(SolverKind::deer, *sys.model, sys.s0, sc);
    ObserverRow& row = rows[i];
    row.flow = f.flow;
    row.mode = mode;
    row.lambda = rollout_lle(*sys.model, roll, c.seed) * sys.time_scale;
    row.steps = r.iterations;
    row.converged = r.converged;
    row.max_iters = sc.max_iters.value_or(c.T);
    row.final_merit = final_merit(r);
    row.nan_resets = r.nan_resets;
    row.wall_seconds = r.wall_seconds;
  });
  return rows;
}

inline void write_observer_csv(std::ostream& os, const std::vector<ObserverRow>& rows) {
  os << "schema_version,flow,mode,lambda,steps,converged,max_iters,final_merit,nan_resets,wall_seconds\n";
  for (const auto& r : rows)
    os << kCsvSchemaVersion << ',' << flow_name(r.flow) << ',' << r.mode << ',' << csv_number(r.lambda) << ','
       << r.steps << ',' << (r.converged ? "true" : "false") << ',' << r.max_iters << ','
       << csv_number(r.final_merit) << ',' << r.nan_resets << ',' << csv_seconds(r.wall_seconds) << '\n';
}

// --- oracle check ------------------------------------------------------------

struct OracleCheckConfig {
  std::size_t sandwich_systems = 100;
  std::size_t neumann_systems = 100;
  std::size_t perturbation_systems = 30;
  std::size_t linear_systems = 20;
  std::size_t scan_cases = 50;
  std::size_t gradient_systems = 50;
  std::size_t basin_systems = 10;
  std::uint64_t seed = 0;
};

inline OracleCheckConfig parse_oracle_config(const json& j) {
  cfg::allow_keys(j, "config",
                  {"experiment", "sandwich_systems", "neumann_systems", "perturbation_systems", "linear_systems",
                   "scan_cases", "gradient_systems", "basin_systems", "seed", "workers", "output"});
  OracleCheckConfig c;
  c.sandwich_systems = cfg::get_or(j, "sandwich_systems", c.sandwich_systems, "config");
  c.neumann_systems = cfg::get_or(j, "neumann_systems", c.neumann_systems, "config");
  c.perturbation_systems = cfg::get_or(j, "perturbation_systems", c.perturbation_systems, "config");
  c.linear_systems = cfg::get_or(j, "linear_systems", c.linear_systems, "config");
  c.scan_cases = cfg::get_or(j, "scan_cases", c.scan_cases, "config");
  c.gradient_systems = cfg::get_or(j, "gradient_systems", c.gradient_systems, "config");
  c.basin_systems = cfg::get_or(j, "basin_systems", c.basin_systems, "config");
  c.seed = cfg::get_or<std::uint64_t>(j, "seed", 0, "config");
  return c;
}

inline std::vector<SuiteResult> run_oracle_check(const OracleCheckConfig& c, std::size_t workers) {
  std::vector<SuiteResult> out(7);
  parallel_for(out.size(), workers, [&](std::size_t i) {
    const std::uint64_t s = c.seed;
    switch (i) {
      case 0: out[i] = sandwich_suite(c.sandwich_systems, s); break;
      case 1: out[i] = neumann_suite(c.neumann_systems, s + 1); break;
      case 2: out[i] = perturbation_suite(c.perturbation_systems, s + 2); break;
      case 3: out[i] = linear_one_step_suite(c.linear_systems, s + 3); break;
      case 4: out[i] = scan_equivalence_suite(c.scan_cases, s + 4); break;
      case 5: out[i] = gradient_suite(c.gradient_systems, s + 5); break;
      case 6: out[i] = quadratic_basin_suite(c.basin_systems, s + 6); break;
    }
  });
  return out;
}

inline json oracle_json(const std::vector<SuiteResult>& suites) {
  json arr = json::array();
  bool all = true;
  for (const auto& s : suites) {
    all = all && s.ok();
    arr.push_back({{"name", s.name},
                   {"passed", s.ok()},
                   {"cases", s.total},
                   {"cases_passed", s.passed},
                   {"worst_margin", number(s.worst_margin)},
                   {"detail", s.detail}});
  }
  return {{"passed", all}, {"suites", arr}};
}

// --- bounds --------------------------------------------------------------------

struct BoundsResult {
  ConditioningReport report;
  double r0_norm = 0.0;
  LinearRate rate;
  double time_scale = 1.0;
};

/// Conditioning report along the rollout of the configured system. a = b = 1
/// unless measure_burn_in is set (oracle scale only). beta and chi come from
/// the config, or from a DEER run when fit_rate is set.
inline BoundsResult run_bounds(const json& j) {
  cfg::allow_keys(j, "config",
                  {"experiment", "system", "T", "seed", "solver", "lipschitz_samples", "lipschitz_radius",
                   "measure_burn_in", "beta", "chi", "fit_rate", "burn_in", "workers", "output"});
  const auto T = cfg::get<std::size_t>(j, "T", "config");
  const auto seed = cfg::get_or<std::uint64_t>(j, "seed", 0, "config");
  if (T < 10) throw ConfigError("bounds: T must be >= 10");
  const SystemInstance sys = make_system(cfg::get<json>(j, "system", "config"), T, seed);
  SolverConfig sc = parse_solver_config(j.value("solver", json(nullptr)));
  sc.seed = seed;
  const Trajectory truth = sequential_rollout(*sys.model, sys.s0, T);
  if (!truth.finite()) throw ConfigError("bounds: rollout overflowed");

  ConditioningOptions opts;
  opts.lle.seed = seed;
  opts.lle.burn_in = cfg::get_or(j, "burn_in", true, "config");
  opts.measure_burn_in = cfg::get_or(j, "measure_burn_in", false, "config");
  if (opts.measure_burn_in && T * sys.model->dim() > kOracleMaxSide)
    throw ConfigError("bounds: measure_burn_in needs T*D <= " + std::to_string(kOracleMaxSide));
  opts.lipschitz_samples = cfg::get_or<std::size_t>(j, "lipschitz_samples", 2000, "config");
  opts.lipschitz_radius = cfg::get_or(j, "lipschitz_radius", 1.0, "config");
  opts.seed = seed;
  if (opts.lipschitz_samples < 2) throw ConfigError("bounds: lipschitz_samples must be >= 2");

  BoundsResult out;
  out.time_scale = sys.time_scale;
  {
    SolverConfig one = sc;
    one.max_iters = 1;
    one.tol = std::numeric_limits<double>::min();
    const SolverReport r0 = solve_recorded(SolverKind::deer, *sys.model, sys.s0, one);
    out.r0_norm = std::sqrt(2.0 * r0.merit_history.front());
  }
  if (cfg::get_or(j, "fit_rate", false, "config")) {
    const SolverReport r = solve_recorded(SolverKind::deer, *sys.model, sys.s0, sc);
    out.rate = fit_linear_rate(r.merit_history);
  } else {
    out.rate.beta = cfg::get_or(j, "beta", 0.5, "config");
    out.rate.chi = cfg::get_or(j, "chi", 1.0, "config");
    if (!(out.rate.beta > 0.0 && out.rate.beta < 1.0)) throw ConfigError("bounds: beta must be in (0, 1)");
    if (!(out.rate.chi >= 1.0)) throw ConfigError("bounds: chi must be >= 1");
  }
  opts.rate = out.rate;
  opts.r0_norm = out.r0_norm;
  out.report = assess_conditioning(*sys.model, truth, opts);
  return out;
}

inline std::string verdict_line(const ConditioningReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "parallelizable: %s (lambda=%.6g, predicted_steps=%.6g)",
                r.lle < 0.0 ? "yes" : "no", r.lle, r.predicted_steps);
  return buf;
}

}  // namespace parseq

#endif  // PARSEQ_EXPERIMENTS_HPP_
