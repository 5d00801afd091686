#ifndef PARSEQ_SOLVERS_HPP_
#define PARSEQ_SOLVERS_HPP_

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "parseq/analysis.hpp"
#include "parseq/core.hpp"
#include "parseq/linalg.hpp"
#include "parseq/parallel.hpp"
#include "parseq/random.hpp"
#include "parseq/scan.hpp"

namespace parseq {

enum class InitKind { zeros, uniform01, std_normal, given };
enum class NanPolicy { reset_to_init, abort };

struct SolverConfig {
  double tol = 1e-7;
  /// Defaults to T.
  std::optional<std::size_t> max_iters;
  InitKind init = InitKind::uniform01;
  /// Initial s_1..s_T when init == given.
  std::optional<StateArray> initial;
  /// Gradient descent only.
  double step_size = 0.25;
  NanPolicy nan_policy = NanPolicy::reset_to_init;
  /// Reset non-finite rows to the original initial draw instead of a fresh one.
  bool nan_reset_same = false;
  std::uint64_t seed = 0;
  /// Record the LLE of the Jacobians along every iterate (needs T >= 10).
  bool track_lle = false;
  ScanOptions scan{};
  /// Threads for building linearizations and gradients; 0 means 1.
  std::size_t workers = 0;

  void validate(const DynamicsModel& model) const {
    if (!(tol > 0.0)) throw std::invalid_argument("solver config: tol must be > 0");
    if (max_iters && *max_iters < 1) throw std::invalid_argument("solver config: max_iters must be >= 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("solver config: step_size must be > 0");
    if (init == InitKind::given) {
      if (!initial) throw std::invalid_argument("solver config: init 'given' needs an initial trajectory");
      if (initial->rows() != model.horizon() || initial->cols() != model.dim())
        throw std::invalid_argument("solver config: given initial trajectory has the wrong shape");
    }
  }
};

inline InitKind parse_init(const std::string& s) {
  if (s == "zeros") return InitKind::zeros;
  if (s == "uniform01") return InitKind::uniform01;
  if (s == "std_normal") return InitKind::std_normal;
  if (s == "given") return InitKind::given;
  throw std::invalid_argument("unknown init '" + s + "'");
}

inline std::string init_name(InitKind k) {
  switch (k) {
    case InitKind::zeros: return "zeros";
    case InitKind::uniform01: return "uniform01";
    case InitKind::std_normal: return "std_normal";
    case InitKind::given: return "given";
  }
  return "?";
}

inline NanPolicy parse_nan_policy(const std::string& s) {
  if (s == "reset_to_init") return NanPolicy::reset_to_init;
  if (s == "abort") return NanPolicy::abort;
  throw std::invalid_argument("unknown nan_policy '" + s + "'");
}

struct SolverReport {
  Trajectory final;
  std::size_t iterations = 0;
  std::vector<double> merit_history;
  bool converged = false;
  std::size_t nan_resets = 0;
  std::optional<std::vector<double>> per_iter_lle;
  double wall_seconds = 0.0;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, SolverReport partial)
      : std::runtime_error(what), report_(std::move(partial)) {}
  const SolverReport& report() const { return report_; }

 private:
  SolverReport report_;
};

namespace detail {

/// Draws initial iterates; keeps its stream so that resets continue it.
class InitSource {
 public:
  InitSource(const SolverConfig& cfg, std::size_t T, std::size_t D)
      : cfg_(cfg), rng_(make_rng(cfg.seed, streams::solver_init)), T_(T), D_(D) {
    first_ = draw();
  }

  const StateArray& first() const { return first_; }

  StateArray draw() {
    if (cfg_.init == InitKind::given) return *cfg_.initial;
    StateArray out(T_, D_);
    if (cfg_.init == InitKind::uniform01) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (double& x : out.data()) x = u(rng_);
    } else if (cfg_.init == InitKind::std_normal) {
      std::normal_distribution<double> n;
      for (double& x : out.data()) x = n(rng_);
    }
    return out;
  }

  StateArray reset_values() { return cfg_.nan_reset_same ? first_ : draw(); }

 private:
  const SolverConfig& cfg_;
  Rng rng_;
  std::size_t T_, D_;
  StateArray first_;
};

/// Fills element t-1 with (J_t(s_{t-1}), -r_t) for every t.
inline void linearize(const DynamicsModel& model, const Trajectory& traj, DenseAffineSequence& seq,
                      std::size_t workers) {
  const std::size_t T = traj.length();
  const std::size_t D = traj.dim();
  const std::size_t parts = std::max<std::size_t>(1, std::min(workers, T));
  const auto bounds = chunk_bounds(T, parts);
  parallel_for(parts, workers, [&](std::size_t k) {
    Vec f(D);
    for (std::size_t i = bounds[k]; i < bounds[k + 1]; ++i) {
      const std::size_t t = i + 1;
      model.linearize_into(t, traj.state(t - 1), f, seq.matrix(i));
      const auto s = traj.state(t);
      auto b = seq.offset(i);
      for (std::size_t j = 0; j < D; ++j) b[j] = f[j] - s[j];
    }
  });
}

inline double linearization_merit(const DenseAffineSequence& seq) {
  double m = 0.0;
  for (std::size_t t = 0; t < seq.length(); ++t) m += merit(seq.offset(t));
  return m;
}

inline double sequence_lle(const DenseAffineSequence& seq, std::uint64_t seed) {
  LleOptions opts;
  opts.seed = seed;
  const std::size_t D = seq.dim();
  return mean(lle_estimates(seq.length(), D,
                            [&](std::size_t t, std::span<double> out) {
                              const auto m = seq.matrix(t - 1);
                              std::copy(m.begin(), m.end(), out.begin());
                            },
                            opts));
}

/// Replaces every row s_t whose state is non-finite or whose residual r_t has
/// a non-finite squared norm, plus the row s_{t-1} feeding such a residual.
/// If no single row is to blame (the merit overflowed only in the sum), every
/// row is replaced. Returns true if anything changed.
inline bool reset_nonfinite(Trajectory& traj, const DenseAffineSequence& seq, const StateArray& fresh) {
  const std::size_t T = traj.length();
  std::vector<bool> bad(T + 1, false);
  bool any_bad = false;
  for (std::size_t t = 1; t <= T; ++t) {
    if (!all_finite(traj.state(t))) bad[t] = true;
    if (!std::isfinite(merit(seq.offset(t - 1)))) {
      bad[t] = true;
      if (t >= 2) bad[t - 1] = true;
    }
    any_bad = any_bad || bad[t];
  }
  if (!any_bad && !std::isfinite(linearization_merit(seq))) std::fill(bad.begin(), bad.end(), true);
  bool any = false;
  for (std::size_t t = 1; t <= T; ++t) {
    if (!bad[t]) continue;
    const auto src = fresh.row(t - 1);
    std::copy(src.begin(), src.end(), traj.state_mut(t).begin());
    any = true;
  }
  return any;
}

/// Shared iteration loop. `update(traj, seq)` advances the iterate in place
/// given the linearization at the current iterate.
template <class Update>
SolverReport run_solver(const DynamicsModel& model, std::span<const double> s0, const SolverConfig& cfg,
                        Update&& update) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(model);
  const std::size_t T = model.horizon();
  const std::size_t D = model.dim();
  if (T == 0) throw std::invalid_argument("solver: horizon must be >= 1");
  if (s0.size() != D) throw std::invalid_argument("solver: s0 dimension mismatch");
  if (!all_finite(s0)) throw std::invalid_argument("solver: s0 must be finite");
  const std::size_t max_iters = cfg.max_iters.value_or(T);
  const std::size_t workers = std::max<std::size_t>(1, cfg.workers);
  const bool lle = cfg.track_lle && T >= 10;

  InitSource init(cfg, T, D);
  SolverReport rep;
  rep.final = Trajectory(Vec(s0.begin(), s0.end()), init.first());
  if (lle) rep.per_iter_lle.emplace();
  DenseAffineSequence seq(T, D);

  auto finish = [&] {
    rep.converged = rep.merit_history.back() <= cfg.tol;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  auto evaluate = [&] {
    linearize(model, rep.final, seq, workers);
    double m = linearization_merit(seq);
    if (!std::isfinite(m) || !rep.final.finite()) {
      if (cfg.nan_policy == NanPolicy::abort) {
        rep.merit_history.push_back(m);
        finish();
        throw SolverError("solver: non-finite iterate at iteration " + std::to_string(rep.iterations),
                          std::move(rep));
      }
      if (reset_nonfinite(rep.final, seq, init.reset_values())) {
        ++rep.nan_resets;
        linearize(model, rep.final, seq, workers);
        m = linearization_merit(seq);
      }
    }
    rep.merit_history.push_back(m);
    if (lle) rep.per_iter_lle->push_back(sequence_lle(seq, cfg.seed));
  };

  evaluate();
  while (!(rep.merit_history.back() <= cfg.tol) && rep.iterations < max_iters) {
    update(rep.final, seq);
    ++rep.iterations;
    evaluate();
  }
  finish();
  return rep;
}

}  // namespace detail

/// Gauss-Newton on the merit: each step solves the linearized recursion
/// ds_t = J_t ds_{t-1} - r_t (ds_0 = 0) with an affine scan.
inline SolverReport deer_solve(const DynamicsModel& model, std::span<const double> s0,
                               const SolverConfig& cfg = {}) {
  return detail::run_solver(model, s0, cfg, [&](Trajectory& traj, const DenseAffineSequence& seq) {
    const StateArray delta = affine_scan(seq, cfg.scan);
    auto s = traj.states().data();
    const auto d = delta.data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += d[i];
  });
}

/// DEER with each J_t replaced by its diagonal.
inline SolverReport quasi_deer_solve(const DynamicsModel& model, std::span<const double> s0,
                                     const SolverConfig& cfg = {}) {
  DiagonalAffineSequence diag(model.horizon(), model.dim());
  return detail::run_solver(model, s0, cfg, [&](Trajectory& traj, const DenseAffineSequence& seq) {
    const std::size_t D = seq.dim();
    for (std::size_t t = 0; t < seq.length(); ++t) {
      const auto m = seq.matrix(t);
      auto a = diag.diagonal(t);
      for (std::size_t i = 0; i < D; ++i) a[i] = m[i * D + i];
      const auto b = seq.offset(t);
      std::copy(b.begin(), b.end(), diag.offset(t).begin());
    }
    const StateArray delta = affine_scan(diag, cfg.scan);
    auto s = traj.states().data();
    const auto d = delta.data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += d[i];
  });
}

/// Fixed-step gradient descent on the merit, s <- s - alpha J^T r.
inline SolverReport gd_solve(const DynamicsModel& model, std::span<const double> s0,
                             const SolverConfig& cfg = {}) {
  const std::size_t workers = std::max<std::size_t>(1, cfg.workers);
  return detail::run_solver(model, s0, cfg, [&](Trajectory& traj, const DenseAffineSequence& seq) {
    const std::size_t T = seq.length();
    const std::size_t D = seq.dim();
    StateArray grad(T, D);
    const std::size_t parts = std::max<std::size_t>(1, std::min(workers, T));
    const auto bounds = chunk_bounds(T, parts);
    // offset(t-1) holds -r_t and matrix(t) holds J_{t+1}.
    parallel_for(parts, workers, [&](std::size_t k) {
      for (std::size_t i = bounds[k]; i < bounds[k + 1]; ++i) {
        auto g = grad.row(i);
        const auto nr = seq.offset(i);
        for (std::size_t j = 0; j < D; ++j) g[j] = -nr[j];
        if (i + 1 == T) continue;
        const auto jac = seq.matrix(i + 1);
        const auto nrn = seq.offset(i + 1);
        for (std::size_t r = 0; r < D; ++r)
          for (std::size_t c = 0; c < D; ++c) g[c] += jac[r * D + c] * nrn[r];
      }
    });
    auto s = traj.states().data();
    const auto gd = grad.data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] -= cfg.step_size * gd[i];
  });
}

enum class SolverKind { deer, quasi_deer, gd };

inline SolverKind parse_solver(const std::string& s) {
  if (s == "deer") return SolverKind::deer;
  if (s == "quasi_deer") return SolverKind::quasi_deer;
  if (s == "gd") return SolverKind::gd;
  throw std::invalid_argument("unknown solver '" + s + "'");
}

inline std::string solver_name(SolverKind k) {
  switch (k) {
    case SolverKind::deer: return "deer";
    case SolverKind::quasi_deer: return "quasi_deer";
    case SolverKind::gd: return "gd";
  }
  return "?";
}

inline SolverReport solve(SolverKind kind, const DynamicsModel& model, std::span<const double> s0,
                          const SolverConfig& cfg = {}) {
  switch (kind) {
    case SolverKind::deer: return deer_solve(model, s0, cfg);
    case SolverKind::quasi_deer: return quasi_deer_solve(model, s0, cfg);
    case SolverKind::gd: return gd_solve(model, s0, cfg);
  }
  throw std::invalid_argument("solve: unknown solver");
}

}  // namespace parseq

#endif  // PARSEQ_SOLVERS_HPP_
