#ifndef PARSEQ_ORACLE_HPP_
#define PARSEQ_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "parseq/analysis.hpp"
#include "parseq/core.hpp"
#include "parseq/linalg.hpp"
#include "parseq/random.hpp"
#include "parseq/scan.hpp"
#include "parseq/solvers.hpp"
#include "parseq/systems.hpp"

// Brute-force property suites at oracle scale. Each returns how many cases
// passed and the worst margin seen (negative margin = violation).
namespace parseq {

struct SuiteResult {
  SuiteResult() = default;
  explicit SuiteResult(std::string n) : name(std::move(n)) {}

  std::string name;
  std::size_t total = 0;
  std::size_t passed = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::string detail;

  bool ok() const { return total > 0 && passed == total; }
  void record(double margin) {
    ++total;
    if (margin >= 0.0) ++passed;
    worst_margin = std::min(worst_margin, margin);
  }
};

/// tanh RNN with a dense Gaussian W of spectral scale `scale` (self-coupling
/// allowed, so D = 1 is not degenerate).
inline MeanFieldRnn random_tanh_rnn(std::size_t D, std::size_t T, double scale, std::uint64_t seed,
                                    double amplitude = 0.5) {
  Rng rng = make_rng(seed, streams::weights);
  std::normal_distribution<double> nd(0.0, scale / std::sqrt(static_cast<double>(D)));
  Mat w(D, D);
  for (double& x : w.data()) x = nd(rng);
  return MeanFieldRnn(std::move(w), scale, T, amplitude);
}

/// lower <= sigma_min(J) <= upper with a, b measured from exact products.
inline SuiteResult sandwich_suite(std::size_t n_systems = 100, std::uint64_t seed = 0, double slack = 1e-9) {
  SuiteResult res{"theorem1_sandwich"};
  Rng rng = make_rng(seed, streams::inputs);
  std::uniform_int_distribution<std::size_t> dd(1, 4), td(1, 12);
  std::uniform_real_distribution<double> sd(0.2, 3.0);
  for (std::size_t k = 0; k < n_systems; ++k) {
    const std::size_t D = dd(rng), T = td(rng);
    const double scale = sd(rng);
    const auto model = random_tanh_rnn(D, T, scale, seed * 1000 + k);
    const auto traj = sequential_rollout(model, random_initial_state(D, seed * 1000 + k), T);
    const auto blocks = subdiagonal_blocks(model, traj);
    const double lambda = product_exponent(blocks);
    const BurnIn ab = measure_burn_in(blocks, lambda);
    const PlBounds pb = pl_bounds(lambda, T, ab.a, ab.b);
    const double smin = svd_extremes(build_full_jacobian(model, traj)).sigma_min;
    res.record(std::min(smin - pb.lower + slack, pb.upper - smin + slack));
  }
  return res;
}

/// ||J^{-1}|| against the Neumann-series bounds, plus 1 <= sigma_max(J) <= 1 + max ||J_t||.
inline SuiteResult neumann_suite(std::size_t n_systems = 100, std::uint64_t seed = 1, double slack = 1e-9) {
  SuiteResult res{"neumann_and_sigma_max"};
  Rng rng = make_rng(seed, streams::inputs);
  std::uniform_int_distribution<std::size_t> dd(1, 4), td(1, 12);
  std::uniform_real_distribution<double> sd(0.2, 3.0);
  for (std::size_t k = 0; k < n_systems; ++k) {
    const std::size_t D = dd(rng), T = td(rng);
    const auto model = random_tanh_rnn(D, T, sd(rng), seed * 1000 + k);
    const auto traj = sequential_rollout(model, random_initial_state(D, seed * 1000 + k), T);
    const NeumannCheck nc = neumann_inverse_norm_check(model, traj);
    const double rel = slack * std::max(1.0, nc.bound);
    double margin = std::min(nc.bound - nc.norm + rel, nc.norm - nc.lower + rel);
    double max_block = 0.0;
    for (const auto& b : subdiagonal_blocks(model, traj)) max_block = std::max(max_block, singular_values(b).front());
    const double smax = svd_extremes(build_full_jacobian(model, traj)).sigma_max;
    margin = std::min({margin, smax - 1.0 + slack, 1.0 + max_block - smax + slack});
    res.record(margin);
  }
  return res;
}

/// |sigma_min(J(s)) - sigma_min(J(s*))| <= L ||s - s*|| with L the 2x-inflated
/// sampled Lipschitz estimate.
inline SuiteResult perturbation_suite(std::size_t n_systems = 30, std::uint64_t seed = 2, double slack = 1e-9) {
  SuiteResult res{"sigma_min_perturbation"};
  Rng rng = make_rng(seed, streams::inputs);
  std::uniform_int_distribution<std::size_t> dd(1, 4), td(2, 12);
  std::uniform_real_distribution<double> sd(0.2, 2.0), rd(1e-3, 0.3);
  std::normal_distribution<double> nd;
  for (std::size_t k = 0; k < n_systems; ++k) {
    const std::size_t D = dd(rng), T = td(rng);
    const auto model = random_tanh_rnn(D, T, sd(rng), seed * 1000 + k);
    const auto star = sequential_rollout(model, random_initial_state(D, seed * 1000 + k), T);
    const double radius = rd(rng);
    const double L = 2.0 * estimate_lipschitz(model, star, 2000, radius, seed + k);
    Trajectory s = star;
    Vec dir(T * D);
    for (double& x : dir) x = nd(rng);
    const double n = norm2(dir);
    for (std::size_t i = 0; i < dir.size(); ++i) s.states().data()[i] += radius * dir[i] / n;
    const double a = svd_extremes(build_full_jacobian(model, star)).sigma_min;
    const double b = svd_extremes(build_full_jacobian(model, s)).sigma_min;
    res.record(L * radius + slack - std::abs(a - b));
  }
  return res;
}

/// DEER converges in exactly one step on linear time-varying systems.
inline SuiteResult linear_one_step_suite(std::size_t n_systems = 20, std::uint64_t seed = 3,
                                         const ScanOptions& scan = {}) {
  SuiteResult res{"linear_one_step"};
  Rng rng = make_rng(seed, streams::inputs);
  std::uniform_int_distribution<std::size_t> dd(1, 8), td(1, 2000);
  std::uniform_real_distribution<double> sd(0.3, 1.5);
  for (std::size_t k = 0; k < n_systems; ++k) {
    const std::size_t D = dd(rng);
    const double scale = sd(rng);
    std::size_t T = td(rng);
    // Expanding systems get a horizon short enough to stay representable.
    if (scale > 1.0) T = std::min<std::size_t>(T, static_cast<std::size_t>(15.0 / std::log(scale)));
    const auto model = random_linear_system(D, T, seed * 1000 + k, scale);
    SolverConfig cfg;
    cfg.seed = k;
    cfg.scan = scan;
    cfg.tol = 1e-12;
    const auto rep = deer_solve(model, random_initial_state(D, seed * 1000 + k), cfg);
    const double m = rep.merit_history.back();
    const bool pass = rep.iterations == 1 && m <= 1e-12;
    res.record(pass ? 1e-12 - m : -std::max(1.0, m));
  }
  return res;
}

/// Parallel and sequential affine scans agree to 1e-12 relative.
inline SuiteResult scan_equivalence_suite(std::size_t n_cases = 50, std::uint64_t seed = 4) {
  SuiteResult res{"scan_equivalence"};
  Rng rng = make_rng(seed, streams::inputs);
  std::uniform_int_distribution<std::size_t> dd(1, 7), td(1, 3000), cd(2, 64);
  std::uniform_real_distribution<double> ad(0.3, 1.1);
  std::normal_distribution<double> nd;
  const std::size_t fixed_T[] = {1, 2, 1023, 4096};
  for (std::size_t k = 0; k < n_cases; ++k) {
    const std::size_t T = k < 4 ? fixed_T[k] : td(rng);
    const std::size_t D = dd(rng);
    const double scale = ad(rng) / std::sqrt(static_cast<double>(D));
    DenseAffineSequence seq(T, D);
    for (std::size_t t = 0; t < T; ++t) {
      for (double& x : seq.matrix(t)) x = scale * nd(rng);
      for (double& x : seq.offset(t)) x = nd(rng);
    }
    const auto ref = affine_scan(seq, {ScanMode::sequential});
    ScanOptions par{ScanMode::parallel, cd(rng), 0};
    const auto out = affine_scan(seq, par);
    const double bound = 1e-12 * (1.0 + max_abs(ref.data()));
    double err = 0.0;
    for (std::size_t i = 0; i < ref.data().size(); ++i)
      err = std::max(err, std::abs(ref.data()[i] - out.data()[i]));
    res.record(bound - err);
  }
  return res;
}

/// merit_gradient against central differences of the merit.
inline SuiteResult gradient_suite(std::size_t n_systems = 50, std::uint64_t seed = 5, double tol = 1e-5) {
  SuiteResult res{"merit_gradient"};
  Rng rng = make_rng(seed, streams::inputs);
  std::uniform_int_distribution<std::size_t> dd(1, 5), td(1, 10);
  std::uniform_real_distribution<double> sd(0.3, 2.0), ud(-1.0, 1.0);
  for (std::size_t k = 0; k < n_systems; ++k) {
    const std::size_t D = dd(rng), T = td(rng);
    const auto model = random_tanh_rnn(D, T, sd(rng), seed * 1000 + k);
    Trajectory traj(random_initial_state(D, seed * 1000 + k), T);
    for (double& x : traj.states().data()) x = 2.0 * ud(rng);
    const StateArray grad = merit_gradient(model, traj);
    double err = 0.0;
    for (std::size_t i = 0; i < T * D; ++i) {
      const double x = traj.states().data()[i];
      const double h = 1e-6 * (1.0 + std::abs(x));
      traj.states().data()[i] = x + h;
      const double mp = merit(residual(model, traj));
      traj.states().data()[i] = x - h;
      const double mm = merit(residual(model, traj));
      traj.states().data()[i] = x;
      err = std::max(err, std::abs((mp - mm) / (2.0 * h) - grad.data()[i]));
    }
    res.record(tol - err / std::max(1.0, max_abs(grad.data())));
  }
  return res;
}

/// Inside the basin ||r|| <= mu/L every DEER step obeys ||r+|| <= (L/2mu)||r||^2.
/// mu is sigma_min^2 of the dense J at the solution; L is the 2x-inflated
/// sampled Lipschitz estimate. Margins are relative to the bound.
inline SuiteResult quadratic_basin_suite(std::size_t n_systems = 10, std::uint64_t seed = 6,
                                         std::size_t D = 8, std::size_t T = 50, double g = 0.9) {
  SuiteResult res{"quadratic_basin"};
  std::size_t inside = 0;
  for (std::size_t k = 0; k < n_systems; ++k) {
    const auto model = mean_field_rnn(D, g, T, seed * 1000 + k);
    const Vec s0 = random_initial_state(D, seed * 1000 + k);
    const auto star = sequential_rollout(model, s0, T);
    const double smin = svd_extremes(build_full_jacobian(model, star)).sigma_min;
    const double mu = smin * smin;
    const double L = 2.0 * estimate_lipschitz(model, star, 3000, 1.0, seed + k);
    SolverConfig cfg;
    cfg.seed = k;
    const auto rep = deer_solve(model, s0, cfg);
    const double radius = basin_radius(mu, L);
    bool entered = false;
    for (std::size_t i = 0; i + 1 < rep.merit_history.size(); ++i) {
      const double r = std::sqrt(2.0 * rep.merit_history[i]);
      const double next = std::sqrt(2.0 * rep.merit_history[i + 1]);
      entered = entered || r <= radius;
      if (!entered) continue;
      ++inside;
      const double bound = (L / (2.0 * mu)) * r * r * (1.0 + 1e-6);
      res.record((bound - next) / bound);
    }
  }
  res.detail = std::to_string(inside) + " steps checked inside the basin";
  return res;
}

}  // namespace parseq

#endif  // PARSEQ_ORACLE_HPP_
