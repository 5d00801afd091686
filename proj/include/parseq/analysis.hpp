#ifndef PARSEQ_ANALYSIS_HPP_
#define PARSEQ_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "parseq/core.hpp"
#include "parseq/linalg.hpp"
#include "parseq/random.hpp"

namespace parseq {

// --- largest Lyapunov exponent ----------------------------------------------

struct LleOptions {
  std::size_t n_vectors = 3;
  std::uint64_t seed = 0;
  /// Exclude the first min(100, T/10) log-stretches from the average. The
  /// vectors are still propagated through those steps.
  bool burn_in = true;
};

inline std::size_t lle_burn_in_steps(std::size_t T, bool enabled) {
  return enabled ? std::min<std::size_t>(100, T / 10) : 0;
}

/// Per-start-vector LLE estimates. `jacobian_at(t, out)` writes J_t (t = 1..T)
/// row-major into a D*D span.
///
/// Each start vector is drawn uniformly on the unit sphere, pushed through
/// J_1..J_T, renormalized every step, and its log-stretches averaged. A
/// vector annihilated exactly (zero stretch) yields -inf.
template <class JacobianAt>
std::vector<double> lle_estimates(std::size_t T, std::size_t D, JacobianAt&& jacobian_at,
                                  const LleOptions& opts = {}) {
  if (T < 10) throw std::invalid_argument("estimate_lle: need T >= 10 Jacobians");
  if (D == 0 || opts.n_vectors == 0) throw std::invalid_argument("estimate_lle: empty problem");
  Rng rng = make_rng(opts.seed, streams::lle_vectors);
  std::normal_distribution<double> nd;
  const std::size_t nv = opts.n_vectors;
  std::vector<Vec> u(nv, Vec(D));
  for (auto& v : u) {
    double n = 0.0;
    while (n == 0.0) {
      for (double& x : v) x = nd(rng);
      n = norm2(v);
    }
    for (double& x : v) x /= n;
  }
  const std::size_t skip = lle_burn_in_steps(T, opts.burn_in);
  std::vector<double> sum(nv, 0.0);
  std::vector<bool> dead(nv, false);
  Vec jac(D * D), next(D);
  for (std::size_t t = 1; t <= T; ++t) {
    jacobian_at(t, std::span<double>(jac));
    for (std::size_t k = 0; k < nv; ++k) {
      if (dead[k]) continue;
      gemv_raw(jac.data(), u[k].data(), next.data(), D, D);
      const double stretch = norm2(next);
      if (stretch == 0.0 || !std::isfinite(stretch)) {
        dead[k] = true;
        sum[k] = stretch == 0.0 ? -std::numeric_limits<double>::infinity()
                                : std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      for (std::size_t i = 0; i < D; ++i) u[k][i] = next[i] / stretch;
      if (t > skip) sum[k] += std::log(stretch);
    }
  }
  std::vector<double> out(nv);
  for (std::size_t k = 0; k < nv; ++k) out[k] = sum[k] / static_cast<double>(T - skip);
  return out;
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

template <class JacobianAt>
double estimate_lle(std::size_t T, std::size_t D, JacobianAt&& jacobian_at, const LleOptions& opts = {}) {
  const auto est = lle_estimates(T, D, jacobian_at, opts);
  const double lambda = mean(est);
  if (std::isinf(lambda) && lambda < 0)
    std::clog << "parseq: warning: Jacobian product annihilated a vector; LLE is -inf\n";
  return lambda;
}

/// LLE of an explicit Jacobian sequence J_1..J_T.
inline double estimate_lle(std::span<const Mat> jacobians, const LleOptions& opts = {}) {
  if (jacobians.empty()) throw std::invalid_argument("estimate_lle: need T >= 10 Jacobians");
  const std::size_t D = jacobians.front().rows();
  return estimate_lle(
      jacobians.size(), D,
      [&](std::size_t t, std::span<double> out) {
        const auto& j = jacobians[t - 1];
        std::copy(j.data().begin(), j.data().end(), out.begin());
      },
      opts);
}

/// Jacobian callback J_t = df_t/ds evaluated at s_{t-1} of a trajectory.
inline auto trajectory_jacobians(const DynamicsModel& model, const Trajectory& traj) {
  return [&model, &traj](std::size_t t, std::span<double> out) {
    model.jacobian_into(t, traj.state(t - 1), out);
  };
}

/// LLE along a trajectory (Jacobians J_t(s_{t-1}), t = 1..T).
inline double trajectory_lle(const DynamicsModel& model, const Trajectory& traj,
                             const LleOptions& opts = {}) {
  check_dims(model, traj);
  return estimate_lle(traj.length(), traj.dim(), trajectory_jacobians(model, traj), opts);
}

inline std::vector<double> trajectory_lle_estimates(const DynamicsModel& model, const Trajectory& traj,
                                                    const LleOptions& opts = {}) {
  check_dims(model, traj);
  return lle_estimates(traj.length(), traj.dim(), trajectory_jacobians(model, traj), opts);
}

// --- conditioning bounds ---------------------------------------------------

struct PlBounds {
  double lower = 0.0;  ///< lower bound on sqrt(mu)
  double upper = 0.0;  ///< upper bound on sqrt(mu)
};

/// sum_{k=0}^{T-1} e^{lambda k} in log form: log((e^{lambda T} - 1)/(e^lambda - 1)).
inline double log_geometric_sum(double lambda, std::size_t T) {
  const double n = static_cast<double>(T);
  if (std::abs(lambda) < 1e-12) return std::log(n);
  if (lambda > 0.0) {
    // e^{lambda (T-1)} (1 - e^{-lambda T}) / (1 - e^{-lambda})
    return lambda * (n - 1.0) + std::log(-std::expm1(-lambda * n)) - std::log(-std::expm1(-lambda));
  }
  return std::log(std::expm1(lambda * n) / std::expm1(lambda));
}

/// Bounds on sqrt(mu) from the LLE and burn-in constants a >= 1, 0 < b <= 1:
///   (1/a) (e^lambda - 1)/(e^{lambda T} - 1) <= sqrt(mu) <= (1/b) e^{-lambda (T-1)},
/// with the lambda -> 0 limits 1/(a T) and 1/b. Evaluated in log space.
inline PlBounds pl_bounds(double lambda, std::size_t T, double a, double b) {
  if (T == 0) throw std::invalid_argument("pl_bounds: T must be >= 1");
  if (!(a >= 1.0) || !(b > 0.0) || !(b <= 1.0))
    throw std::invalid_argument("pl_bounds: need a >= 1 and 0 < b <= 1");
  const double n = static_cast<double>(T);
  PlBounds out;
  out.lower = std::exp(-std::log(a) - log_geometric_sum(lambda, T));
  out.upper = std::abs(lambda) < 1e-12 ? 1.0 / b : std::exp(-std::log(b) - lambda * (n - 1.0));
  return out;
}

/// ((e^lambda - 1)/(e^{lambda T} - 1))^2: the PL lower bound with a = 1, squared.
inline double tilde_mu(double lambda, std::size_t T) {
  const double l = pl_bounds(lambda, T, 1.0, 1.0).lower;
  return l * l;
}

/// Dense residual Jacobian: identity diagonal blocks and -J_t(s_{t-1}) on the
/// block subdiagonal for t = 2..T.
inline Mat build_full_jacobian(const DynamicsModel& model, const Trajectory& traj) {
  check_dims(model, traj);
  const std::size_t T = traj.length();
  const std::size_t D = traj.dim();
  if (T * D > kOracleMaxSide)
    throw std::invalid_argument("build_full_jacobian: T*D = " + std::to_string(T * D) +
                                " exceeds oracle limit " + std::to_string(kOracleMaxSide));
  Mat full = Mat::identity(T * D);
  Mat jac(D, D);
  for (std::size_t t = 2; t <= T; ++t) {
    model.jacobian_into(t, traj.state(t - 1), jac.data());
    const std::size_t r0 = (t - 1) * D, c0 = (t - 2) * D;
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) full(r0 + i, c0 + j) = -jac(i, j);
  }
  return full;
}

/// Blocks J_2..J_T that appear in the residual Jacobian.
inline std::vector<Mat> subdiagonal_blocks(const DynamicsModel& model, const Trajectory& traj) {
  std::vector<Mat> blocks;
  for (std::size_t t = 2; t <= traj.length(); ++t) blocks.push_back(model.jacobian(t, traj.state(t - 1)));
  return blocks;
}

struct BurnIn {
  double a = 1.0;
  double b = 1.0;
};

/// Tightest a >= 1, b <= 1 such that b e^{lambda k} <= ||J_{t+k-1} ... J_t||_2 <= a e^{lambda k}
/// over every consecutive run of the given blocks (k = 0 is the identity).
inline BurnIn measure_burn_in(std::span<const Mat> blocks, double lambda) {
  BurnIn out;
  const std::size_t n = blocks.size();
  for (std::size_t start = 0; start < n; ++start) {
    Mat prod = blocks[start];
    for (std::size_t k = 1; start + k <= n; ++k) {
      if (k > 1) prod = matmul(blocks[start + k - 1], prod);
      const double norm = singular_values(prod).front();
      const double ratio = std::exp(std::log(norm) - lambda * static_cast<double>(k));
      out.a = std::max(out.a, ratio);
      out.b = std::min(out.b, ratio);
    }
  }
  return out;
}

/// Finite-horizon exponent (1/k) log ||J_T ... J_2||_2 of the full product (0 if T < 2).
inline double product_exponent(std::span<const Mat> blocks) {
  if (blocks.empty()) return 0.0;
  Mat prod = blocks.front();
  for (std::size_t k = 1; k < blocks.size(); ++k) prod = matmul(blocks[k], prod);
  const double norm = singular_values(prod).front();
  if (norm == 0.0) return 0.0;
  return std::log(norm) / static_cast<double>(blocks.size());
}

struct NeumannCheck {
  double norm = 0.0;   ///< ||J^{-1}||_2 by explicit inversion
  double bound = 0.0;  ///< a sum_{k<T} e^{lambda k}, lambda = max_t log ||J_t||_2
  double lower = 0.0;  ///< ||J_T ... J_2||_2, the norm of the one block of N^{T-1}
};

/// Explicit-inverse check of the Neumann-series bounds on ||J^{-1}||_2.
inline NeumannCheck neumann_inverse_norm_check(const DynamicsModel& model, const Trajectory& traj) {
  const Mat full = build_full_jacobian(model, traj);
  const Mat inv = unit_lower_inverse(full);
  NeumannCheck out;
  out.norm = spectral_norm(inv);

  const auto blocks = subdiagonal_blocks(model, traj);
  const std::size_t T = traj.length();
  double max_log = -std::numeric_limits<double>::infinity();
  for (const auto& b : blocks) max_log = std::max(max_log, std::log(singular_values(b).front()));
  double a = 1.0;
  if (!blocks.empty() && std::isfinite(max_log)) a = measure_burn_in(blocks, max_log).a;
  // With lambda the largest one-step log stretch, submultiplicativity keeps a at 1.
  double sum = 1.0;
  for (std::size_t k = 1; k < T; ++k)
    sum += std::isfinite(max_log) ? std::exp(max_log * static_cast<double>(k)) : 0.0;
  out.bound = a * sum;

  if (blocks.empty()) {
    out.lower = 1.0;
  } else {
    Mat prod = blocks.front();
    for (std::size_t k = 1; k < blocks.size(); ++k) prod = matmul(blocks[k], prod);
    out.lower = singular_values(prod).front();
  }
  return out;
}

// --- Lipschitz estimate and basin --------------------------------------------

/// Sampled lower estimate of L = sup ||J_t(s) - J_t(s')||_2 / ||s - s'||_2.
///
/// For each sample a time t is drawn, s is drawn uniformly from the ball of
/// `radius` around the center's s_{t-1}, and s' = s + delta with
/// ||delta|| = radius * 10^{-u}, u ~ U[0, 4], in a random direction. Mixing
/// scales lets near-derivative pairs appear alongside wide ones.
inline double estimate_lipschitz(const DynamicsModel& model, const Trajectory& center,
                                 std::size_t n_samples, double radius, std::uint64_t seed) {
  check_dims(model, center);
  if (n_samples < 2) throw std::invalid_argument("estimate_lipschitz: n_samples must be >= 2");
  const std::size_t D = model.dim();
  const std::size_t T = center.length();
  Rng rng = make_rng(seed, streams::lipschitz);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> td(1, T);
  auto direction = [&] {
    Vec v(D);
    double n = 0.0;
    while (n == 0.0) {
      for (double& x : v) x = nd(rng);
      n = norm2(v);
    }
    for (double& x : v) x /= n;
    return v;
  };
  double best = 0.0;
  Mat ja(D, D), jb(D, D);
  for (std::size_t k = 0; k < n_samples; ++k) {
    const std::size_t t = td(rng);
    const auto c = center.state(t - 1);
    const Vec dir = direction();
    const double r = radius * std::pow(ud(rng), 1.0 / static_cast<double>(D));
    Vec s(D);
    for (std::size_t i = 0; i < D; ++i) s[i] = c[i] + r * dir[i];
    const Vec ddir = direction();
    const double step = radius * std::pow(10.0, -4.0 * ud(rng));
    Vec s2(D);
    for (std::size_t i = 0; i < D; ++i) s2[i] = s[i] + step * ddir[i];
    model.jacobian_into(t, s, ja.data());
    model.jacobian_into(t, s2, jb.data());
    Vec diff(D);
    for (std::size_t i = 0; i < D; ++i) diff[i] = s[i] - s2[i];
    const double dn = norm2(diff);
    if (dn == 0.0) continue;
    const double num = singular_values(ja - jb).front();
    best = std::max(best, num / dn);
  }
  return best;
}

/// mu / L; +inf when L = 0.
inline double basin_radius(double mu, double L) {
  if (!(mu > 0.0)) throw std::invalid_argument("basin_radius: mu must be positive");
  if (L < 0.0) throw std::invalid_argument("basin_radius: L must be non-negative");
  if (L == 0.0) return std::numeric_limits<double>::infinity();
  return mu / L;
}

/// Steps to reach the basin of quadratic convergence under a linear rate
/// ||r_k|| <= chi beta^k ||r_0||: k = log(chi L ||r_0|| / mu) / log(1/beta),
/// clamped at 0 when the start is already inside the basin.
inline double predict_steps(double beta, double chi, double L, double mu, double r0_norm) {
  if (!(beta > 0.0) || !(beta < 1.0)) throw std::invalid_argument("predict_steps: need 0 < beta < 1");
  if (!(chi >= 1.0) || !(mu > 0.0) || r0_norm < 0.0 || L < 0.0)
    throw std::invalid_argument("predict_steps: need chi >= 1, mu > 0, L >= 0, r0 >= 0");
  const double arg = chi * L * r0_norm / mu;
  if (!(arg > 1.0)) return 0.0;
  return std::log(arg) / -std::log(beta);
}

struct LinearRate {
  double beta = 0.5;
  double chi = 1.0;
};

/// Fits ||r_i|| ~ chi beta^i ||r_0|| to the first phase of a merit history
/// (merit = ||r||^2 / 2). The last two entries are treated as the quadratic
/// phase and excluded when at least three entries remain.
inline LinearRate fit_linear_rate(std::span<const double> merit_history) {
  std::vector<double> logr;
  for (double m : merit_history) {
    if (!(m > 0.0) || !std::isfinite(m)) break;
    logr.push_back(0.5 * std::log(2.0 * m));
  }
  LinearRate out;
  if (logr.size() < 2) return out;
  std::size_t n = logr.size() >= 5 ? logr.size() - 2 : logr.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += logr[i];
    sxx += x * x;
    sxy += x * logr[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  out.beta = std::clamp(std::exp(slope), 1e-12, 1.0 - 1e-12);
  double chi = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    chi = std::max(chi, std::exp(logr[i] - logr[0] - static_cast<double>(i) * std::log(out.beta)));
  out.chi = chi;
  return out;
}

// --- report ---------------------------------------------------------------

/// Conditioning summary for one trajectory.
struct ConditioningReport {
  double lle = 0.0;
  double a = 1.0;
  double b = 1.0;
  double sqrt_mu_lower = 0.0;
  double sqrt_mu_upper = 0.0;
  double tilde_mu = 0.0;
  double lipschitz = 0.0;
  double basin_radius = 0.0;
  double predicted_steps = 0.0;
};

struct ConditioningOptions {
  LleOptions lle{};
  /// Measure a and b from exact Jacobian products (oracle scale only);
  /// otherwise a = b = 1 is assumed.
  bool measure_burn_in = false;
  std::size_t lipschitz_samples = 2000;
  double lipschitz_radius = 1.0;
  std::uint64_t seed = 0;
  LinearRate rate{};
  double r0_norm = 1.0;
};

inline ConditioningReport assess_conditioning(const DynamicsModel& model, const Trajectory& traj,
                                              const ConditioningOptions& opts = {}) {
  ConditioningReport rep;
  const std::size_t T = traj.length();
  if (opts.measure_burn_in) {
    const auto blocks = subdiagonal_blocks(model, traj);
    rep.lle = T >= 10 ? trajectory_lle(model, traj, opts.lle) : product_exponent(blocks);
    const BurnIn ab = measure_burn_in(blocks, rep.lle);
    rep.a = ab.a;
    rep.b = ab.b;
  } else {
    rep.lle = trajectory_lle(model, traj, opts.lle);
  }
  const PlBounds pb = pl_bounds(rep.lle, T, rep.a, std::max(rep.b, std::numeric_limits<double>::min()));
  rep.sqrt_mu_lower = pb.lower;
  rep.sqrt_mu_upper = pb.upper;
  rep.tilde_mu = tilde_mu(rep.lle, T);
  rep.lipschitz = estimate_lipschitz(model, traj, opts.lipschitz_samples, opts.lipschitz_radius, opts.seed);
  const double mu = pb.lower * pb.lower;
  rep.basin_radius = mu > 0.0 ? basin_radius(mu, rep.lipschitz) : 0.0;
  rep.predicted_steps =
      mu > 0.0 ? predict_steps(opts.rate.beta, opts.rate.chi, rep.lipschitz, mu, opts.r0_norm)
               : std::numeric_limits<double>::infinity();
  return rep;
}

// --- small statistics helpers -------------------------------------------------

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need >= 2 pairs");
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace parseq

#endif  // PARSEQ_ANALYSIS_HPP_
