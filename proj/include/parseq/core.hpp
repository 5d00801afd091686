#ifndef PARSEQ_CORE_HPP_
#define PARSEQ_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "parseq/linalg.hpp"

namespace parseq {

/// A nonlinear state space model s_t = f_t(s_{t-1}), t = 1..T.
///
/// Implementations carry any input sequence internally, so f_t may vary with
/// t. Both evaluations must be pure and safe to call from several threads.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t horizon() const = 0;

  /// out = f_t(s)
  virtual void step_into(std::size_t t, std::span<const double> s, std::span<double> out) const = 0;
  /// jac = df_t/ds at s, row-major D x D.
  virtual void jacobian_into(std::size_t t, std::span<const double> s, std::span<double> jac) const = 0;

  /// Both at once; override when the two share work (e.g. RK4 stages).
  virtual void linearize_into(std::size_t t, std::span<const double> s, std::span<double> out,
                              std::span<double> jac) const {
    step_into(t, s, out);
    jacobian_into(t, s, jac);
  }

  Vec step(std::size_t t, std::span<const double> s) const {
    check_state(s);
    Vec out(dim());
    step_into(t, s, out);
    return out;
  }

  Mat jacobian(std::size_t t, std::span<const double> s) const {
    check_state(s);
    Mat j(dim(), dim());
    jacobian_into(t, s, j.data());
    return j;
  }

 private:
  void check_state(std::span<const double> s) const {
    if (s.size() != dim()) throw std::invalid_argument("DynamicsModel: state dimension mismatch");
  }
};

/// Initial condition s0 plus the T states s_1..s_T (row t-1 holds s_t).
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(Vec s0, StateArray states) : s0_(std::move(s0)), states_(std::move(states)) {
    if (states_.rows() > 0 && states_.cols() != s0_.size())
      throw std::invalid_argument("Trajectory: state width does not match s0");
  }
  Trajectory(Vec s0, std::size_t length) : s0_(std::move(s0)), states_(length, s0_.size()) {}

  std::size_t length() const { return states_.rows(); }
  std::size_t dim() const { return s0_.size(); }

  std::span<const double> s0() const { return s0_; }
  /// s_t for t in 0..T, where s_0 is the fixed initial condition.
  std::span<const double> state(std::size_t t) const {
    return t == 0 ? std::span<const double>(s0_) : states_.row(t - 1);
  }
  /// Mutable s_t for t in 1..T.
  std::span<double> state_mut(std::size_t t) { return states_.row(t - 1); }

  const StateArray& states() const { return states_; }
  StateArray& states() { return states_; }

  /// First time index (1-based) whose state has a non-finite entry.
  std::optional<std::size_t> first_nonfinite() const {
    for (std::size_t t = 1; t <= length(); ++t)
      if (!all_finite(state(t))) return t;
    return std::nullopt;
  }
  bool finite() const { return !first_nonfinite().has_value(); }

  /// Set when a rollout overflowed: states from this index onward are NaN.
  std::optional<std::size_t> overflow_from() const { return overflow_from_; }
  void flag_overflow(std::size_t t) { overflow_from_ = t; }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.s0_ == b.s0_ && a.states_ == b.states_;
  }

 private:
  Vec s0_;
  StateArray states_;
  std::optional<std::size_t> overflow_from_;
};

/// Temporal differences r_t = s_t - f_t(s_{t-1}); row t-1 holds r_t.
struct Residual {
  StateArray values;
};

/// Ground-truth evaluation: s_t = f_t(s_{t-1}) for t = 1..T.
inline Trajectory sequential_rollout(const DynamicsModel& model, std::span<const double> s0,
                                     std::size_t T) {
  if (T == 0) throw std::invalid_argument("sequential_rollout: T must be >= 1");
  if (s0.size() != model.dim()) throw std::invalid_argument("sequential_rollout: s0 dimension mismatch");
  if (!all_finite(s0)) throw std::invalid_argument("sequential_rollout: s0 must be finite");
  Trajectory traj(Vec(s0.begin(), s0.end()), T);
  for (std::size_t t = 1; t <= T; ++t) {
    model.step_into(t, traj.state(t - 1), traj.state_mut(t));
    if (!all_finite(traj.state(t))) {
      traj.flag_overflow(t);
      for (std::size_t k = t; k <= T; ++k)
        for (double& x : traj.state_mut(k)) x = std::numeric_limits<double>::quiet_NaN();
      break;
    }
  }
  return traj;
}

inline void check_dims(const DynamicsModel& model, const Trajectory& traj) {
  if (traj.dim() != model.dim())
    throw std::invalid_argument("trajectory dimension " + std::to_string(traj.dim()) +
                                " does not match model dimension " + std::to_string(model.dim()));
}

inline Residual residual(const DynamicsModel& model, const Trajectory& traj) {
  check_dims(model, traj);
  const std::size_t D = traj.dim();
  Residual r{StateArray(traj.length(), D)};
  Vec f(D);
  for (std::size_t t = 1; t <= traj.length(); ++t) {
    model.step_into(t, traj.state(t - 1), f);
    const auto s = traj.state(t);
    auto out = r.values.row(t - 1);
    for (std::size_t i = 0; i < D; ++i) out[i] = s[i] - f[i];
  }
  return r;
}

/// 0.5 * ||r||^2. Non-finite residuals give a non-finite merit.
inline double merit(std::span<const double> residual_values) {
  double s = 0.0;
  for (double x : residual_values) s += x * x;
  return 0.5 * s;
}

inline double merit(const Residual& res) { return merit(res.values.data()); }

/// J(s)^T r(s) assembled block-wise:
/// grad_t = r_t - J_{t+1}^T r_{t+1}, grad_T = r_T, with J_{t+1} = df_{t+1}/ds at s_t.
inline StateArray merit_gradient(const DynamicsModel& model, const Trajectory& traj) {
  check_dims(model, traj);
  const std::size_t T = traj.length();
  const std::size_t D = traj.dim();
  const Residual r = residual(model, traj);
  StateArray grad(T, D);
  Mat jac(D, D);
  for (std::size_t t = 1; t <= T; ++t) {
    auto g = grad.row(t - 1);
    const auto rt = r.values.row(t - 1);
    std::copy(rt.begin(), rt.end(), g.begin());
    if (t == T) continue;
    model.jacobian_into(t + 1, traj.state(t), jac.data());
    const auto rn = r.values.row(t);
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) g[j] -= jac(i, j) * rn[i];
  }
  return grad;
}

/// Largest entrywise gap between the analytic Jacobian and central finite
/// differences (h = 1e-6 (1 + |s_j|)), relative to max(1, max |J_ij|).
inline double jacobian_fd_error(const DynamicsModel& model, std::size_t t, std::span<const double> s) {
  const std::size_t D = model.dim();
  const Mat analytic = model.jacobian(t, s);
  Vec plus(s.begin(), s.end());
  Vec minus(s.begin(), s.end());
  Vec fp(D), fm(D);
  double err = 0.0;
  for (std::size_t j = 0; j < D; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(s[j]));
    plus[j] = s[j] + h;
    minus[j] = s[j] - h;
    model.step_into(t, plus, fp);
    model.step_into(t, minus, fm);
    plus[j] = minus[j] = s[j];
    for (std::size_t i = 0; i < D; ++i)
      err = std::max(err, std::abs((fp[i] - fm[i]) / (2.0 * h) - analytic(i, j)));
  }
  return err / std::max(1.0, max_abs(analytic.data()));
}

// --- CSV serialization -------------------------------------------------------

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Header `t,x0,...,x{D-1}`; row 0 is s0 at t = 0. 17 significant digits.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  for (std::size_t i = 0; i < traj.dim(); ++i) os << ",x" << i;
  os << '\n';
  for (std::size_t t = 0; t <= traj.length(); ++t) {
    os << t;
    for (double x : traj.state(t)) os << ',' << format_double(x);
    os << '\n';
  }
}

inline Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("t", 0) != 0)
    throw std::runtime_error("trajectory CSV: missing header");
  std::size_t D = 0;
  for (char c : line) D += (c == ',');
  if (D == 0) throw std::runtime_error("trajectory CSV: header has no state columns");
  std::vector<Vec> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (std::stoul(cell) != rows.size()) throw std::runtime_error("trajectory CSV: rows out of order");
    Vec row;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    if (row.size() != D) throw std::runtime_error("trajectory CSV: ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("trajectory CSV: no s0 row");
  StateArray states(rows.size() - 1, D);
  for (std::size_t t = 1; t < rows.size(); ++t)
    std::copy(rows[t].begin(), rows[t].end(), states.row(t - 1).begin());
  return Trajectory(std::move(rows[0]), std::move(states));
}

}  // namespace parseq

#endif  // PARSEQ_CORE_HPP_
