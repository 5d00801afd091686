#ifndef PARSEQ_SYSTEMS_HPP_
#define PARSEQ_SYSTEMS_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "parseq/core.hpp"
#include "parseq/linalg.hpp"
#include "parseq/random.hpp"

namespace parseq {

// --- linear time-varying ---------------------------------------------------

/// f_t(s) = A_t s + c_t.
class LinearTimeVarying final : public DynamicsModel {
 public:
  LinearTimeVarying(std::vector<Mat> a, StateArray c) : a_(std::move(a)), c_(std::move(c)) {
    if (a_.empty() || a_.size() != c_.rows())
      throw std::invalid_argument("LinearTimeVarying: need one (A_t, c_t) per step");
    for (const auto& m : a_)
      if (m.rows() != c_.cols() || m.cols() != c_.cols())
        throw std::invalid_argument("LinearTimeVarying: A_t must be D x D");
  }

  std::size_t dim() const override { return c_.cols(); }
  std::size_t horizon() const override { return a_.size(); }

  void step_into(std::size_t t, std::span<const double> s, std::span<double> out) const override {
    gemv_raw(a_[t - 1].data().data(), s.data(), out.data(), dim(), dim());
    const auto c = c_.row(t - 1);
    for (std::size_t i = 0; i < dim(); ++i) out[i] += c[i];
  }
  void jacobian_into(std::size_t t, std::span<const double>, std::span<double> jac) const override {
    std::copy(a_[t - 1].data().begin(), a_[t - 1].data().end(), jac.begin());
  }

 private:
  std::vector<Mat> a_;
  StateArray c_;
};

/// Gaussian A_t with entries N(0, scale^2 / D) and offsets N(0, 1).
inline LinearTimeVarying random_linear_system(std::size_t D, std::size_t T, std::uint64_t seed,
                                              double scale) {
  Rng rng = make_rng(seed, streams::weights);
  std::normal_distribution<double> nd;
  const double sd = scale / std::sqrt(static_cast<double>(D));
  std::vector<Mat> a;
  a.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    Mat m(D, D);
    for (double& x : m.data()) x = sd * nd(rng);
    a.push_back(std::move(m));
  }
  StateArray c(T, D);
  for (double& x : c.data()) x = nd(rng);
  return LinearTimeVarying(std::move(a), std::move(c));
}

// --- mean-field RNN ---------------------------------------------------------

/// s_t = W tanh(s_{t-1}) + u_t with W_ij ~ N(0, g^2/D), W_ii = 0 and
/// u_t = amplitude * sin(2 pi t / T) on every coordinate.
class MeanFieldRnn final : public DynamicsModel {
 public:
  MeanFieldRnn(Mat w, double g, std::size_t T, double amplitude = 0.1)
      : w_(std::move(w)), g_(g), horizon_(T), amplitude_(amplitude) {
    if (!w_.square() || w_.rows() == 0) throw std::invalid_argument("MeanFieldRnn: W must be square");
  }

  std::size_t dim() const override { return w_.rows(); }
  std::size_t horizon() const override { return horizon_; }
  double gain() const { return g_; }
  const Mat& weights() const { return w_; }

  double input(std::size_t t) const {
    return amplitude_ * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                 static_cast<double>(horizon_));
  }

  void step_into(std::size_t t, std::span<const double> s, std::span<double> out) const override {
    const std::size_t D = dim();
    Vec th(D);
    for (std::size_t i = 0; i < D; ++i) th[i] = std::tanh(s[i]);
    gemv_raw(w_.data().data(), th.data(), out.data(), D, D);
    const double u = input(t);
    for (std::size_t i = 0; i < D; ++i) out[i] += u;
  }

  void jacobian_into(std::size_t, std::span<const double> s, std::span<double> jac) const override {
    const std::size_t D = dim();
    for (std::size_t j = 0; j < D; ++j) {
      const double th = std::tanh(s[j]);
      const double d = 1.0 - th * th;
      for (std::size_t i = 0; i < D; ++i) jac[i * D + j] = w_(i, j) * d;
    }
  }

  void linearize_into(std::size_t t, std::span<const double> s, std::span<double> out,
                      std::span<double> jac) const override {
    const std::size_t D = dim();
    Vec th(D);
    for (std::size_t i = 0; i < D; ++i) th[i] = std::tanh(s[i]);
    gemv_raw(w_.data().data(), th.data(), out.data(), D, D);
    const double u = input(t);
    for (std::size_t i = 0; i < D; ++i) {
      out[i] += u;
      const auto wr = w_.row(i);
      for (std::size_t j = 0; j < D; ++j) jac[i * D + j] = wr[j] * (1.0 - th[j] * th[j]);
    }
  }

 private:
  Mat w_;
  double g_;
  std::size_t horizon_;
  double amplitude_;
};

inline MeanFieldRnn mean_field_rnn(std::size_t D, double g, std::size_t T, std::uint64_t seed,
                                   double amplitude = 0.1) {
  if (D == 0 || T == 0) throw std::invalid_argument("mean_field_rnn: D and T must be >= 1");
  if (!(g > 0.0)) throw std::invalid_argument("mean_field_rnn: g must be positive");
  Rng rng = make_rng(seed, streams::weights);
  std::normal_distribution<double> nd(0.0, g / std::sqrt(static_cast<double>(D)));
  Mat w(D, D);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < D; ++j) {
      const double x = nd(rng);
      w(i, j) = i == j ? 0.0 : x;
    }
  return MeanFieldRnn(std::move(w), g, T, amplitude);
}

/// Standard-normal initial state drawn from its own stream of `seed`.
inline Vec random_initial_state(std::size_t D, std::uint64_t seed) {
  Rng rng = make_rng(seed, streams::initial_state);
  std::normal_distribution<double> nd;
  Vec s0(D);
  for (double& x : s0) x = nd(rng);
  return s0;
}

// --- Langevin dynamics in a two-well potential ------------------------------

/// phi = -log of an equal-weight mixture of two diagonal Gaussians.
struct TwoWellParams {
  double eps = 0.1;
  Vec center_a{0.0, -1.4};
  Vec center_b{0.0, 1.6};
  Vec var_a{0.3, 0.2};
  Vec var_b{0.3, 0.2};
};

/// s_t = s_{t-1} - eps grad phi(s_{t-1}) + sqrt(2 eps) w_t with the noise
/// w_t ~ N(0, I) drawn once at construction.
class TwoWellLangevin final : public DynamicsModel {
 public:
  TwoWellLangevin(TwoWellParams p, std::size_t T, std::uint64_t seed)
      : p_(std::move(p)), noise_(T, p_.center_a.size()) {
    const std::size_t D = p_.center_a.size();
    if (D == 0 || p_.center_b.size() != D || p_.var_a.size() != D || p_.var_b.size() != D)
      throw std::invalid_argument("TwoWellLangevin: inconsistent parameter dimensions");
    if (!(p_.eps > 0.0)) throw std::invalid_argument("TwoWellLangevin: eps must be positive");
    Rng rng = make_rng(seed, streams::noise);
    std::normal_distribution<double> nd;
    for (double& x : noise_.data()) x = nd(rng);
  }

  std::size_t dim() const override { return p_.center_a.size(); }
  std::size_t horizon() const override { return noise_.rows(); }
  const TwoWellParams& params() const { return p_; }

  double potential(std::span<const double> s) const {
    const auto [la, lb] = log_components(s);
    const double m = std::max(la, lb);
    return -(m + std::log(0.5 * std::exp(la - m) + 0.5 * std::exp(lb - m)));
  }

  Vec gradient(std::span<const double> s) const {
    Vec g(dim());
    derivatives(s, g, nullptr);
    return g;
  }

  Mat hessian(std::span<const double> s) const {
    Vec g(dim());
    Mat h(dim(), dim());
    derivatives(s, g, &h);
    return h;
  }

  void step_into(std::size_t t, std::span<const double> s, std::span<double> out) const override {
    const std::size_t D = dim();
    Vec g(D);
    derivatives(s, g, nullptr);
    const double amp = std::sqrt(2.0 * p_.eps);
    const auto w = noise_.row(t - 1);
    for (std::size_t i = 0; i < D; ++i) out[i] = s[i] - p_.eps * g[i] + amp * w[i];
  }

  void jacobian_into(std::size_t, std::span<const double> s, std::span<double> jac) const override {
    const std::size_t D = dim();
    Vec g(D);
    Mat h(D, D);
    derivatives(s, g, &h);
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) jac[i * D + j] = (i == j ? 1.0 : 0.0) - p_.eps * h(i, j);
  }

  void linearize_into(std::size_t t, std::span<const double> s, std::span<double> out,
                      std::span<double> jac) const override {
    const std::size_t D = dim();
    Vec g(D);
    Mat h(D, D);
    derivatives(s, g, &h);
    const double amp = std::sqrt(2.0 * p_.eps);
    const auto w = noise_.row(t - 1);
    for (std::size_t i = 0; i < D; ++i) {
      out[i] = s[i] - p_.eps * g[i] + amp * w[i];
      for (std::size_t j = 0; j < D; ++j) jac[i * D + j] = (i == j ? 1.0 : 0.0) - p_.eps * h(i, j);
    }
  }

 private:
  // Log densities of the two weighted components (constant 1/2 weights included).
  std::pair<double, double> log_components(std::span<const double> s) const {
    return {log_component(s, p_.center_a, p_.var_a), log_component(s, p_.center_b, p_.var_b)};
  }

  static double log_component(std::span<const double> s, const Vec& mu, const Vec& var) {
    double q = 0.0, logdet = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double d = s[i] - mu[i];
      q += d * d / var[i];
      logdet += std::log(2.0 * std::numbers::pi * var[i]);
    }
    return -0.5 * (q + logdet);
  }

  // grad phi = sum_k gamma_k P_k (s - mu_k);
  // hess phi = sum_k gamma_k P_k - sum_k gamma_k g_k g_k^T + gbar gbar^T.
  void derivatives(std::span<const double> s, std::span<double> grad, Mat* hess) const {
    const std::size_t D = dim();
    const auto [la, lb] = log_components(s);
    const double m = std::max(la, lb);
    const double ea = std::exp(la - m), eb = std::exp(lb - m);
    const double gamma_a = ea / (ea + eb), gamma_b = eb / (ea + eb);
    Vec ga(D), gb(D);
    for (std::size_t i = 0; i < D; ++i) {
      ga[i] = (s[i] - p_.center_a[i]) / p_.var_a[i];
      gb[i] = (s[i] - p_.center_b[i]) / p_.var_b[i];
      grad[i] = gamma_a * ga[i] + gamma_b * gb[i];
    }
    if (!hess) return;
    Mat& h = *hess;
    for (std::size_t i = 0; i < D; ++i)
      for (std::size_t j = 0; j < D; ++j) {
        double v = grad[i] * grad[j] - gamma_a * ga[i] * ga[j] - gamma_b * gb[i] * gb[j];
        if (i == j) v += gamma_a / p_.var_a[i] + gamma_b / p_.var_b[i];
        h(i, j) = v;
      }
  }

  TwoWellParams p_;
  StateArray noise_;
};

inline TwoWellLangevin two_well(double eps, std::size_t T, std::uint64_t seed, std::size_t D = 2,
                                TwoWellParams base = {}) {
  base.eps = eps;
  auto pad = [D](Vec v, double fill) {
    v.resize(D, fill);
    return v;
  };
  base.center_a = pad(base.center_a, 0.0);
  base.center_b = pad(base.center_b, 0.0);
  base.var_a = pad(base.var_a, base.var_a.back());
  base.var_b = pad(base.var_b, base.var_b.back());
  return TwoWellLangevin(std::move(base), T, seed);
}

// --- chaotic flows, RK4-discretized -----------------------------------------

enum class Flow { lorenz, rossler };

inline std::string flow_name(Flow f) { return f == Flow::lorenz ? "lorenz" : "rossler"; }

inline Flow parse_flow(const std::string& name) {
  if (name == "lorenz") return Flow::lorenz;
  if (name == "rossler") return Flow::rossler;
  throw std::invalid_argument("unknown flow '" + name + "'");
}

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;

struct FlowField {
  Flow flow = Flow::lorenz;
  // Lorenz
  double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
  // Rossler
  double a = 0.2, b = 0.2, c = 5.7;

  Vec3 operator()(const Vec3& x) const {
    if (flow == Flow::lorenz)
      return {sigma * (x[1] - x[0]), x[0] * (rho - x[2]) - x[1], x[0] * x[1] - beta * x[2]};
    return {-x[1] - x[2], x[0] + a * x[1], b + x[2] * (x[0] - c)};
  }

  Mat3 jacobian(const Vec3& x) const {
    if (flow == Flow::lorenz)
      return {-sigma, sigma, 0.0, rho - x[2], -1.0, -x[0], x[1], x[0], -beta};
    return {0.0, -1.0, -1.0, 1.0, a, 0.0, x[2], 0.0, x[0] - c};
  }
};

namespace detail {

inline Mat3 mul3(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j) out[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return out;
}

/// One classical RK4 step of size h; optionally its Jacobian by the chain rule
/// through the four stages.
inline Vec3 rk4_step(const FlowField& f, const Vec3& x, double h, Mat3* jac) {
  auto axpy = [](const Vec3& x, double s, const Vec3& k) {
    return Vec3{x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]};
  };
  const Vec3 k1 = f(x);
  const Vec3 x2 = axpy(x, 0.5 * h, k1);
  const Vec3 k2 = f(x2);
  const Vec3 x3 = axpy(x, 0.5 * h, k2);
  const Vec3 k3 = f(x3);
  const Vec3 x4 = axpy(x, h, k3);
  const Vec3 k4 = f(x4);
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  if (jac) {
    auto shifted = [](const Mat3& dk, double s) {
      Mat3 m{};
      for (int i = 0; i < 9; ++i) m[i] = s * dk[i];
      m[0] += 1.0;
      m[4] += 1.0;
      m[8] += 1.0;
      return m;
    };
    const Mat3 d1 = f.jacobian(x);
    const Mat3 d2 = mul3(f.jacobian(x2), shifted(d1, 0.5 * h));
    const Mat3 d3 = mul3(f.jacobian(x3), shifted(d2, 0.5 * h));
    const Mat3 d4 = mul3(f.jacobian(x4), shifted(d3, h));
    Mat3& j = *jac;
    for (int i = 0; i < 9; ++i) j[i] = h / 6.0 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
    j[0] += 1.0;
    j[4] += 1.0;
    j[8] += 1.0;
  }
  return out;
}

inline Vec3 to_vec3(std::span<const double> s) { return {s[0], s[1], s[2]}; }

}  // namespace detail

/// RK4 discretization of an autonomous chaotic flow.
class FlowSystem final : public DynamicsModel {
 public:
  FlowSystem(FlowField field, double dt, std::size_t T) : field_(field), dt_(dt), horizon_(T) {
    if (!(dt > 0.0)) throw std::invalid_argument("FlowSystem: dt must be positive");
  }

  std::size_t dim() const override { return 3; }
  std::size_t horizon() const override { return horizon_; }
  double dt() const { return dt_; }
  const FlowField& field() const { return field_; }

  void step_into(std::size_t, std::span<const double> s, std::span<double> out) const override {
    const Vec3 y = detail::rk4_step(field_, detail::to_vec3(s), dt_, nullptr);
    std::copy(y.begin(), y.end(), out.begin());
  }
  void jacobian_into(std::size_t, std::span<const double> s, std::span<double> jac) const override {
    Mat3 j;
    detail::rk4_step(field_, detail::to_vec3(s), dt_, &j);
    std::copy(j.begin(), j.end(), jac.begin());
  }
  void linearize_into(std::size_t, std::span<const double> s, std::span<double> out,
                      std::span<double> jac) const override {
    Mat3 j;
    const Vec3 y = detail::rk4_step(field_, detail::to_vec3(s), dt_, &j);
    std::copy(y.begin(), y.end(), out.begin());
    std::copy(j.begin(), j.end(), jac.begin());
  }

 private:
  FlowField field_;
  double dt_;
  std::size_t horizon_;
};

enum class ObserverStyle { substitution, gain_feedback };

/// Observer of a FlowSystem driven by one measured coordinate y_t = s_t[m].
///
/// substitution: the observer's coordinate m is replaced by the measurement
/// before each RK4 step, f_t(s) = F(s with s[m] := y_{t-1}), so the true
/// trajectory is an exact fixed point and the Jacobian has a zero column m.
/// gain_feedback: f_t(s) = F(s) + dt * K (y_{t-1} - s[m]) for a gain vector K.
class FlowObserver final : public DynamicsModel {
 public:
  FlowObserver(FlowField field, double dt, Vec measurements, std::size_t measured_index,
               ObserverStyle style, Vec3 gain)
      : field_(field),
        dt_(dt),
        y_(std::move(measurements)),
        m_(measured_index),
        style_(style),
        gain_(gain) {
    if (y_.size() < 2) throw std::invalid_argument("FlowObserver: need y_0..y_T");
    if (m_ >= 3) throw std::invalid_argument("FlowObserver: measured index out of range");
  }

  std::size_t dim() const override { return 3; }
  std::size_t horizon() const override { return y_.size() - 1; }
  std::size_t measured_index() const { return m_; }

  void step_into(std::size_t t, std::span<const double> s, std::span<double> out) const override {
    eval(t, s, out, nullptr);
  }
  void jacobian_into(std::size_t t, std::span<const double> s, std::span<double> jac) const override {
    Vec3 tmp;
    eval(t, s, tmp, &jac);
  }
  void linearize_into(std::size_t t, std::span<const double> s, std::span<double> out,
                      std::span<double> jac) const override {
    eval(t, s, out, &jac);
  }

 private:
  void eval(std::size_t t, std::span<const double> s, std::span<double> out,
            std::span<double>* jac) const {
    Vec3 x = detail::to_vec3(s);
    const double y = y_[t - 1];
    Mat3 j;
    if (style_ == ObserverStyle::substitution) {
      x[m_] = y;
      const Vec3 next = detail::rk4_step(field_, x, dt_, jac ? &j : nullptr);
      std::copy(next.begin(), next.end(), out.begin());
      if (jac)
        for (int i = 0; i < 3; ++i) j[i * 3 + m_] = 0.0;
    } else {
      Vec3 next = detail::rk4_step(field_, x, dt_, jac ? &j : nullptr);
      const double innovation = y - x[m_];
      for (int i = 0; i < 3; ++i) {
        next[i] += gain_[i] * dt_ * innovation;
        j[i * 3 + m_] -= gain_[i] * dt_;
      }
      std::copy(next.begin(), next.end(), out.begin());
    }
    if (jac) std::copy(j.begin(), j.end(), jac->begin());
  }

  FlowField field_;
  double dt_;
  Vec y_;
  std::size_t m_;
  ObserverStyle style_;
  Vec3 gain_;
};

/// A chaotic system, its reference rollout, and an observer driven by it.
struct ObserverSetup {
  FlowSystem system;
  Vec system_s0;
  Trajectory truth;
  FlowObserver observer;
  Vec observer_s0;
};

/// Point on the attractor reached after a seeded start and a burn-in.
inline Vec flow_initial_state(const FlowField& field, double dt, std::uint64_t seed) {
  Rng rng = make_rng(seed, streams::initial_state);
  std::normal_distribution<double> nd;
  Vec3 x = field.flow == Flow::lorenz ? Vec3{1.0, 1.0, 1.0} : Vec3{1.0, 1.0, 0.0};
  for (double& v : x) v += 0.1 * nd(rng);
  const auto burn = static_cast<std::size_t>(100.0 / dt);
  for (std::size_t k = 0; k < burn; ++k) x = detail::rk4_step(field, x, dt, nullptr);
  return {x.begin(), x.end()};
}

/// Lorenz is observed through x (index 0). Rossler is observed through y
/// (index 1): x-driven Rossler has a positive conditional exponent.
inline std::size_t default_measured_index(Flow f) { return f == Flow::lorenz ? 0 : 1; }

/// Gain used when none is given: 5 on the measured coordinate.
inline Vec3 default_gain(Flow f) {
  Vec3 k{0.0, 0.0, 0.0};
  k[default_measured_index(f)] = 5.0;
  return k;
}

inline ObserverSetup make_observer_setup(Flow flow, double dt, std::size_t T, std::uint64_t seed,
                                         ObserverStyle style = ObserverStyle::substitution,
                                         std::optional<Vec3> gain = std::nullopt) {
  FlowField field;
  field.flow = flow;
  FlowSystem system(field, dt, T);
  Vec s0 = flow_initial_state(field, dt, seed);
  Trajectory truth = sequential_rollout(system, s0, T);
  const std::size_t m = default_measured_index(flow);
  Vec y(T + 1);
  for (std::size_t t = 0; t <= T; ++t) y[t] = truth.state(t)[m];
  FlowObserver observer(field, dt, std::move(y), m, style, gain.value_or(default_gain(flow)));
  Rng rng = make_rng(seed, streams::inputs);
  std::normal_distribution<double> nd;
  Vec obs_s0 = s0;
  for (double& v : obs_s0) v += nd(rng);
  return {system, std::move(s0), std::move(truth), std::move(observer), std::move(obs_s0)};
}

inline ObserverSetup lorenz_observer(double dt, std::size_t T, std::uint64_t seed,
                                     ObserverStyle style = ObserverStyle::substitution,
                                     std::optional<Vec3> gain = std::nullopt) {
  return make_observer_setup(Flow::lorenz, dt, T, seed, style, gain);
}

// --- contractive scalar RNN -------------------------------------------------

/// x_t = tanh(w x_{t-1} + u_t) with w = tanh(b): |J_t| <= |w| < 1 for finite b.
class ContractiveScalarRnn final : public DynamicsModel {
 public:
  ContractiveScalarRnn(double b_param, Vec inputs) : w_(std::tanh(b_param)), u_(std::move(inputs)) {
    if (u_.empty()) throw std::invalid_argument("ContractiveScalarRnn: empty input sequence");
  }

  std::size_t dim() const override { return 1; }
  std::size_t horizon() const override { return u_.size(); }
  double weight() const { return w_; }

  void step_into(std::size_t t, std::span<const double> s, std::span<double> out) const override {
    out[0] = std::tanh(w_ * s[0] + u_[t - 1]);
  }
  void jacobian_into(std::size_t t, std::span<const double> s, std::span<double> jac) const override {
    const double th = std::tanh(w_ * s[0] + u_[t - 1]);
    jac[0] = w_ * (1.0 - th * th);
  }

 private:
  double w_;
  Vec u_;
};

// --- maps with known exponents ---------------------------------------------

/// x_t = r x_{t-1} (1 - x_{t-1}); J = r (1 - 2x).
class LogisticMap final : public DynamicsModel {
 public:
  LogisticMap(double r, std::size_t T) : r_(r), horizon_(T) {}
  std::size_t dim() const override { return 1; }
  std::size_t horizon() const override { return horizon_; }
  void step_into(std::size_t, std::span<const double> s, std::span<double> out) const override {
    out[0] = r_ * s[0] * (1.0 - s[0]);
  }
  void jacobian_into(std::size_t, std::span<const double> s, std::span<double> jac) const override {
    jac[0] = r_ * (1.0 - 2.0 * s[0]);
  }

 private:
  double r_;
  std::size_t horizon_;
};

/// (x, y) -> (1 - a x^2 + y, b x).
class HenonMap final : public DynamicsModel {
 public:
  HenonMap(double a, double b, std::size_t T) : a_(a), b_(b), horizon_(T) {}
  std::size_t dim() const override { return 2; }
  std::size_t horizon() const override { return horizon_; }
  void step_into(std::size_t, std::span<const double> s, std::span<double> out) const override {
    const double x = s[0], y = s[1];
    out[0] = 1.0 - a_ * x * x + y;
    out[1] = b_ * x;
  }
  void jacobian_into(std::size_t, std::span<const double> s, std::span<double> jac) const override {
    jac[0] = -2.0 * a_ * s[0];
    jac[1] = 1.0;
    jac[2] = b_;
    jac[3] = 0.0;
  }

 private:
  double a_, b_;
  std::size_t horizon_;
};

}  // namespace parseq

#endif  // PARSEQ_SYSTEMS_HPP_
