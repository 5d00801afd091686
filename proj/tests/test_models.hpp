#ifndef PARSEQ_TEST_MODELS_HPP_
#define PARSEQ_TEST_MODELS_HPP_

#include <cmath>
#include <utility>

#include "parseq/core.hpp"

namespace parseq::testing {

// f(s) = a s + c, any dimension, same scalar on every coordinate.
class ScalarAffine final : public DynamicsModel {
 public:
  ScalarAffine(double a, double c, std::size_t T, std::size_t D = 1) : a_(a), c_(c), T_(T), D_(D) {}
  std::size_t dim() const override { return D_; }
  std::size_t horizon() const override { return T_; }
  void step_into(std::size_t, std::span<const double> s, std::span<double> out) const override {
    for (std::size_t i = 0; i < D_; ++i) out[i] = a_ * s[i] + c_;
  }
  void jacobian_into(std::size_t, std::span<const double>, std::span<double> jac) const override {
    std::fill(jac.begin(), jac.end(), 0.0);
    for (std::size_t i = 0; i < D_; ++i) jac[i * D_ + i] = a_;
  }

 private:
  double a_, c_;
  std::size_t T_, D_;
};

// Independent coordinates: f_i(s) = tanh(w_i s_i) + u_i.
class DiagonalTanh final : public DynamicsModel {
 public:
  DiagonalTanh(Vec w, Vec u, std::size_t T) : w_(std::move(w)), u_(std::move(u)), T_(T) {}
  std::size_t dim() const override { return w_.size(); }
  std::size_t horizon() const override { return T_; }
  void step_into(std::size_t, std::span<const double> s, std::span<double> out) const override {
    for (std::size_t i = 0; i < w_.size(); ++i) out[i] = std::tanh(w_[i] * s[i]) + u_[i];
  }
  void jacobian_into(std::size_t, std::span<const double> s, std::span<double> jac) const override {
    const std::size_t D = w_.size();
    std::fill(jac.begin(), jac.end(), 0.0);
    for (std::size_t i = 0; i < D; ++i) {
      const double th = std::tanh(w_[i] * s[i]);
      jac[i * D + i] = w_[i] * (1.0 - th * th);
    }
  }

 private:
  Vec w_, u_;
  std::size_t T_;
};

}  // namespace parseq::testing

#endif  // PARSEQ_TEST_MODELS_HPP_
