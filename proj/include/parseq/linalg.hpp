#ifndef PARSEQ_LINALG_HPP_
#define PARSEQ_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace parseq {

using Vec = std::vector<double>;

/// Dense row-major FP64 matrix. Sized for D x D Jacobian blocks and for the
/// dense TD x TD oracles (side <= 512).
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw std::invalid_argument("Mat: data length does not match shape");
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat diagonal(std::span<const double> d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A T x D array of state-sized rows stored contiguously.
class StateArray {
 public:
  StateArray() = default;
  StateArray(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const StateArray&, const StateArray&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Power iteration failed to reach the requested tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_estimate)
      : std::runtime_error(what), best_estimate_(best_estimate) {}
  double best_estimate() const { return best_estimate_; }

 private:
  double best_estimate_;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// out = a * b for raw row-major blocks (n x k) * (k x m). out must not alias.
inline void gemm_raw(const double* a, const double* b, double* out, std::size_t n, std::size_t k,
                     std::size_t m) {
  std::fill(out, out + n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
}

/// out = a * x for a raw row-major n x k block.
inline void gemv_raw(const double* a, const double* x, double* out, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += arow[p] * x[p];
    out[i] = s;
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: dimension mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  Mat out(a.rows(), b.cols());
  gemm_raw(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(), b.cols());
  return out;
}

inline Vec matvec(const Mat& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
  Vec out(a.rows());
  gemv_raw(a.data().data(), x.data(), out.data(), a.rows(), a.cols());
  return out;
}

inline Vec matvec_transposed(const Mat& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw std::invalid_argument("matvec_transposed: dimension mismatch");
  Vec out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    const auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j] * xi;
  }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Mat operator+(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("Mat +: dimension mismatch");
  Mat out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline Mat operator-(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("Mat -: dimension mismatch");
  Mat out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

inline Mat operator*(double s, Mat a) {
  for (double& x : a.data()) x *= s;
  return a;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Largest singular value via power iteration on A^T A.
///
/// Starts from the normalized all-ones vector. If that start is annihilated
/// (lies in the null space of A) one seeded random restart is made. The
/// estimate is accepted once its relative change drops below `tol`.
inline double spectral_norm(const Mat& a, double tol = 1e-10, int max_iter = 10000) {
  if (!all_finite(a.data())) throw std::invalid_argument("spectral_norm: non-finite input");
  const std::size_t n = a.cols();
  if (n == 0 || a.rows() == 0) return 0.0;

  Vec v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Vec av(a.rows());
  bool restarted = false;
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    gemv_raw(a.data().data(), v.data(), av.data(), a.rows(), n);
    const double next = norm2(av);
    Vec z = matvec_transposed(a, av);
    const double zn = norm2(z);
    if (zn == 0.0) {
      if (restarted) return 0.0;
      // Start vector is in the null space: one deterministic random restart.
      restarted = true;
      std::mt19937_64 rng(0x5eedULL);
      std::normal_distribution<double> nd;
      for (double& x : v) x = nd(rng);
      const double vn = norm2(v);
      for (double& x : v) x /= vn;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = z[i] / zn;
    if (it > 0 && std::abs(next - sigma) <= tol * next) return next;
    sigma = next;
  }
  throw ConvergenceError("spectral_norm: power iteration did not converge", sigma);
}

/// Singular values (descending) by one-sided Jacobi rotations.
inline Vec singular_values(const Mat& a) {
  // Work on the columns of A (or of A^T when A is wide) stored as contiguous rows.
  const bool wide = a.rows() < a.cols();
  const Mat cols = wide ? a : transpose(a);  // each row of `cols` is a column of the tall matrix
  const std::size_t n = cols.rows();
  const std::size_t m = cols.cols();
  std::vector<double> u(cols.data().begin(), cols.data().end());
  constexpr double eps = 1e-15;
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      double* up = u.data() + p * m;
      for (std::size_t q = p + 1; q < n; ++q) {
        double* uq = u.data() + q * m;
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += up[i] * up[i];
          beta += uq[i] * uq[i];
          gamma += up[i] * uq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = up[i];
          const double y = uq[i];
          up[i] = c * x - s * y;
          uq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }
  Vec sv(n);
  for (std::size_t k = 0; k < n; ++k) sv[k] = norm2({u.data() + k * m, m});
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

struct SvdExtremes {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
};

inline constexpr std::size_t kOracleMaxSide = 512;

/// Extreme singular values of a square matrix at oracle scale.
inline SvdExtremes svd_extremes(const Mat& a) {
  if (!a.square()) throw std::invalid_argument("svd_extremes: matrix must be square");
  if (a.rows() > kOracleMaxSide)
    throw std::invalid_argument("svd_extremes: side " + std::to_string(a.rows()) +
                                " exceeds oracle limit " + std::to_string(kOracleMaxSide));
  if (a.rows() == 0) return {};
  const Vec sv = singular_values(a);
  return {sv.front(), sv.back()};
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
inline Mat inverse(const Mat& a) {
  if (!a.square()) throw std::invalid_argument("inverse: matrix must be square");
  const std::size_t n = a.rows();
  Mat work = a;
  Mat inv = Mat::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(work(r, col)) > std::abs(work(piv, col))) piv = r;
    if (work(piv, col) == 0.0) throw std::domain_error("inverse: singular matrix");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(work(piv, j), work(col, j));
        std::swap(inv(piv, j), inv(col, j));
      }
    }
    const double d = work(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      work(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = work(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        work(r, j) -= f * work(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

/// Inverse of a unit lower-triangular matrix by forward substitution.
inline Mat unit_lower_inverse(const Mat& l) {
  if (!l.square()) throw std::invalid_argument("unit_lower_inverse: matrix must be square");
  const std::size_t n = l.rows();
  Mat inv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    inv(c, c) = 1.0;
    for (std::size_t r = c + 1; r < n; ++r) {
      double s = 0.0;
      for (std::size_t k = c; k < r; ++k) s += l(r, k) * inv(k, c);
      inv(r, c) = -s;
    }
  }
  return inv;
}

}  // namespace parseq

#endif  // PARSEQ_LINALG_HPP_
