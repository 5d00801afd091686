#ifndef PARSEQ_SCAN_HPP_
#define PARSEQ_SCAN_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "parseq/linalg.hpp"
#include "parseq/parallel.hpp"

namespace parseq {

/// One step x -> A x + b of a linear time-varying recursion.
struct AffinePair {
  Mat A;
  Vec b;

  static AffinePair identity(std::size_t dim) { return {Mat::identity(dim), Vec(dim, 0.0)}; }
  std::size_t dim() const { return b.size(); }
};

/// Composition of affine maps: `first` is applied, then `second`.
inline AffinePair combine(const AffinePair& first, const AffinePair& second) {
  if (first.dim() != second.dim()) throw std::invalid_argument("combine: dimension mismatch");
  AffinePair out{matmul(second.A, first.A), matvec(second.A, first.b)};
  for (std::size_t i = 0; i < out.b.size(); ++i) out.b[i] += second.b[i];
  return out;
}

/// Diagonal variant: x -> a .* x + b.
struct DiagonalPair {
  Vec a;
  Vec b;

  static DiagonalPair identity(std::size_t dim) { return {Vec(dim, 1.0), Vec(dim, 0.0)}; }
  std::size_t dim() const { return b.size(); }
};

inline DiagonalPair combine(const DiagonalPair& first, const DiagonalPair& second) {
  if (first.dim() != second.dim()) throw std::invalid_argument("combine: dimension mismatch");
  DiagonalPair out{Vec(first.dim()), Vec(first.dim())};
  for (std::size_t i = 0; i < out.a.size(); ++i) {
    out.a[i] = second.a[i] * first.a[i];
    out.b[i] = second.a[i] * first.b[i] + second.b[i];
  }
  return out;
}

/// T dense elements (A_t, b_t) in contiguous storage.
class DenseAffineSequence {
 public:
  using Pair = AffinePair;

  DenseAffineSequence() = default;
  DenseAffineSequence(std::size_t length, std::size_t dim)
      : length_(length), dim_(dim), a_(length * dim * dim, 0.0), b_(length * dim, 0.0) {}
  explicit DenseAffineSequence(std::span<const AffinePair> elements)
      : DenseAffineSequence(elements.size(), elements.empty() ? 0 : elements.front().dim()) {
    for (std::size_t t = 0; t < length_; ++t) {
      const auto& e = elements[t];
      if (e.dim() != dim_ || e.A.rows() != dim_ || e.A.cols() != dim_)
        throw std::invalid_argument("DenseAffineSequence: non-uniform element dimension");
      std::copy(e.A.data().begin(), e.A.data().end(), matrix(t).begin());
      std::copy(e.b.begin(), e.b.end(), offset(t).begin());
    }
  }

  std::size_t length() const { return length_; }
  std::size_t dim() const { return dim_; }

  std::span<double> matrix(std::size_t t) { return {a_.data() + t * dim_ * dim_, dim_ * dim_}; }
  std::span<const double> matrix(std::size_t t) const {
    return {a_.data() + t * dim_ * dim_, dim_ * dim_};
  }
  std::span<double> offset(std::size_t t) { return {b_.data() + t * dim_, dim_}; }
  std::span<const double> offset(std::size_t t) const { return {b_.data() + t * dim_, dim_}; }

  Pair identity() const { return Pair::identity(dim_); }

  /// out = A_t x + b_t
  void apply(std::size_t t, std::span<const double> x, std::span<double> out) const {
    gemv_raw(matrix(t).data(), x.data(), out.data(), dim_, dim_);
    const auto b = offset(t);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += b[i];
  }

  /// acc <- combine(acc, element t)
  void absorb(std::size_t t, Pair& acc, Mat& scratch) const {
    if (scratch.rows() != dim_) scratch = Mat(dim_, dim_);
    gemm_raw(matrix(t).data(), acc.A.data().data(), scratch.data().data(), dim_, dim_, dim_);
    std::swap(acc.A, scratch);
    Vec nb(dim_);
    apply(t, acc.b, nb);
    acc.b = std::move(nb);
  }

 private:
  std::size_t length_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> a_;
  std::vector<double> b_;
};

/// T diagonal elements (diag(a_t), b_t); each combine costs O(D).
class DiagonalAffineSequence {
 public:
  using Pair = DiagonalPair;

  DiagonalAffineSequence() = default;
  DiagonalAffineSequence(std::size_t length, std::size_t dim)
      : length_(length), dim_(dim), a_(length * dim, 0.0), b_(length * dim, 0.0) {}

  std::size_t length() const { return length_; }
  std::size_t dim() const { return dim_; }

  std::span<double> diagonal(std::size_t t) { return {a_.data() + t * dim_, dim_}; }
  std::span<const double> diagonal(std::size_t t) const { return {a_.data() + t * dim_, dim_}; }
  std::span<double> offset(std::size_t t) { return {b_.data() + t * dim_, dim_}; }
  std::span<const double> offset(std::size_t t) const { return {b_.data() + t * dim_, dim_}; }

  Pair identity() const { return Pair::identity(dim_); }

  void apply(std::size_t t, std::span<const double> x, std::span<double> out) const {
    const auto a = diagonal(t);
    const auto b = offset(t);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = a[i] * x[i] + b[i];
  }

  void absorb(std::size_t t, Pair& acc, Mat& /*scratch*/) const {
    const auto a = diagonal(t);
    const auto b = offset(t);
    for (std::size_t i = 0; i < dim_; ++i) {
      acc.a[i] *= a[i];
      acc.b[i] = a[i] * acc.b[i] + b[i];
    }
  }

 private:
  std::size_t length_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> a_;
  std::vector<double> b_;
};

/// Storage the scan can run over: element application plus folding into a pair.
template <class S>
concept AffineSequence = requires(const S& s, std::size_t t, typename S::Pair& acc, Mat& scratch,
                                  std::span<const double> x, std::span<double> out) {
  { s.length() } -> std::convertible_to<std::size_t>;
  { s.dim() } -> std::convertible_to<std::size_t>;
  { s.identity() } -> std::same_as<typename S::Pair>;
  s.apply(t, x, out);
  s.absorb(t, acc, scratch);
};

enum class ScanMode { sequential, parallel };

struct ScanOptions {
  ScanMode mode = ScanMode::parallel;
  /// Requested chunk count for parallel mode; 0 means default_workers().
  std::size_t chunks = 0;
  /// Threads used for the chunk phases; 0 means the effective chunk count.
  std::size_t workers = 0;
};

/// Work counters for one scan. `element_ops` counts every application of an
/// element to a state vector or an accumulator; `combines` counts the
/// pair-with-pair compositions in the summary sweep.
struct ScanStats {
  std::size_t element_ops = 0;
  std::size_t combines = 0;
  std::size_t chunks = 1;
  std::size_t total() const { return element_ops + combines; }
};

namespace detail {

/// Chunk count actually used: capped so that every chunk holds at least ~2C
/// elements, which keeps total work within twice the sequential recursion.
inline std::size_t effective_chunks(std::size_t length, std::size_t requested) {
  if (requested <= 1 || length < 8) return 1;
  const auto cap = static_cast<std::size_t>(std::sqrt(static_cast<double>(length)) / 2.0);
  return std::max<std::size_t>(1, std::min(requested, cap));
}

/// In-place Blelloch exclusive scan; on return items[k] is the composition of
/// the original items[0..k-1] (identity for k = 0).
template <class Pair>
void blelloch_exclusive(std::vector<Pair>& items, const Pair& identity, std::size_t& combines) {
  const std::size_t n = items.size();
  std::size_t size = 1;
  while (size < n) size <<= 1;
  items.resize(size, identity);
  for (std::size_t stride = 1; stride < size; stride <<= 1) {
    for (std::size_t i = 2 * stride - 1; i < size; i += 2 * stride) {
      items[i] = combine(items[i - stride], items[i]);
      ++combines;
    }
  }
  items[size - 1] = identity;
  for (std::size_t stride = size >> 1; stride >= 1; stride >>= 1) {
    for (std::size_t i = 2 * stride - 1; i < size; i += 2 * stride) {
      Pair left = std::move(items[i - stride]);
      items[i - stride] = items[i];
      items[i] = combine(items[i], left);
      ++combines;
    }
  }
  items.resize(n);
}

}  // namespace detail

/// Solves x_t = A_t x_{t-1} + b_t for t = 1..T with x_0 = 0; row t-1 of the
/// result holds x_t.
///
/// Parallel mode splits the sequence into C chunks. Every chunk but the last
/// folds its elements into a summary pair (chunk 0 writes its outputs on the
/// way, since its incoming state is zero). The summaries go through a Blelloch
/// up/down sweep giving each chunk its incoming state, and chunks 1..C-1 then
/// replay their recursion from that state. Non-finite values propagate.
template <AffineSequence Sequence>
StateArray affine_scan(const Sequence& seq, const ScanOptions& opts = {}, ScanStats* stats = nullptr) {
  const std::size_t T = seq.length();
  const std::size_t D = seq.dim();
  StateArray out(T, D);
  ScanStats local;

  const std::size_t requested = opts.chunks == 0 ? default_workers() : opts.chunks;
  const std::size_t C =
      opts.mode == ScanMode::sequential ? 1 : detail::effective_chunks(T, requested);
  local.chunks = C;

  if (C == 1) {
    Vec zero(D, 0.0);
    for (std::size_t t = 0; t < T; ++t) seq.apply(t, t == 0 ? std::span<const double>(zero) : out.row(t - 1), out.row(t));
    local.element_ops = T;
    if (stats) *stats = local;
    return out;
  }

  const auto bounds = chunk_bounds(T, C);
  const std::size_t workers = opts.workers == 0 ? C : opts.workers;
  using Pair = typename Sequence::Pair;

  std::vector<Pair> summary(C, seq.identity());
  std::vector<std::size_t> ops(C, 0);
  parallel_for(C - 1, workers, [&](std::size_t k) {
    Pair acc = seq.identity();
    Mat scratch;
    for (std::size_t t = bounds[k]; t < bounds[k + 1]; ++t) {
      seq.absorb(t, acc, scratch);
      if (k == 0) std::copy(acc.b.begin(), acc.b.end(), out.row(t).begin());
    }
    ops[k] = bounds[k + 1] - bounds[k];
    summary[k] = std::move(acc);
  });

  detail::blelloch_exclusive(summary, seq.identity(), local.combines);

  parallel_for(C - 1, workers, [&](std::size_t j) {
    const std::size_t k = j + 1;
    const Vec& incoming = summary[k].b;
    for (std::size_t t = bounds[k]; t < bounds[k + 1]; ++t)
      seq.apply(t, t == bounds[k] ? std::span<const double>(incoming) : out.row(t - 1), out.row(t));
    ops[k] += bounds[k + 1] - bounds[k];
  });

  for (std::size_t k = 0; k < C; ++k) local.element_ops += ops[k];
  if (stats) *stats = local;
  return out;
}

/// Convenience overload over a list of pairs.
inline StateArray affine_scan(std::span<const AffinePair> elements, const ScanOptions& opts = {},
                              ScanStats* stats = nullptr) {
  return affine_scan(DenseAffineSequence(elements), opts, stats);
}

}  // namespace parseq

#endif  // PARSEQ_SCAN_HPP_
