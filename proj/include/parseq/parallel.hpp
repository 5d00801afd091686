#ifndef PARSEQ_PARALLEL_HPP_
#define PARSEQ_PARALLEL_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace parseq {

/// Worker budget: PARSEQ_WORKERS if set and positive, else hardware concurrency.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("PARSEQ_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads and blocks until all
/// are done. Indices are striped across threads. The first exception thrown by
/// any task is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t w = std::min(workers, n);
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(w);
    for (std::size_t k = 0; k < w; ++k) {
      pool.emplace_back([&, k] {
        try {
          for (std::size_t i = k; i < n; i += w) fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Contiguous [begin, end) ranges splitting n items into `parts` near-equal chunks.
inline std::vector<std::size_t> chunk_bounds(std::size_t n, std::size_t parts) {
  std::vector<std::size_t> b(parts + 1);
  for (std::size_t k = 0; k <= parts; ++k) b[k] = k * n / parts;
  return b;
}

}  // namespace parseq

#endif  // PARSEQ_PARALLEL_HPP_
