#ifndef PARSEQ_RANDOM_HPP_
#define PARSEQ_RANDOM_HPP_

#include <cstdint>
#include <random>

namespace parseq {

using Rng = std::mt19937_64;

/// Independent deterministic stream `stream` derived from `seed`.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// Stream ids, fixed so that each consumer of a seed draws independently.
namespace streams {
inline constexpr std::uint64_t weights = 1;
inline constexpr std::uint64_t initial_state = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t solver_init = 4;
inline constexpr std::uint64_t lle_vectors = 5;
inline constexpr std::uint64_t lipschitz = 6;
inline constexpr std::uint64_t inputs = 7;
}  // namespace streams

}  // namespace parseq

#endif  // PARSEQ_RANDOM_HPP_
