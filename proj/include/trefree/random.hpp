#pragma once

#include <cstdint>
#include <random>

namespace trefree {

using Rng = std::mt19937_64;

// Seed splitting: every subsystem derives its generator from the root seed and a
// stream id through splitmix64 finalization, so streams are independent of each
// other and of the order in which they are created.
std::uint64_t split_seed(std::uint64_t root, std::uint64_t stream);

inline Rng make_rng(std::uint64_t root, std::uint64_t stream) {
  return Rng(split_seed(root, stream));
}

// Stream ids used by the trainer and CLI.
namespace streams {
inline constexpr std::uint64_t kNetInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kEnvBase = 1000;     // + actor index
inline constexpr std::uint64_t kActionBase = 2000;  // + actor index
inline constexpr std::uint64_t kInstanceBase = 10000;  // + bound-sweep instance index
}  // namespace streams

}  // namespace trefree
