#pragma once

#include <cstdint>
#include <random>

namespace rtrl {

using Rng = std::mt19937_64;

// SplitMix64 avalanche step.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Splittable counter scheme: every consumer of randomness owns a stream
// keyed by (master seed, tag, a, b). Streams are derived by hashing the key,
// never by drawing from a shared generator, so results do not depend on
// scheduling or worker count.
//
// Key assignment used throughout:
//   tag 1: parameter initialization            (a = b = 0)
//   tag 2: trajectory sampling                 (a = iteration, b = trajectory index)
//   tag 3: experience subsampling              (a = iteration)
//   tag 4: evaluation rollouts                 (a = trajectory index)
//   tag 5: sweep seed derivation               (a = lr index, b = repeat)
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ mix64(tag));
  h = mix64(h ^ mix64(a));
  h = mix64(h ^ mix64(b));
  return h;
}

inline Rng derive_stream(std::uint64_t master, std::uint64_t tag,
                         std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(master, tag, a, b));
}

namespace seed_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t trajectory = 2;
inline constexpr std::uint64_t subsample = 3;
inline constexpr std::uint64_t eval = 4;
inline constexpr std::uint64_t sweep = 5;
}  // namespace seed_tag

}  // namespace rtrl
