#ifndef RNDOOD_RNG_HPP
#define RNDOOD_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace rndood {

/// splitmix64 finalizer; used to derive independent seed streams from one
/// user-facing seed without correlated low bits.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix64(mix64(base ^ mix64(stream)) + index);
}

// Named streams, so seed derivation stays stable across refactors.
namespace seed_stream {
inline constexpr std::uint64_t kPredictor = 0x7072656469637401ull;
inline constexpr std::uint64_t kTarget = 0x746172676574AA02ull;
inline constexpr std::uint64_t kSubsample = 0x73756273616D7003ull;
inline constexpr std::uint64_t kBatchOrder = 0x626174636F726404ull;
inline constexpr std::uint64_t kSynth = 0x73796E7468AA0505ull;
inline constexpr std::uint64_t kOrthogonal = 0x6F727468AA060606ull;
inline constexpr std::uint64_t kProbe = 0x70726F6265AA0707ull;
}  // namespace seed_stream

/// Seeded permutation of 0..n-1 (Fisher-Yates with modulo draws, so the
/// result depends only on the mt19937_64 stream, not on library details).
inline std::vector<int> seeded_permutation(int n, std::uint64_t seed) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

}  // namespace rndood

#endif  // RNDOOD_RNG_HPP
