#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace coegan {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salt) noexcept {
  std::uint64_t h = mix64(base);
  for (std::uint64_t s : salt) h = mix64(h ^ mix64(s));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> salt) {
  return Rng(derive_seed(base, salt));
}

// Uniform integer in [lo, hi].
template <class Int>
Int uniform_int(Rng& rng, Int lo, Int hi) {
  return std::uniform_int_distribution<Int>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace coegan
