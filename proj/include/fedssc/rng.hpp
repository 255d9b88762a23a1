#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedssc {

// splitmix64 finalizer; used to whiten seed material before it reaches an engine.
inline std::uint64_t hash64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent seed stream from (seed, tag, indices...). Every
// component that needs randomness gets its own stream so execution order
// cannot change results.
template <class... Parts>
std::uint64_t mix_seed(std::uint64_t seed, Parts... parts) {
  std::uint64_t s = hash64(seed);
  ((s = hash64(s ^ static_cast<std::uint64_t>(parts))), ...);
  return s;
}

template <class... Parts>
std::uint64_t mix_seed_tag(std::uint64_t seed, std::string_view tag, Parts... parts) {
  return mix_seed(seed, fnv1a(tag), static_cast<std::uint64_t>(parts)...);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(hash64(seed));
}

// Uniform in [0,1) from raw engine bits; avoids distribution objects whose
// output sequences differ between standard library implementations.
inline double uniform01(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n); modulo bias is irrelevant for n << 2^64.
inline std::uint64_t uniform_below(std::mt19937_64& eng, std::uint64_t n) {
  return eng() % n;
}

// In-place Fisher-Yates with a stable, implementation-independent sequence.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& eng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(eng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace fedssc
