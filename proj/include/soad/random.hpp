#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "soad/types.hpp"

namespace soad {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `tags...` of `base`. Order of tags matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t s = mix_seed(base);
  for (auto tag : tags) s = mix_seed(s ^ mix_seed(tag + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags = {}) {
  return Rng(derive_seed(base, tags));
}

inline void fill_normal(Rng& rng, double* data, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < n; ++i) data[i] = normal(rng);
}

inline Vector standard_normal(Rng& rng, Index n) {
  Vector v(n);
  fill_normal(rng, v.data(), n);
  return v;
}

inline Matrix standard_normal(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  fill_normal(rng, m.data(), m.size());
  return m;
}

}  // namespace soad
