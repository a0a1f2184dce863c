#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace demi {

/// Random engine used everywhere in the library. Every stochastic routine
/// takes one of these by reference so callers control stream identity.
using Rng = std::mt19937_64;

/// Mixes a 64-bit value (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a over a label.
constexpr std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from a root seed and a label path,
/// e.g. derive_seed(seed, {"cov_search", "dim", "7"}). The same
/// (root, labels) always yields the same seed, so parallel and serial
/// executions draw identical numbers.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::string_view> labels) {
  std::uint64_t s = mix64(root);
  for (auto label : labels) s = mix64(s ^ hash_label(label));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index) {
  return mix64(derive_seed(root, {label}) ^ mix64(index + 1));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace demi
