#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lastomo {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed, a stream label and
// up to two integer keys. Same inputs always give the same seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                    std::uint64_t key0 = 0, std::uint64_t key1 = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
  for (char ch : label) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = mix64(master ^ h);
  s = mix64(s ^ key0);
  s = mix64(s ^ (key1 + 0x632be59bd9b4e019ULL));
  return s;
}

}  // namespace lastomo
