#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

// Counter-based deterministic random numbers. Every draw is a pure function
// of (key, counter, lane), so channels can be evaluated in any order or in
// parallel and still produce identical bytes.
namespace amwatch::rng {

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over a string, folded with an integer seed
inline std::uint64_t hash_key(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h ^ mix64(seed));
}

// Uniform in (0, 1]; never returns 0 so it is safe inside log().
inline double u01(std::uint64_t key, std::uint64_t counter, std::uint32_t lane) {
  std::uint64_t bits = mix64(key ^ mix64(counter ^ (std::uint64_t(lane) << 48)));
  return (double(bits >> 11) + 1.0) * 0x1.0p-53;
}

// Standard normal via Box-Muller.
inline double gaussian(std::uint64_t key, std::uint64_t counter) {
  double u1 = u01(key, counter, 0);
  double u2 = u01(key, counter, 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace amwatch::rng
