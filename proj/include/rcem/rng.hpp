#pragma once
// Counter-based uniform random source: a stateless splitmix64-style hash
// of (seed, path, year). Draws depend only on the key, so parallel and
// serial simulation of the same ensemble are bit-identical.

#include <cstdint>

namespace rcem {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(std::uint64_t seed, std::uint64_t path,
                        std::uint64_t year) {
  const std::uint64_t h = mix64(seed ^ mix64(path + mix64(year)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace rcem
