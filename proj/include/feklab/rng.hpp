#pragma once
// Deterministic RNG substreams.  Every parallelizable unit of work (chain,
// sample block, restart) draws from its own engine seeded by mixing the master
// seed with the unit index, so results are bitwise independent of how the work
// is scheduled across workers.

#include <cstdint>
#include <random>

namespace feklab {

// splitmix64 finalizer; decorrelates consecutive seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
}

inline std::mt19937_64 make_engine(std::uint64_t master, std::uint64_t stream) {
  return std::mt19937_64(substream_seed(master, stream));
}

}  // namespace feklab
