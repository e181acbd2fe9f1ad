#pragma once

#include <cstdint>
#include <random>

namespace chcds {

using Rng = std::mt19937_64;

//! SplitMix64 finalizer; used to derive statistically independent seeds.
constexpr std::uint64_t
splitmix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Seed of stream `index` under `master`. Depends only on the pair, so
//! replicate streams are independent of execution order.
constexpr std::uint64_t
derive_seed(std::uint64_t master, std::uint64_t index)
{
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng
make_rng(std::uint64_t seed)
{
  std::seed_seq seq{ static_cast<std::uint32_t>(seed),
                     static_cast<std::uint32_t>(seed >> 32) };
  return Rng(seq);
}

} // namespace chcds
