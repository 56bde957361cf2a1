#ifndef BIGCN_RANDOM_H_
#define BIGCN_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bigcn {

using Rng = std::mt19937_64;

/// Mixes a base seed with a list of stream identifiers (epoch, event index,
/// ...) into an independent seed. One user seed drives every random stream.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (std::uint64_t p : path) h = mix(h ^ mix(p));
  return h;
}

}  // namespace bigcn

#endif  // BIGCN_RANDOM_H_
