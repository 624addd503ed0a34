#ifndef LOSSTUNNEL_RNG_HPP
#define LOSSTUNNEL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "losstunnel/types.hpp"

namespace losstunnel {

using RngEngine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent stream for (seed, stream_id); different ids decorrelate even
// for adjacent seeds.
inline RngEngine makeStream(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= 0x6a09e667f3bcc909ULL + stream_id * 0x9e3779b97f4a7c15ULL;
  std::uint64_t b = splitmix64(s);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return RngEngine(seq);
}

// Uniform in [0, 1), 53-bit resolution.
inline double uniform01(RngEngine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniformRange(RngEngine& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

namespace detail {
// Box-Muller pair; consumes exactly two uniforms.
inline void normalPair(RngEngine& rng, double& z0, double& z1) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  const double a = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}
}  // namespace detail

// One standard normal draw. Always consumes two uniforms so that RNG
// consumption is independent of call pairing.
inline double standardNormal(RngEngine& rng) {
  double z0, z1;
  detail::normalPair(rng, z0, z1);
  return z0;
}

inline Vector normalVector(RngEngine& rng, Index n) {
  Vector out(n);
  Index i = 0;
  for (; i + 1 < n; i += 2) detail::normalPair(rng, out[i], out[i + 1]);
  if (i < n) {
    double z0, z1;
    detail::normalPair(rng, z0, z1);
    out[i] = z0;
  }
  return out;
}

}  // namespace losstunnel

#endif
