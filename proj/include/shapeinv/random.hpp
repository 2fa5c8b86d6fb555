#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace shapeinv {

//! Counter-based normal generator: the k-th draw depends only on
//! (seed, k), so any draw can be reproduced independently of the others
//! and of the order in which they are requested.
class CounterNormal
{
public:
  explicit CounterNormal(std::uint64_t seed)
    : seed_(seed)
  {}

  std::uint64_t seed() const { return seed_; }

  //! Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const
  {
    std::uint64_t x = mix(seed_ ^ mix(counter + 0x632BE59BD9B4E019ULL));
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  //! Standard normal draw number `counter` (Box-Muller, cosine branch).
  double normal(std::uint64_t counter) const
  {
    double u1 = uniform(2 * counter);
    double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z)
  {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
};

} // namespace shapeinv
