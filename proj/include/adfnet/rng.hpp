#pragma once

#include <cstddef>
#include <cstdint>

#include "adfnet/tensor.hpp"

namespace adfnet {

/// Counter-based generator: the i-th draw is splitmix64(seed + (i+1) * golden).
/// The stream depends only on (seed, counter), so it is identical on every
/// platform and can be forked into independent sub-streams.
///
/// Frozen definitions (golden tests depend on them):
///   next_u64:  z = seed + (++counter) * 0x9E3779B97F4A7C15, then the splitmix64
///              finalizer (xor-shift 30/27/31 with multipliers 0xBF58476D1CE4E5B9
///              and 0x94D049BB133111EB)
///   uniform:   (next_u64 >> 11) * 2^-53, in [0, 1)
///   gaussian:  Box-Muller, sqrt(-2 ln(1-u1)) * cos(2 pi u2), one value per pair
///   below(n):  high 64 bits of next_u64 * n
///   fork(s):   Rng(splitmix64(seed ^ splitmix64(s + 1)))
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian();
  std::uint64_t below(std::uint64_t n);
  bool coin() { return (next_u64() >> 63) != 0; }

  Rng fork(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

struct InitScheme {
  enum class Kind { UniformFanIn, Gaussian };
  Kind kind = Kind::UniformFanIn;
  std::size_t fan_in = 1;
  double sigma = 1.0;

  static InitScheme uniform_fan_in(std::size_t fan_in) { return {Kind::UniformFanIn, fan_in, 0.0}; }
  static InitScheme gaussian(double sigma) { return {Kind::Gaussian, 0, sigma}; }
};

/// uniform-fan-in draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); gaussian from N(0, sigma^2).
template <class T>
BasicTensor<T> rand_init(Rng& rng, Shape shape, InitScheme scheme);

}  // namespace adfnet
