#include "adfnet/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace adfnet {

std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() { return splitmix64(seed_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::gaussian() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Rng Rng::fork(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream + 1))); }

template <class T>
BasicTensor<T> rand_init(Rng& rng, Shape shape, InitScheme scheme) {
  if (shape.numel() == 0) throw std::invalid_argument("rand_init: shape must be positive");
  BasicTensor<T> out(shape);
  if (scheme.kind == InitScheme::Kind::UniformFanIn) {
    if (scheme.fan_in == 0) throw std::invalid_argument("rand_init: fan_in must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(scheme.fan_in));
    for (auto& v : out.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  } else {
    for (auto& v : out.values()) v = static_cast<T>(scheme.sigma * rng.gaussian());
  }
  return out;
}

template BasicTensor<float> rand_init(Rng&, Shape, InitScheme);
template BasicTensor<double> rand_init(Rng&, Shape, InitScheme);

}  // namespace adfnet
