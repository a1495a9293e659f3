#include "panelmmle/rng.hpp"

#include <cmath>

namespace panelmmle {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t master_seed, std::uint64_t stream_index) {
  std::uint64_t state = master_seed ^ (0xD1B54A32D192ED03ULL * (stream_index + 1));
  // Whiten the (seed, stream) key; a single 64-bit seed fully determines the
  // mt19937_64 state sequence.
  std::uint64_t s0 = splitmix64(state);
  std::uint64_t s1 = splitmix64(state);
  engine_.seed(s0 ^ (s1 << 1));
}

double Rng::uniform() {
  // 53-bit mantissa in (0,1): (x >> 11) / 2^53, nudged away from 0.
  const double u = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  return u;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

double Rng::chisq1_standardized() {
  const double z = normal();
  return (z * z - 1.0) / std::sqrt(2.0);
}

}  // namespace panelmmle
