#pragma once

#include <cstdint>
#include <random>

namespace panelmmle {

// Seeded random stream keyed by (master_seed, stream_index).  Replications and
// draw batches each get their own stream, so results do not depend on how work
// is split across threads.  Normal variates come from an explicit Box-Muller
// transform on top of std::mt19937_64 rather than std::normal_distribution,
// whose output sequence is implementation-defined.
class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint64_t stream_index);

  // Uniform on (0, 1), never returning an exact 0 or 1.
  double uniform();

  // Standard normal.
  double normal();

  // Centered and scaled chi-square(1): (z^2 - 1)/sqrt(2), mean 0 variance 1.
  double chisq1_standardized();

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

// SplitMix64 step; used to whiten stream keys into engine seeds.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace panelmmle
