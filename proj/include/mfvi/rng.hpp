#pragma once

// Seeded, reproducible sampling. One Rng per logical stream; identical seed
// and call sequence give bit-identical output. Substreams for restarts and
// per-document work are derived with substream().

#include <cstdint>
#include <span>
#include <vector>

namespace mfvi {

// xoshiro256** seeded through SplitMix64.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform01();                     // 53-bit uniform in [0, 1)
  double uniform(double lo, double hi);
  double normal();                        // Marsaglia polar, cached spare
  double gamma(double shape);             // Marsaglia-Tsang; shape < 1 boost
  std::vector<double> dirichlet(std::span<const double> alpha);
  int categorical(std::span<const double> p);  // inverse-CDF scan

  // Stable derived seed for stream `index` of run `seed`.
  static uint64_t substream(uint64_t seed, uint64_t index);

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mfvi
