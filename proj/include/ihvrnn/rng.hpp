#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ihvrnn {

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view bytes);

// Seedable random source with a portable bit stream. The engine is
// std::mt19937_64 (bit-exact by the standard); uniform and normal variates are
// derived here rather than through <random> distributions, whose output is
// implementation-defined.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm =
      "mt19937_64;seed=splitmix64;keyed-split=splitmix64(seed^fnv1a64(key));"
      "uniform=53bit;normal=box-muller";

  explicit Rng(uint64_t seed = 0);

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  int uniform_int(int n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream keyed by name. Depends only on this stream's
  // seed and the key, never on how many draws were consumed.
  Rng derive(std::string_view key) const;

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ihvrnn
