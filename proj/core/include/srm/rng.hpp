#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace srm {

/// SplitMix64 step: advances `state` by the golden-ratio increment and
/// returns the mixed output. Used for seeding and stream derivation.
std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256** 1.0 generator seeded from four consecutive SplitMix64 outputs.
///
/// Every variate is produced by a documented algorithm so that a second
/// implementation in another language can replay the same stream:
///   uniform()  = (next() >> 11) * 2^-53                      in [0, 1)
///   normal()   = sqrt(-2 log(1 - u1)) * cos(2 pi u2)         (one output per call)
///   below(n)   = rejection sampling on the top bits           in [0, n)
///   binomial() = sum of n Bernoulli(p) trials, each uniform() < p
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  /// Independent stream `index` of the generator family rooted at `seed`.
  /// The stream seed is splitmix64 applied to seed + (index + 1) * 0x9E3779B97F4A7C15.
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next();
  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

  double uniform();
  double uniform(double lo, double hi);
  double normal();
  std::uint64_t below(std::uint64_t bound);
  std::int64_t binomial(std::int64_t trials, double p);

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace srm
