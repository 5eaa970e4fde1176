// Deterministic random streams.
//
// Every random draw in a run comes from a stream keyed by
// (run seed, node, purpose, iteration). Streams are derived with a
// SplitMix64 mixing chain and driven by xoshiro256**. Distribution
// transforms are implemented here rather than taken from <random> so
// that trajectories are bit-identical across standard libraries.
#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace quantimed {

enum class StreamPurpose : std::uint64_t {
  kTopology = 1,
  kData = 2,
  kSpeed = 3,
  kBatch = 4,
  kQuantize = 5,
  kInit = 6,
  kTeacher = 7,
  kEstimate = 8,
};

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t node = 0;
  StreamPurpose purpose = StreamPurpose::kData;
  std::uint64_t iteration = 0;
};

/// One step of the SplitMix64 generator; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes all key fields into a single 64-bit seed.
std::uint64_t derive_seed(const StreamKey& key);

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  explicit Rng(const StreamKey& key) : Rng(derive_seed(key)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal (Marsaglia polar method, no cached second variate).
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace quantimed
