#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "quantimed/rng.hpp"

using namespace quantimed;

TEST(Rng, SameKeySameStream) {
  const StreamKey key{42, 3, StreamPurpose::kQuantize, 17};
  Rng a(key), b(key);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Rng, KeyFieldsSeparateStreams) {
  const StreamKey base{42, 3, StreamPurpose::kQuantize, 17};
  std::set<std::uint64_t> seeds{derive_seed(base)};
  StreamKey k = base;
  k.seed = 43;
  seeds.insert(derive_seed(k));
  k = base;
  k.node = 4;
  seeds.insert(derive_seed(k));
  k = base;
  k.purpose = StreamPurpose::kBatch;
  seeds.insert(derive_seed(k));
  k = base;
  k.iteration = 18;
  seeds.insert(derive_seed(k));
  // Swapping node and iteration must not collide either.
  seeds.insert(derive_seed(StreamKey{42, 17, StreamPurpose::kQuantize, 3}));
  EXPECT_EQ(seeds.size(), 6u);
}

TEST(Rng, KnownSplitMixOutput) {
  // Reference values of SplitMix64 from state 0.
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64(state), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(splitmix64(state), 0x6e789e6aa1b965f4ULL);
}

TEST(Rng, UniformMoments) {
  Rng rng(7);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sq / n - mean * mean, 1.0 / 12.0, 2e-3);
}

TEST(Rng, BelowIsUniform) {
  Rng rng(9);
  std::array<int, 7> counts{};
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4.0 * std::sqrt(n / 7.0));
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sq = 0.0, fourth = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    fourth += z * z * z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 0.015);
  EXPECT_NEAR(fourth / n, 3.0, 0.1);
}
