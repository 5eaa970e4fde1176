#include <gtest/gtest.h>

#include <cmath>

#include "quantimed/quantize.hpp"

using namespace quantimed;

namespace {

Eigen::VectorXd one(double x) { return Eigen::VectorXd::Constant(1, x); }

}  // namespace

TEST(QuantizerSpec, DefaultRange) {
  const QuantizerSpec q(0.05, 4);
  EXPECT_DOUBLE_EQ(q.lo(), -0.4);
  EXPECT_EQ(q.level_count(), 16u);
  EXPECT_DOUBLE_EQ(q.hi(), -0.4 + 15 * 0.05);
  EXPECT_DOUBLE_EQ(q.value(8), 0.0);
}

TEST(QuantizerSpec, RejectsBadParameters) {
  EXPECT_THROW(QuantizerSpec(0.0, 4), std::invalid_argument);
  EXPECT_THROW(QuantizerSpec(-1.0, 4), std::invalid_argument);
  EXPECT_THROW(QuantizerSpec(1.0, 0), std::invalid_argument);
  EXPECT_THROW(QuantizerSpec(1.0, 17), std::invalid_argument);
  EXPECT_NO_THROW(QuantizerSpec(1.0, 16));
}

TEST(Quantize, TwoPointLaw) {
  const QuantizerSpec spec(1.0, 4);
  Rng rng(StreamKey{1, 0, StreamPurpose::kQuantize, 0});
  const int draws = 100000;
  int ups = 0;
  for (int i = 0; i < draws; ++i) {
    const double v = dequantize(quantize(one(0.3), spec, rng))(0);
    ASSERT_TRUE(v == 0.0 || v == 1.0);
    ups += v == 1.0;
  }
  EXPECT_NEAR(ups / static_cast<double>(draws), 0.3, 3.0 * std::sqrt(0.21 / draws));
}

TEST(Quantize, GridPointIsFixed) {
  const QuantizerSpec spec(0.25, 6);
  Rng rng(3);
  for (int k = 0; k < 64; ++k) {
    const double x = spec.value(static_cast<std::uint32_t>(k));
    for (int r = 0; r < 5; ++r) {
      const QuantizedVector q = quantize(one(x), spec, rng);
      EXPECT_EQ(q.levels[0], k);
      EXPECT_EQ(q.clamped, 0u);
    }
  }
}

TEST(Quantize, UnbiasedAndVarianceAcrossPoints) {
  const QuantizerSpec spec(0.1, 8);
  Rng rng(StreamKey{2, 0, StreamPurpose::kQuantize, 0});
  const int draws = 100000;
  for (double x : {-1.234, -0.05, 0.0, 0.017, 0.333, 2.5}) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double v = dequantize(quantize(one(x), spec, rng))(0);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / draws;
    const double var = sq / draws - mean * mean;
    const double exact = rounding_variance(spec, x);
    const double se = std::sqrt(exact / draws);
    EXPECT_NEAR(mean, x, 3.0 * se + 1e-12) << x;
    // Bernoulli variance of the sample variance: var(1 - 4q(1-q)) eta^4 / n is below eta^4 / n.
    EXPECT_NEAR(var, exact, 3.0 * spec.eta() * spec.eta() / std::sqrt(draws)) << x;
    EXPECT_LE(exact, spec.eta() * spec.eta() / 4.0 + 1e-15);
  }
}

TEST(Quantize, RoundingVarianceFormula) {
  const QuantizerSpec spec(1.0, 4);
  EXPECT_NEAR(rounding_variance(spec, 0.3), 0.21, 1e-12);
  EXPECT_NEAR(rounding_variance(spec, 2.0), 0.0, 1e-12);
  EXPECT_NEAR(rounding_variance(spec, 0.5), 0.25, 1e-12);
}

TEST(Quantize, ClampsAndCounts) {
  const QuantizerSpec spec(1.0, 2);  // levels -2, -1, 0, 1
  Eigen::VectorXd x(4);
  x << -5.0, 1.0, 3.0, std::nan("");
  Rng rng(1);
  const QuantizedVector q = quantize(x, spec, rng);
  EXPECT_EQ(q.clamped, 3u);
  EXPECT_EQ(q.levels[0], 0);
  EXPECT_EQ(q.levels[1], 3);
  EXPECT_EQ(q.levels[2], 3);
  EXPECT_EQ(q.levels[3], 0);
}

TEST(Quantize, SameStreamSameOutput) {
  const QuantizerSpec spec(0.01, 8);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(50, -1.0, 1.0);
  Rng a(StreamKey{5, 2, StreamPurpose::kQuantize, 9});
  Rng b(StreamKey{5, 2, StreamPurpose::kQuantize, 9});
  EXPECT_EQ(encode(quantize(x, spec, a)), encode(quantize(x, spec, b)));
}

TEST(Dequantize, Examples) {
  EXPECT_EQ(dequantize(QuantizedVector{QuantizerSpec(1.0, 4, 0.0), {0}, 0})(0), 0.0);
  EXPECT_EQ(dequantize(QuantizedVector{QuantizerSpec(0.5, 4, -1.0), {3}, 0})(0), 0.5);
}

TEST(VarianceBound, Examples) {
  EXPECT_DOUBLE_EQ(variance_bound(QuantizerSpec(1.0, 4), 4), 1.0);
  EXPECT_DOUBLE_EQ(variance_bound(QuantizerSpec(1.0, 4), 1), 0.25);
  EXPECT_DOUBLE_EQ(variance_bound(QuantizerSpec(0.5, 4), 8), 0.5);
}

TEST(Wire, PackedNibbles) {
  const QuantizedVector q{QuantizerSpec(1.0, 4), {1, 2, 3}, 0};
  const std::vector<std::uint8_t> bytes = encode(q);
  ASSERT_EQ(bytes.size(), kWireHeaderBytes + kWireLoPrefixBytes + 2);
  EXPECT_EQ(bytes[0], 'Q');
  EXPECT_EQ(bytes[1], 'V');
  EXPECT_EQ(bytes[2], 1);
  EXPECT_EQ(bytes[3], 4);
  EXPECT_EQ(bytes[4], 3);  // p, little-endian
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[24], 0x21);
  EXPECT_EQ(bytes[25], 0x03);
}

TEST(Wire, HeaderFloatsLittleEndian) {
  const QuantizedVector q{QuantizerSpec(1.0, 4, -8.0), {0}, 0};
  const std::vector<std::uint8_t> bytes = encode(q);
  // 1.0 = 0x3FF0000000000000, -8.0 = 0xC020000000000000
  EXPECT_EQ(bytes[15], 0x3F);
  EXPECT_EQ(bytes[14], 0xF0);
  EXPECT_EQ(bytes[23], 0xC0);
  EXPECT_EQ(bytes[22], 0x20);
}

TEST(Wire, RoundTripProperty) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int bits = 1 + static_cast<int>(rng.below(16));
    const std::size_t p = rng.below(40);
    const double eta = 0.001 + rng.uniform();
    const QuantizerSpec spec(eta, bits, rng.uniform(-5.0, 5.0));
    QuantizedVector q{spec, {}, 0};
    for (std::size_t k = 0; k < p; ++k) q.levels.push_back(static_cast<std::uint16_t>(rng.below(spec.level_count())));
    const std::vector<std::uint8_t> bytes = encode(q);
    ASSERT_EQ(bytes.size(), encoded_size(bits, p));
    const QuantizedVector back = decode(bytes);
    EXPECT_EQ(back.spec, q.spec);
    EXPECT_EQ(back.levels, q.levels);
  }
}

TEST(Wire, DecodeRejectsMalformed) {
  const QuantizedVector q{QuantizerSpec(1.0, 4), {1, 2, 3}, 0};
  const std::vector<std::uint8_t> good = encode(q);

  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode(bad), DecodeError);
  bad = good;
  bad[2] = 2;
  EXPECT_THROW(decode(bad), DecodeError);
  bad = good;
  bad[3] = 0;
  EXPECT_THROW(decode(bad), DecodeError);
  bad = good;
  bad.pop_back();
  EXPECT_THROW(decode(bad), DecodeError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(decode(bad), DecodeError);
  EXPECT_THROW(decode(std::span<const std::uint8_t>(good.data(), 10)), DecodeError);
}

TEST(CommCost, Examples) {
  EXPECT_DOUBLE_EQ(comm_time(QuantizerSpec(1.0, 4), 3.0), 0.75);
  EXPECT_DOUBLE_EQ(comm_time(QuantizerSpec(1.0, 16), 3.0), 3.0);
  EXPECT_DOUBLE_EQ(comm_time(QuantizerSpec(1.0, 8), 1.0), 0.5);
  EXPECT_DOUBLE_EQ(comm_time(std::nullopt, 3.0), 3.0);
  EXPECT_EQ(message_bits(QuantizerSpec(1.0, 4), 10), 40u);
  EXPECT_EQ(unquantized_message_bits(10), 160u);
}
