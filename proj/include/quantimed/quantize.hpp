// Unbiased stochastic low-precision quantizer and its wire format.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "quantimed/rng.hpp"

namespace quantimed {

/// Grid {lo + k * eta : k = 0, ..., 2^s - 1}.
class QuantizerSpec {
 public:
  /// lo defaults to -eta * 2^(s-1).
  QuantizerSpec(double eta, int bits, std::optional<double> lo = std::nullopt);

  double eta() const { return eta_; }
  int bits() const { return bits_; }
  double lo() const { return lo_; }
  double hi() const { return lo_ + static_cast<double>(max_level()) * eta_; }
  std::uint32_t level_count() const { return std::uint32_t{1} << bits_; }
  std::uint32_t max_level() const { return level_count() - 1; }
  double value(std::uint32_t level) const { return lo_ + static_cast<double>(level) * eta_; }

  bool operator==(const QuantizerSpec&) const = default;

 private:
  double eta_;
  int bits_;
  double lo_;
};

inline constexpr int kMaxQuantizerBits = 16;

struct QuantizedVector {
  QuantizerSpec spec;
  std::vector<std::uint16_t> levels;
  /// Coordinates that fell outside [lo, hi] and were clamped to an edge.
  std::size_t clamped = 0;

  std::size_t dimension() const { return levels.size(); }
  bool operator==(const QuantizedVector&) const = default;
};

/// Stochastic rounding: for lo + k eta <= x < lo + (k+1) eta, returns level k+1
/// with probability (x - lo - k eta) / eta and level k otherwise. One uniform
/// draw per coordinate, in coordinate order.
template <typename Derived>
QuantizedVector quantize(const Eigen::MatrixBase<Derived>& x, const QuantizerSpec& spec, Rng& rng) {
  QuantizedVector q{spec, {}, 0};
  q.levels.resize(static_cast<std::size_t>(x.size()));
  const double top = static_cast<double>(spec.max_level());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const double u = rng.uniform();
    const double t = (static_cast<double>(x(c)) - spec.lo()) / spec.eta();
    std::uint32_t level = 0;
    if (!(t >= 0.0)) {  // also catches NaN
      level = 0;
      ++q.clamped;
    } else if (t >= top) {
      level = spec.max_level();
      if (t > top) ++q.clamped;
    } else {
      const double k = std::floor(t);
      const double frac = t - k;
      level = static_cast<std::uint32_t>(k) + (u < frac ? 1u : 0u);
    }
    q.levels[static_cast<std::size_t>(c)] = static_cast<std::uint16_t>(level);
  }
  return q;
}

Eigen::VectorXd dequantize(const QuantizedVector& q);

/// Worst-case E||Q(x) - x||^2 over in-range x: p * eta^2 / 4.
double variance_bound(const QuantizerSpec& spec, std::size_t p);

/// Exact per-coordinate rounding variance (x - k eta)((k+1) eta - x) for in-range x.
double rounding_variance(const QuantizerSpec& spec, double x);

/// Wire format, little-endian:
///   "QV" | version u8 = 1 | s u8 | p u32 | eta f64 | lo f64 | packed levels
/// Levels are packed LSB-first, s bits each, ceil(p s / 8) bytes.
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kWireHeaderBytes = 16;
inline constexpr std::size_t kWireLoPrefixBytes = 8;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode(const QuantizedVector& q);
QuantizedVector decode(std::span<const std::uint8_t> bytes);
std::size_t encoded_size(int bits, std::size_t p);

/// p * s; the fixed header is excluded from the proportional cost model.
std::uint64_t message_bits(const QuantizerSpec& spec, std::size_t p);
/// Bits of an unquantized (16-bit reference precision) exchange.
std::uint64_t unquantized_message_bits(std::size_t p);
/// Tc * s / 16; an unquantized exchange costs Tc.
double comm_time(const std::optional<QuantizerSpec>& spec, double tc);

}  // namespace quantimed
