#include "quantimed/quantize.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace quantimed {

QuantizerSpec::QuantizerSpec(double eta, int bits, std::optional<double> lo) : eta_(eta), bits_(bits), lo_(0.0) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("QuantizerSpec: eta must be positive and finite");
  if (bits < 1 || bits > kMaxQuantizerBits) throw std::invalid_argument("QuantizerSpec: bits must lie in [1, 16]");
  lo_ = lo.value_or(-eta * std::ldexp(1.0, bits - 1));
  if (!std::isfinite(lo_)) throw std::invalid_argument("QuantizerSpec: lo must be finite");
}

Eigen::VectorXd dequantize(const QuantizedVector& q) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(q.levels.size()));
  for (std::size_t c = 0; c < q.levels.size(); ++c) out(static_cast<Eigen::Index>(c)) = q.spec.value(q.levels[c]);
  return out;
}

double variance_bound(const QuantizerSpec& spec, std::size_t p) {
  return static_cast<double>(p) * spec.eta() * spec.eta() / 4.0;
}

double rounding_variance(const QuantizerSpec& spec, double x) {
  const double t = (x - spec.lo()) / spec.eta();
  const double k = std::floor(t);
  const double below = spec.lo() + k * spec.eta();
  return (x - below) * (below + spec.eta() - x);
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(bytes[offset + b]) << (8 * b);
  return v;
}

}  // namespace

std::size_t encoded_size(int bits, std::size_t p) {
  return kWireHeaderBytes + kWireLoPrefixBytes + (p * static_cast<std::size_t>(bits) + 7) / 8;
}

std::vector<std::uint8_t> encode(const QuantizedVector& q) {
  const std::size_t p = q.levels.size();
  if (p > 0xffffffffu) throw std::invalid_argument("encode: dimension exceeds 32-bit field");
  const int s = q.spec.bits();
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(s, p));
  out.push_back('Q');
  out.push_back('V');
  out.push_back(kWireVersion);
  out.push_back(static_cast<std::uint8_t>(s));
  put_le(out, static_cast<std::uint32_t>(p));
  put_le(out, q.spec.eta());
  put_le(out, q.spec.lo());

  const std::size_t payload_start = out.size();
  out.resize(encoded_size(s, p), 0);
  std::size_t bit = 0;
  for (std::uint16_t level : q.levels) {
    if (level > q.spec.max_level()) throw std::invalid_argument("encode: level out of range");
    for (int k = 0; k < s; ++k, ++bit) {
      if ((level >> k) & 1u) out[payload_start + bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
  return out;
}

QuantizedVector decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kWireHeaderBytes + kWireLoPrefixBytes) throw DecodeError("decode: truncated header");
  if (bytes[0] != 'Q' || bytes[1] != 'V') throw DecodeError("decode: bad magic");
  if (bytes[2] != kWireVersion) throw DecodeError("decode: unsupported version " + std::to_string(bytes[2]));
  const int s = bytes[3];
  if (s < 1 || s > kMaxQuantizerBits) throw DecodeError("decode: bits out of range");
  const auto p = static_cast<std::size_t>(get_le(bytes, 4, 4));
  const double eta = std::bit_cast<double>(get_le(bytes, 8, 8));
  const double lo = std::bit_cast<double>(get_le(bytes, 16, 8));
  const std::size_t expected = encoded_size(s, p);
  if (bytes.size() < expected) throw DecodeError("decode: truncated payload");
  if (bytes.size() > expected) throw DecodeError("decode: trailing bytes after payload");

  QuantizedVector q{QuantizerSpec(eta, s, lo), std::vector<std::uint16_t>(p, 0), 0};
  const std::size_t payload_start = kWireHeaderBytes + kWireLoPrefixBytes;
  std::size_t bit = 0;
  for (std::size_t c = 0; c < p; ++c) {
    std::uint32_t level = 0;
    for (int k = 0; k < s; ++k, ++bit) {
      if ((bytes[payload_start + bit / 8] >> (bit % 8)) & 1u) level |= 1u << k;
    }
    q.levels[c] = static_cast<std::uint16_t>(level);
  }
  return q;
}

std::uint64_t message_bits(const QuantizerSpec& spec, std::size_t p) {
  return static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(spec.bits());
}

std::uint64_t unquantized_message_bits(std::size_t p) { return static_cast<std::uint64_t>(p) * kMaxQuantizerBits; }

double comm_time(const std::optional<QuantizerSpec>& spec, double tc) {
  if (tc < 0.0) throw std::invalid_argument("comm_time: Tc must be >= 0");
  if (!spec) return tc;
  return tc * static_cast<double>(spec->bits()) / static_cast<double>(kMaxQuantizerBits);
}

}  // namespace quantimed
