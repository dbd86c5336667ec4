#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bisic/errors.hpp"

namespace bisic::rc {

inline constexpr int kPrecision = 16;
inline constexpr uint32_t kTotal = 1u << kPrecision;
inline constexpr int kMinValue = -128;
inline constexpr int kMaxValue = 127;
// 256 in-range values followed by the escape symbol.
inline constexpr int kAlphabet = kMaxValue - kMinValue + 2;
inline constexpr int kEscape = kAlphabet - 1;

// Cumulative counts: cdf[0] = 0, cdf[n] = 2^16, every symbol >= 1 count.
using Cdf = std::vector<uint32_t>;

// Throws CoderError unless `cdf` satisfies the invariants above.
void validate_cdf(std::span<const uint32_t> cdf);

// Quantizes a probability vector (sums to ~1) to counts totalling 2^16. Each
// symbol gets 1 + floor(p * (2^16 - n)); the leftover goes to the most
// probable symbol (lowest index on ties).
Cdf quantize_pmf(std::span<const double> pmf);

// Unit-bin Gaussian masses over [-128, 127] plus the escape mass (tails).
std::vector<double> gaussian_pmf(double mu, double sigma);
inline Cdf gaussian_cdf(double mu, double sigma) { return quantize_pmf(gaussian_pmf(mu, sigma)); }

// Pmf over [-128, 127] (escape gets the missing mass) -> quantized table.
Cdf table_cdf(std::span<const double> in_range_pmf);

// 256 equiprobable byte symbols.
std::span<const uint32_t> uniform_byte_cdf();

// -log2 of the quantized probability of `symbol`.
double symbol_bits(std::span<const uint32_t> cdf, int symbol);

// Carry-less 32-bit range coder (Subbotin) with 16-bit frequencies:
// normalization emits the top byte while the top 8 bits of low and
// low + range agree, or while range < 2^16 (range is then cut to the
// distance to the next 2^16 boundary). finish() flushes 4 bytes of low.
class Encoder {
 public:
  void encode(std::span<const uint32_t> cdf, int symbol);
  std::vector<uint8_t> finish();

 private:
  void normalize();
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  std::vector<uint8_t> out_;
};

class Decoder {
 public:
  Decoder(const uint8_t* data, size_t size);
  int decode(std::span<const uint32_t> cdf);
  // Throws CoderError unless every byte of the stream was consumed.
  void finish() const;

 private:
  uint8_t next();
  void normalize();
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  uint32_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
};

// Batch helpers: symbols[i] is coded with cdfs[i].
std::vector<uint8_t> encode_all(std::span<const int> symbols, std::span<const Cdf> cdfs);
std::vector<int> decode_all(std::span<const uint8_t> bytes, std::span<const Cdf> cdfs);

}  // namespace bisic::rc
