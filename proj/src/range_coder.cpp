#include "bisic/range_coder.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace bisic::rc {

namespace {
constexpr uint32_t kTop = 1u << 24;
constexpr uint32_t kBot = 1u << 16;

// Skip bins whose nearest edge lies further than this many sigmas from mu.
constexpr double kTailSigmas = 10.0;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
}  // namespace

void validate_cdf(std::span<const uint32_t> cdf) {
  if (cdf.size() < 2) throw CoderError("cdf needs at least one symbol");
  if (cdf.front() != 0) throw CoderError("cdf must start at 0");
  if (cdf.back() != kTotal) throw CoderError("cdf must end at " + std::to_string(kTotal) + ", got " + std::to_string(cdf.back()));
  for (size_t i = 1; i < cdf.size(); ++i) {
    if (cdf[i] <= cdf[i - 1]) throw CoderError("cdf is not strictly increasing at symbol " + std::to_string(i - 1));
  }
}

Cdf quantize_pmf(std::span<const double> pmf) {
  const size_t n = pmf.size();
  if (n < 1 || n >= kTotal) throw CoderError("alphabet size " + std::to_string(n) + " out of range");
  const double spread = static_cast<double>(kTotal - n);
  std::vector<int64_t> freq(n);
  int64_t used = 0;
  size_t best = 0;
  for (size_t i = 0; i < n; ++i) {
    const double p = std::isfinite(pmf[i]) ? std::clamp(pmf[i], 0.0, 1.0) : 0.0;
    freq[i] = 1 + static_cast<int64_t>(std::floor(p * spread));
    used += freq[i];
    if (p > std::clamp(pmf[best], 0.0, 1.0)) best = i;
  }
  freq[best] += static_cast<int64_t>(kTotal) - used;
  if (freq[best] < 1) {
    // Only reachable when the input sums well above 1; spread the excess
    // over the largest bins.
    int64_t excess = 1 - freq[best];
    freq[best] = 1;
    for (size_t i = 0; i < n && excess > 0; ++i) {
      const int64_t take = std::min(excess, freq[i] - 1);
      freq[i] -= take;
      excess -= take;
    }
  }
  Cdf cdf(n + 1, 0);
  for (size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + static_cast<uint32_t>(freq[i]);
  return cdf;
}

std::vector<double> gaussian_pmf(double mu, double sigma) {
  std::vector<double> p(kAlphabet, 0.0);
  double total = 0;
  for (int v = kMinValue; v <= kMaxValue; ++v) {
    // Lower-tail evaluation is accurate far from the mean.
    const double d = std::abs(v - mu);
    if (d - 0.5 > kTailSigmas * sigma) continue;
    const double m = normal_cdf((0.5 - d) / sigma) - normal_cdf((-0.5 - d) / sigma);
    p[static_cast<size_t>(v - kMinValue)] = m;
    total += m;
  }
  p[kEscape] = std::max(0.0, 1.0 - total);
  return p;
}

Cdf table_cdf(std::span<const double> in_range_pmf) {
  if (in_range_pmf.size() != kAlphabet - 1) throw CoderError("table pmf must cover [-128, 127]");
  std::vector<double> p(in_range_pmf.begin(), in_range_pmf.end());
  double total = 0;
  for (double v : p) total += v;
  p.push_back(std::max(0.0, 1.0 - total));
  return quantize_pmf(p);
}

std::span<const uint32_t> uniform_byte_cdf() {
  static const std::array<uint32_t, 257> table = [] {
    std::array<uint32_t, 257> t{};
    for (uint32_t i = 0; i <= 256; ++i) t[i] = i * 256;
    return t;
  }();
  return table;
}

double symbol_bits(std::span<const uint32_t> cdf, int symbol) {
  const uint32_t f = cdf[static_cast<size_t>(symbol) + 1] - cdf[static_cast<size_t>(symbol)];
  return kPrecision - std::log2(static_cast<double>(f));
}

void Encoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void Encoder::encode(std::span<const uint32_t> cdf, int symbol) {
  if (symbol < 0 || static_cast<size_t>(symbol) + 1 >= cdf.size()) {
    throw CoderError("symbol " + std::to_string(symbol) + " outside alphabet of " + std::to_string(cdf.size() - 1));
  }
  const uint32_t start = cdf[static_cast<size_t>(symbol)];
  const uint32_t end = cdf[static_cast<size_t>(symbol) + 1];
  if (end <= start || cdf.back() != kTotal) throw CoderError("invalid cdf at symbol " + std::to_string(symbol));
  range_ >>= kPrecision;
  low_ += start * range_;
  range_ *= end - start;
  normalize();
}

std::vector<uint8_t> Encoder::finish() {
  for (int i = 0; i < 4; ++i) {
    out_.push_back(static_cast<uint8_t>(low_ >> 24));
    low_ <<= 8;
  }
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  return std::move(out_);
}

Decoder::Decoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
}

uint8_t Decoder::next() {
  if (pos_ >= size_) throw CoderError("range decoder read past the end of a " + std::to_string(size_) + "-byte stream");
  return data_[pos_++];
}

void Decoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
    code_ = (code_ << 8) | next();
    low_ <<= 8;
    range_ <<= 8;
  }
}

int Decoder::decode(std::span<const uint32_t> cdf) {
  if (cdf.size() < 2 || cdf.back() != kTotal) throw CoderError("invalid cdf passed to the decoder");
  range_ >>= kPrecision;
  const uint32_t value = (code_ - low_) / range_;
  if (value >= kTotal) throw CoderError("corrupt range-coded stream at byte " + std::to_string(pos_));
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), value);
  const int symbol = static_cast<int>(it - cdf.begin()) - 1;
  const uint32_t start = cdf[static_cast<size_t>(symbol)];
  const uint32_t end = cdf[static_cast<size_t>(symbol) + 1];
  if (end <= start) throw CoderError("invalid cdf at symbol " + std::to_string(symbol));
  low_ += start * range_;
  range_ *= end - start;
  normalize();
  return symbol;
}

void Decoder::finish() const {
  if (pos_ != size_) {
    throw CoderError("range decoder stopped at byte " + std::to_string(pos_) + " of " + std::to_string(size_));
  }
}

std::vector<uint8_t> encode_all(std::span<const int> symbols, std::span<const Cdf> cdfs) {
  if (symbols.size() != cdfs.size()) throw CoderError("symbol and cdf counts differ");
  Encoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode(cdfs[i], symbols[i]);
  return enc.finish();
}

std::vector<int> decode_all(std::span<const uint8_t> bytes, std::span<const Cdf> cdfs) {
  Decoder dec(bytes.data(), bytes.size());
  std::vector<int> out;
  out.reserve(cdfs.size());
  for (const auto& c : cdfs) out.push_back(dec.decode(c));
  dec.finish();
  return out;
}

}  // namespace bisic::rc
