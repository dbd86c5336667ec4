// Implements the native coder ABI on top of the reference coder so the
// dynamic-loading path can be exercised without the accelerated library.
#include <new>

#include "bisic/native_coder.h"
#include "bisic/range_coder.hpp"

using namespace bisic;

struct bisic_native_decoder {
  rc::Decoder dec;
};

namespace {
int status_of(const CoderError& e) {
  const std::string m = e.what();
  if (m.find("past the end") != std::string::npos) return BISIC_NATIVE_TRUNCATED;
  if (m.find("stopped at byte") != std::string::npos) return BISIC_NATIVE_TRAILING_BYTES;
  if (m.find("corrupt") != std::string::npos) return BISIC_NATIVE_CORRUPT;
  return BISIC_NATIVE_INVALID_CDF;
}
}  // namespace

extern "C" {

uint32_t bisic_native_abi_version(void) { return BISIC_NATIVE_ABI_VERSION; }

size_t bisic_native_max_encoded_len(size_t count) { return 4 * count + 8; }

int bisic_native_rc_encode(const int32_t* symbols, size_t count, const uint32_t* cdf_table,
                           const uint64_t* cdf_offsets, const uint32_t* cdf_sizes, uint8_t* out,
                           size_t out_capacity, size_t* out_len) {
  if ((count && (!symbols || !cdf_table || !cdf_offsets || !cdf_sizes)) || !out || !out_len) {
    return BISIC_NATIVE_BAD_ARGUMENT;
  }
  try {
    rc::Encoder enc;
    for (size_t i = 0; i < count; ++i) {
      std::span<const uint32_t> cdf(cdf_table + cdf_offsets[i], cdf_sizes[i]);
      rc::validate_cdf(cdf);
      if (symbols[i] < 0 || static_cast<size_t>(symbols[i]) + 1 >= cdf.size()) return BISIC_NATIVE_INVALID_SYMBOL;
      enc.encode(cdf, symbols[i]);
    }
    const auto bytes = enc.finish();
    if (bytes.size() > out_capacity) return BISIC_NATIVE_BUFFER_TOO_SMALL;
    std::copy(bytes.begin(), bytes.end(), out);
    *out_len = bytes.size();
    return BISIC_NATIVE_OK;
  } catch (const CoderError& e) {
    return status_of(e);
  }
}

int bisic_native_rc_decode(const uint8_t* bytes, size_t bytes_len, const uint32_t* cdf_table,
                           const uint64_t* cdf_offsets, const uint32_t* cdf_sizes, size_t count,
                           int32_t* symbols_out) {
  if (!bytes || (count && (!cdf_table || !cdf_offsets || !cdf_sizes || !symbols_out))) return BISIC_NATIVE_BAD_ARGUMENT;
  try {
    rc::Decoder dec(bytes, bytes_len);
    for (size_t i = 0; i < count; ++i) {
      std::span<const uint32_t> cdf(cdf_table + cdf_offsets[i], cdf_sizes[i]);
      rc::validate_cdf(cdf);
      symbols_out[i] = dec.decode(cdf);
    }
    dec.finish();
    return BISIC_NATIVE_OK;
  } catch (const CoderError& e) {
    return status_of(e);
  }
}

int bisic_native_decoder_open(const uint8_t* bytes, size_t bytes_len, bisic_native_decoder** out) {
  if (!bytes || !out) return BISIC_NATIVE_BAD_ARGUMENT;
  try {
    *out = new bisic_native_decoder{rc::Decoder(bytes, bytes_len)};
    return BISIC_NATIVE_OK;
  } catch (const CoderError& e) {
    return status_of(e);
  } catch (const std::bad_alloc&) {
    return BISIC_NATIVE_BAD_ARGUMENT;
  }
}

int bisic_native_decoder_next(bisic_native_decoder* dec, const uint32_t* cdf, uint32_t cdf_size, int32_t* symbol_out) {
  if (!dec || !cdf || !symbol_out) return BISIC_NATIVE_BAD_ARGUMENT;
  try {
    std::span<const uint32_t> c(cdf, cdf_size);
    rc::validate_cdf(c);
    *symbol_out = dec->dec.decode(c);
    return BISIC_NATIVE_OK;
  } catch (const CoderError& e) {
    return status_of(e);
  }
}

int bisic_native_decoder_close(bisic_native_decoder* dec) {
  if (!dec) return BISIC_NATIVE_BAD_ARGUMENT;
  int status = BISIC_NATIVE_OK;
  try {
    dec->dec.finish();
  } catch (const CoderError& e) {
    status = status_of(e);
  }
  delete dec;
  return status;
}

int bisic_native_quantize_cdf(double mu, double sigma, uint32_t* cdf_out, size_t cdf_capacity) {
  if (!cdf_out || cdf_capacity < static_cast<size_t>(rc::kAlphabet + 1) || !(sigma > 0)) return BISIC_NATIVE_BAD_ARGUMENT;
  const auto c = rc::gaussian_cdf(mu, sigma);
  std::copy(c.begin(), c.end(), cdf_out);
  return BISIC_NATIVE_OK;
}

}  // extern "C"
