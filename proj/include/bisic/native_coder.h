/* Flat C interface of an optional accelerated range coder. A library
 * implementing it must produce bytes identical to the reference coder.
 *
 * Buffers are owned by the caller. Lengths go in as capacities and come back
 * through the *_len out-parameters. CDF tables are packed back to back in
 * `cdf_table`; symbol i uses the `cdf_sizes[i]` entries starting at
 * `cdf_offsets[i]` (so an alphabet of n symbols has n + 1 entries). */
#ifndef BISIC_NATIVE_CODER_H
#define BISIC_NATIVE_CODER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define BISIC_NATIVE_ABI_VERSION 1u

enum bisic_native_status {
  BISIC_NATIVE_OK = 0,
  BISIC_NATIVE_INVALID_CDF = 1,
  BISIC_NATIVE_INVALID_SYMBOL = 2,
  BISIC_NATIVE_TRUNCATED = 3,
  BISIC_NATIVE_CORRUPT = 4,
  BISIC_NATIVE_BUFFER_TOO_SMALL = 5,
  BISIC_NATIVE_BAD_ARGUMENT = 6,
  BISIC_NATIVE_TRAILING_BYTES = 7
};

uint32_t bisic_native_abi_version(void);

/* Worst-case encoded size for `count` symbols. */
size_t bisic_native_max_encoded_len(size_t count);

int bisic_native_rc_encode(const int32_t* symbols, size_t count, const uint32_t* cdf_table,
                           const uint64_t* cdf_offsets, const uint32_t* cdf_sizes, uint8_t* out,
                           size_t out_capacity, size_t* out_len);

int bisic_native_rc_decode(const uint8_t* bytes, size_t bytes_len, const uint32_t* cdf_table,
                           const uint64_t* cdf_offsets, const uint32_t* cdf_sizes, size_t count,
                           int32_t* symbols_out);

/* Incremental decoding for streams whose tables depend on earlier symbols. */
typedef struct bisic_native_decoder bisic_native_decoder;
int bisic_native_decoder_open(const uint8_t* bytes, size_t bytes_len, bisic_native_decoder** out);
int bisic_native_decoder_next(bisic_native_decoder* dec, const uint32_t* cdf, uint32_t cdf_size,
                              int32_t* symbol_out);
/* Reports BISIC_NATIVE_TRAILING_BYTES if the stream was not fully consumed;
 * always releases the decoder. */
int bisic_native_decoder_close(bisic_native_decoder* dec);

/* Quantized table of a unit-bin Gaussian over [-128, 127] plus escape:
 * writes 258 entries. */
int bisic_native_quantize_cdf(double mu, double sigma, uint32_t* cdf_out, size_t cdf_capacity);

#ifdef __cplusplus
}
#endif

#endif
