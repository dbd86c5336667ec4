#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bisic/coder_backend.hpp"
#include "bisic/model.hpp"

namespace bisic::codec {

// Substream order inside the container.
enum Stream { kZLeft = 0, kZRight = 1, kYLeft = 2, kYRight = 3 };
std::string stream_name(int s);

struct Header {
  CodingMode mode = CodingMode::kAR;
  uint16_t height = 0, width = 0;
  uint16_t N = 0, M = 0;
  uint8_t K = 0;
};

// "BSIC", version u8, mode u8, H u16, W u16, N u16, M u16, K u8, then the
// four substreams as u32 length + bytes. Integers are little-endian.
inline constexpr size_t kHeaderBytes = 15;
inline constexpr uint8_t kVersion = 1;

struct Container {
  Header header;
  std::array<std::vector<uint8_t>, 4> streams;
};

std::vector<uint8_t> pack(const Container& c);
Container unpack(std::span<const uint8_t> bytes, const std::string& what = "bitstream");

struct SubstreamStats {
  double estimate_bits = 0;   // sum of -log2 of the quantized probabilities, check word included
  uint64_t measured_bits = 0;
  int64_t symbols = 0;
  int64_t escapes = 0;
};

struct CodecStats {
  std::array<SubstreamStats, 4> streams;
  EvalCounter evals;
  int64_t clamped = 0;  // values outside int16, coded clamped
  double seconds = 0;
};

struct Options {
  std::shared_ptr<const rc::Backend> backend;  // reference coder when null
};

struct Encoded {
  std::vector<uint8_t> bytes;
  CodecStats stats;
  Tensor<float> y_hat, z_hat;
};

struct Decoded {
  Header header;
  Tensor<float> x_hat;  // [1, 3, 2, H, W], unclamped decoder output
  Tensor<float> y_hat, z_hat;
  CodecStats stats;
};

// x: [1, 3, 2, H, W] with H, W multiples of 64. Codes with the model's mode.
Encoded compress(const Model<float>& model, const Tensor<float>& x, const Options& opt = {});
Decoded decompress(const Model<float>& model, std::span<const uint8_t> bytes, const Options& opt = {});

// decode(round(encode(x))), the target of a lossless round trip.
Tensor<float> quantized_reconstruction(const Model<float>& model, const Tensor<float>& x);

// FNV-1a over the int16 little-endian bytes of each coded value.
uint32_t fnv1a_update(uint32_t h, int16_t v);
inline constexpr uint32_t kFnvOffset = 2166136261u;

}  // namespace bisic::codec
