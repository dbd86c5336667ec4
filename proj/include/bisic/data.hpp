#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bisic/tensor.hpp"

namespace bisic {

// Left/right images, each [3, H, W] with values in [0, 1].
struct StereoPair {
  Tensor<float> left;
  Tensor<float> right;
  std::string source;
  std::optional<float> disparity;

  int64_t height() const { return left.dim(1); }
  int64_t width() const { return left.dim(2); }
};

struct SyntheticSpec {
  uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int disparity = 8;
  double noise_level = 0.02;
  double occlusion_fraction = 0.05;

  void validate() const;
};

// Uniform double in [0, 1) built from the top 53 bits of one draw, so streams
// are identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

StereoPair generate_synthetic_pair(const SyntheticSpec& spec);

enum class CropRule { kDivisible64, kCityscapes };
CropRule parse_crop_rule(const std::string& s);

StereoPair preprocess(const StereoPair& pair, CropRule rule);

// Reads two 8-bit RGB images of equal size.
StereoPair load_pair(const std::string& path_left, const std::string& path_right);
// [3, H, W] in [0, 1] -> 8-bit RGB PNG, written atomically.
void save_image(const std::string& path, const Tensor<float>& image);
std::vector<uint8_t> encode_png(const Tensor<float>& image);

// Same-position crop of both views; y0/x0 and size must fit.
StereoPair crop(const StereoPair& pair, int64_t y0, int64_t x0, int64_t h, int64_t w);
// Uniformly placed crop with offsets on multiples of `align`.
StereoPair random_crop(const StereoPair& pair, int64_t size, std::mt19937_64& rng, int64_t align = 1);

// Stacks pairs into [B, 3, 2, H, W] (view axis in the middle).
Tensor<float> to_batch(const std::vector<StereoPair>& pairs);
// Splits item `b` of a [B, 3, 2, H, W] tensor back into a pair.
StereoPair from_batch(const Tensor<float>& batch, int64_t b);

}  // namespace bisic
