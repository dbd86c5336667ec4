#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bisic/codec.hpp"
#include "bisic/model.hpp"

namespace bisic::selftest {

// Random-init AR model: at `trials` random (slice, position, view) targets,
// redraws every latent entry that is not yet decoded when the target is coded
// and counts targets whose (mu, sigma) change in any bit.
int64_t ar_causality_violations(const Model<float>& model, const Tensor<float>& x, int trials, uint64_t seed);

// CKBD model: redraws the non-anchors of a random slice (and all later
// slices) and counts trials in which any anchor (mu, sigma) of that slice
// changes in any bit.
int64_t ckbd_causality_violations(const Model<float>& model, const Tensor<float>& x, int trials, uint64_t seed);

struct RoundTrip {
  double max_diff = 0;      // decoded image vs decode(round(encode(x)))
  bool latents_equal = false;
  codec::CodecStats stats;  // encoder side
  size_t bytes = 0;
};
RoundTrip round_trip(const Model<float>& model, const Tensor<float>& x, const codec::Options& opt = {});

// Worst relative error between analytic and central-difference gradients.
double mutual_attention_gradcheck(uint64_t seed);
double masked_conv_gradcheck(uint64_t seed);
double aggregate_likelihood_gradcheck(CodingMode mode, uint64_t seed);

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

// Causality, round-trip and gradient suites on random-init models. `quick`
// uses fewer trials and pairs.
std::vector<Check> run(bool quick, uint64_t seed);
std::string format_table(const std::vector<Check>& checks);

}  // namespace bisic::selftest
