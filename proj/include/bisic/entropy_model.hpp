#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "bisic/attention.hpp"
#include "bisic/config.hpp"
#include "bisic/nn.hpp"

namespace bisic {

template <typename T>
struct GaussianParams {
  Var<T> mu;
  Var<T> sigma;
};

// Smallest probability used for rates (2^-24).
inline constexpr double kLikelihoodBound = 1.0 / 16777216.0;

// Unit-bin Gaussian probability of y under (mu, sigma).
template <typename T>
Var<T> likelihood(const Var<T>& y, const GaussianParams<T>& params);

// Sum of -log2 max(p, 2^-24), as a scalar.
template <typename T>
Var<T> rate_bits(const Var<T>& p);

// Tap mask for the (3,5,5) spatial-context kernel: taps at raster positions
// strictly before the centre. With cross_view, all three view taps are live;
// otherwise only the same-view (centre) tap.
std::vector<uint8_t> causal_tap_mask(bool cross_view);

// 1 at anchor positions ((row + col) even, same in both views), 0 elsewhere,
// shaped [1, 1, 2, h, w].
template <typename T>
Tensor<T> anchor_mask(int64_t h, int64_t w);
bool is_anchor(int64_t row, int64_t col);

// Splits [B, C, 2, h, w] into anchor / non-anchor values (row-major order
// over (b, c, v, row, col) restricted to each parity) and merges them back.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> checkerboard_split(const Tensor<T>& y);
template <typename T>
Tensor<T> checkerboard_merge(const Shape& shape, const std::vector<T>& anchor, const std::vector<T>& nonanchor);

// Per-channel learned monotone CDF for the hyper-latent.
template <typename T>
class FactorizedPrior : public nn::Module<T> {
 public:
  FactorizedPrior(int channels, std::mt19937_64& rng);
  // z: [B, C, 2, h, w] -> per-element probability of its unit bin.
  Var<T> likelihood(const Var<T>& z) const;
  // Cumulative logits at values x: [C, 1, L] -> [C, 1, L].
  Var<T> logits_cumulative(const Var<T>& x) const;
  // Probabilities of the integers lo..hi for every channel: [C][hi-lo+1].
  std::vector<std::vector<double>> pmf_table(int lo, int hi) const;
  int channels() const { return channels_; }

 private:
  int channels_;
  std::vector<Var<T>> matrices_, biases_, factors_;
};

// Counts entropy-parameter evaluations per (slice, view).
struct EvalCounter {
  std::vector<std::array<int64_t, 2>> per_slice;
  void reset(int slices) { per_slice.assign(static_cast<size_t>(slices), {0, 0}); }
  void add(int k, int64_t n = 1) {
    if (per_slice.empty()) return;
    per_slice[static_cast<size_t>(k)][0] += n;
    per_slice[static_cast<size_t>(k)][1] += n;
  }
};

// Cross-dimensional entropy model: hyperprior + channel context + masked
// spatial context across views, or the stereo checkerboard variant.
template <typename T>
class EntropyModel : public nn::Module<T> {
 public:
  EntropyModel(const ModelConfig& cfg, int hyper_channels, std::mt19937_64& rng);
  ~EntropyModel() override;

  // Parameters for every element of y_hat [B, N, 2, h, w] at once (training
  // and rate estimation). Causal by construction.
  GaussianParams<T> forward(const Var<T>& y_hat, const Var<T>& zt) const;

  int slices() const { return K_; }
  int slice_channels() const { return S_; }
  bool uses_channel_context() const { return K_ > 1; }
  CodingMode mode() const { return cfg_.mode; }

  // Channel context for slice k from slices < k ([B, S*k, 2, h, w]); all
  // zeros for k = 0. Undefined when channel context is off.
  Var<T> channel_context(int k, const Var<T>& previous, int64_t B, int64_t h, int64_t w) const;
  // Masked spatial context of slice k over the full grid.
  Var<T> spatial_context(int k, const Var<T>& slice) const;
  // Spatial context at (row, col) only, from a 5x5 window centred there.
  Var<T> spatial_context_at(int k, const Var<T>& window) const;
  GaussianParams<T> aggregate(int k, const Var<T>& zt, const Var<T>& theta, const Var<T>& ups) const;

  GaussianParams<T> anchor_params(int k, const Var<T>& zt, const Var<T>& theta) const;
  // anchors: slice k with non-anchor entries zeroed.
  Var<T> anchor_context(int k, const Var<T>& anchors) const;
  GaussianParams<T> nonanchor_params(int k, const Var<T>& zt, const Var<T>& theta, const Var<T>& ups) const;

  const attn::MutualAttentionBlock<T>* channel_attention(int k) const;

 private:
  struct Slice;
  GaussianParams<T> split_params(const Var<T>& raw) const;

  ModelConfig cfg_;
  int K_, S_, hyper_channels_;
  T slope_;
  std::vector<std::unique_ptr<Slice>> slices_;
};

}  // namespace bisic
