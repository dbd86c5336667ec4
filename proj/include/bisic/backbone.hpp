#pragma once

#include <array>
#include <memory>
#include <random>

#include "bisic/attention.hpp"
#include "bisic/config.hpp"
#include "bisic/nn.hpp"

namespace bisic {

// Attention insertion point: mutual, row-wise, or identity per config.
template <typename T>
class StereoAttention : public nn::Module<T> {
 public:
  StereoAttention(const ModelConfig& cfg, int channels, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;
  const attn::MutualAttentionBlock<T>* mutual() const { return mutual_.get(); }

 private:
  std::unique_ptr<attn::MutualAttentionBlock<T>> mutual_;
  std::unique_ptr<attn::RowAttentionBlock<T>> row_;
};

// Encoder, decoder, hyper encoder and hyper decoder over [B, C, 2, H, W].
template <typename T>
class Backbone : public nn::Module<T> {
 public:
  Backbone(const ModelConfig& cfg, std::mt19937_64& rng);

  // [B, 3, 2, H, W] -> [B, N, 2, H/16, W/16]
  Var<T> encode(const Var<T>& x) const;
  // [B, N, 2, h, w] -> [B, 3, 2, 16h, 16w]; not clamped.
  Var<T> decode(const Var<T>& y) const;
  // [B, N, 2, h, w] -> [B, M, 2, h/4, w/4]
  Var<T> hyper_encode(const Var<T>& y) const;
  // [B, M, 2, h/4, w/4] -> [B, hyper_channels, 2, h, w]
  Var<T> hyper_decode(const Var<T>& z) const;

  int hyper_channels() const { return cfg_.N; }
  const StereoAttention<T>& attention(int i) const { return i == 0 ? *attn1_ : *attn2_; }
  const nn::ConvTranspose3d<T>& decoder_layer(int i) const { return *dec_[static_cast<size_t>(i)]; }

 private:
  ModelConfig cfg_;
  T slope_;
  std::array<std::unique_ptr<nn::Conv3d<T>>, 4> enc_;
  std::array<std::unique_ptr<nn::ConvTranspose3d<T>>, 4> dec_;
  std::array<std::unique_ptr<nn::Conv3d<T>>, 2> ha_;
  std::array<std::unique_ptr<nn::ConvTranspose3d<T>>, 2> hs_;
  std::unique_ptr<StereoAttention<T>> attn1_, attn2_;
};

}  // namespace bisic
