#include "bisic/backbone.hpp"

namespace bisic {

template <typename T>
StereoAttention<T>::StereoAttention(const ModelConfig& cfg, int channels, std::mt19937_64& rng) {
  const int embed = std::min(cfg.attention_embed, channels);
  switch (cfg.ablations.attention) {
    case AttentionMode::kMutual:
      mutual_ = std::make_unique<attn::MutualAttentionBlock<T>>(channels, embed, static_cast<T>(cfg.leaky_slope), rng);
      this->add_child("mutual", mutual_.get());
      break;
    case AttentionMode::kRow:
      row_ = std::make_unique<attn::RowAttentionBlock<T>>(channels, embed, rng);
      this->add_child("row", row_.get());
      break;
    case AttentionMode::kNone:
      break;
  }
}

template <typename T>
Var<T> StereoAttention<T>::operator()(const Var<T>& x) const {
  if (mutual_) return (*mutual_)(x);
  if (row_) return (*row_)(x);
  return x;
}

namespace {

nn::ConvSpec down(const ModelConfig& cfg, int in, int out) {
  nn::ConvSpec s{in, out};
  const bool flat = cfg.ablations.backbone_2d;
  s.kernel = {flat ? 1 : 3, 5, 5};
  s.stride = {1, 2, 2};
  s.pad = {flat ? 0 : 1, 2, 2};
  return s;
}

nn::ConvSpec up(const ModelConfig& cfg, int in, int out) {
  nn::ConvSpec s = down(cfg, in, out);
  s.output_pad = {0, 1, 1};
  return s;
}

void require_stereo(const Shape& s, int64_t channels, const char* what) {
  if (s.size() != 5 || s[2] != 2 || (channels > 0 && s[1] != channels)) {
    throw ShapeError(std::string(what) + ": expected [B, " + (channels > 0 ? std::to_string(channels) : "C") +
                     ", 2, H, W], got " + shape_str(s));
  }
}

}  // namespace

template <typename T>
Backbone<T>::Backbone(const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), slope_(static_cast<T>(cfg.leaky_slope)) {
  cfg.validate();
  const int N = cfg.N, M = cfg.M;
  const std::array<int, 5> enc_w{3, N, N, N, N};
  for (size_t i = 0; i < 4; ++i) {
    enc_[i] = std::make_unique<nn::Conv3d<T>>(down(cfg, enc_w[i], enc_w[i + 1]), rng);
    this->add_child("enc" + std::to_string(i), enc_[i].get());
  }
  attn1_ = std::make_unique<StereoAttention<T>>(cfg, N, rng);
  attn2_ = std::make_unique<StereoAttention<T>>(cfg, N, rng);
  this->add_child("enc_attn1", attn1_.get());
  this->add_child("enc_attn2", attn2_.get());
  const std::array<int, 5> dec_w{N, N, N, N, 3};
  for (size_t i = 0; i < 4; ++i) {
    dec_[i] = std::make_unique<nn::ConvTranspose3d<T>>(up(cfg, dec_w[i], dec_w[i + 1]), rng);
    this->add_child("dec" + std::to_string(i), dec_[i].get());
  }
  ha_[0] = std::make_unique<nn::Conv3d<T>>(down(cfg, N, M), rng);
  ha_[1] = std::make_unique<nn::Conv3d<T>>(down(cfg, M, M), rng);
  hs_[0] = std::make_unique<nn::ConvTranspose3d<T>>(up(cfg, M, M), rng);
  hs_[1] = std::make_unique<nn::ConvTranspose3d<T>>(up(cfg, M, hyper_channels()), rng);
  this->add_child("ha0", ha_[0].get());
  this->add_child("ha1", ha_[1].get());
  this->add_child("hs0", hs_[0].get());
  this->add_child("hs1", hs_[1].get());
}

template <typename T>
Var<T> Backbone<T>::encode(const Var<T>& x) const {
  require_stereo(x.shape(), 3, "encode");
  if (x.dim(3) % 16 != 0 || x.dim(4) % 16 != 0) {
    throw ShapeError("encode: image " + std::to_string(x.dim(3)) + "x" + std::to_string(x.dim(4)) +
                     " is not divisible by 16");
  }
  Var<T> h = ops::leaky_relu((*enc_[0])(x), slope_);
  h = (*attn1_)((*enc_[1])(h));
  h = ops::leaky_relu(h, slope_);
  h = ops::leaky_relu((*enc_[2])(h), slope_);
  return (*attn2_)((*enc_[3])(h));
}

template <typename T>
Var<T> Backbone<T>::decode(const Var<T>& y) const {
  require_stereo(y.shape(), cfg_.N, "decode");
  Var<T> h = y;
  for (size_t i = 0; i < 4; ++i) {
    h = (*dec_[i])(h);
    if (i < 3) h = ops::leaky_relu(h, slope_);
  }
  return h;
}

template <typename T>
Var<T> Backbone<T>::hyper_encode(const Var<T>& y) const {
  require_stereo(y.shape(), cfg_.N, "hyper_encode");
  if (y.dim(3) % 4 != 0 || y.dim(4) % 4 != 0) {
    throw ShapeError("hyper_encode: latent grid " + std::to_string(y.dim(3)) + "x" + std::to_string(y.dim(4)) +
                     " is not divisible by 4");
  }
  return (*ha_[1])(ops::leaky_relu((*ha_[0])(y), slope_));
}

template <typename T>
Var<T> Backbone<T>::hyper_decode(const Var<T>& z) const {
  require_stereo(z.shape(), cfg_.M, "hyper_decode");
  return (*hs_[1])(ops::leaky_relu((*hs_[0])(z), slope_));
}

template class StereoAttention<float>;
template class StereoAttention<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace bisic
