#include "bisic/entropy_model.hpp"

#include <cmath>

namespace bisic {

using namespace ops;

template <typename T>
Var<T> likelihood(const Var<T>& y, const GaussianParams<T>& params) {
  return gaussian_likelihood(y, params.mu, params.sigma);
}

template <typename T>
Var<T> rate_bits(const Var<T>& p) {
  const Var<T> nats = neg(sum(log(lower_bound(p, static_cast<T>(kLikelihoodBound)))));
  return mul_scalar(nats, static_cast<T>(1.0 / std::log(2.0)));
}

std::vector<uint8_t> causal_tap_mask(bool cross_view) {
  std::vector<uint8_t> m(75, 0);
  for (int kd = 0; kd < 3; ++kd) {
    if (!cross_view && kd != 1) continue;
    for (int kh = 0; kh < 5; ++kh) {
      for (int kw = 0; kw < 5; ++kw) {
        m[static_cast<size_t>((kd * 5 + kh) * 5 + kw)] = (kh < 2 || (kh == 2 && kw < 2)) ? 1 : 0;
      }
    }
  }
  return m;
}

bool is_anchor(int64_t row, int64_t col) { return (row + col) % 2 == 0; }

template <typename T>
Tensor<T> anchor_mask(int64_t h, int64_t w) {
  Tensor<T> m(Shape{1, 1, 2, h, w});
  for (int64_t v = 0; v < 2; ++v)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) m.at(0, 0, v, i, j) = is_anchor(i, j) ? T(1) : T(0);
  return m;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> checkerboard_split(const Tensor<T>& y) {
  if (y.ndim() != 5 || y.dim(2) != 2) throw ShapeError("checkerboard_split expects [B, C, 2, h, w]");
  const int64_t h = y.dim(3), w = y.dim(4);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (int64_t i = 0; i < y.numel(); ++i) {
    const int64_t col = i % w, row = (i / w) % h;
    (is_anchor(row, col) ? out.first : out.second).push_back(y[i]);
  }
  return out;
}

template <typename T>
Tensor<T> checkerboard_merge(const Shape& shape, const std::vector<T>& anchor, const std::vector<T>& nonanchor) {
  Tensor<T> y(shape);
  const int64_t h = shape[3], w = shape[4];
  size_t a = 0, n = 0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    const int64_t col = i % w, row = (i / w) % h;
    if (is_anchor(row, col)) {
      if (a >= anchor.size()) throw ShapeError("checkerboard_merge: too few anchor values");
      y[i] = anchor[a++];
    } else {
      if (n >= nonanchor.size()) throw ShapeError("checkerboard_merge: too few non-anchor values");
      y[i] = nonanchor[n++];
    }
  }
  if (a != anchor.size() || n != nonanchor.size()) throw ShapeError("checkerboard_merge: leftover values");
  return y;
}

// ------------------------------------------------------------ factorized prior

namespace {
constexpr std::array<int, 5> kPriorFilters{1, 3, 3, 3, 1};
constexpr double kPriorInitScale = 10.0;
}  // namespace

template <typename T>
FactorizedPrior<T>::FactorizedPrior(int channels, std::mt19937_64& rng) : channels_(channels) {
  const double scale = std::pow(kPriorInitScale, 1.0 / (kPriorFilters.size() - 1));
  for (size_t i = 0; i + 1 < kPriorFilters.size(); ++i) {
    const int fin = kPriorFilters[i], fout = kPriorFilters[i + 1];
    const double init = std::log(std::expm1(1.0 / scale / fout));
    matrices_.push_back(this->add_param("matrix" + std::to_string(i), Tensor<T>(Shape{channels, fout, fin}, static_cast<T>(init))));
    Tensor<T> b(Shape{channels, fout, 1});
    for (auto& v : b.values()) v = static_cast<T>(static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5);
    biases_.push_back(this->add_param("bias" + std::to_string(i), std::move(b)));
    if (i + 2 < kPriorFilters.size()) {
      factors_.push_back(this->add_param("factor" + std::to_string(i), Tensor<T>(Shape{channels, fout, 1})));
    }
  }
}

template <typename T>
Var<T> FactorizedPrior<T>::logits_cumulative(const Var<T>& x) const {
  Var<T> h = x;
  for (size_t i = 0; i < matrices_.size(); ++i) {
    h = add(matmul(softplus(matrices_[i]), h), biases_[i]);
    if (i < factors_.size()) h = add(h, mul(tanh(factors_[i]), tanh(h)));
  }
  return h;
}

namespace {

// |sigmoid(s*upper) - sigmoid(s*lower)| with s = -sign(lower + upper), which
// keeps the subtraction in the accurate tail of the sigmoid.
template <typename T>
Var<T> bin_probability(const Var<T>& lower, const Var<T>& upper) {
  Tensor<T> sign(lower.shape());
  for (int64_t i = 0; i < sign.numel(); ++i) {
    const T s = lower.value()[i] + upper.value()[i];
    sign[i] = s > 0 ? T(-1) : (s < 0 ? T(1) : T(0));
  }
  const Var<T> s = Var<T>::constant(std::move(sign));
  return abs(sub(sigmoid(mul(s, upper)), sigmoid(mul(s, lower))));
}

}  // namespace

template <typename T>
Var<T> FactorizedPrior<T>::likelihood(const Var<T>& z) const {
  if (z.ndim() != 5 || z.dim(1) != channels_) {
    throw ShapeError("factorized prior expects [B, " + std::to_string(channels_) + ", 2, h, w], got " +
                     shape_str(z.shape()));
  }
  const Shape perm_shape{z.dim(1), z.dim(0), z.dim(2), z.dim(3), z.dim(4)};
  const Var<T> v = reshape(permute(z, {1, 0, 2, 3, 4}), {channels_, 1, z.numel() / channels_});
  const Var<T> lower = logits_cumulative(add_scalar(v, T(-0.5)));
  const Var<T> upper = logits_cumulative(add_scalar(v, T(0.5)));
  const Var<T> p = bin_probability(lower, upper);
  return permute(reshape(p, perm_shape), {1, 0, 2, 3, 4});
}

template <typename T>
std::vector<std::vector<double>> FactorizedPrior<T>::pmf_table(int lo, int hi) const {
  NoGradGuard ng;
  const int n = hi - lo + 1;
  Tensor<T> x(Shape{channels_, 1, n});
  for (int c = 0; c < channels_; ++c)
    for (int i = 0; i < n; ++i) x[c * n + i] = static_cast<T>(lo + i);
  const Var<T> xv = Var<T>::constant(std::move(x));
  const Var<T> p =
      bin_probability(logits_cumulative(add_scalar(xv, T(-0.5))), logits_cumulative(add_scalar(xv, T(0.5))));
  std::vector<std::vector<double>> out(static_cast<size_t>(channels_), std::vector<double>(static_cast<size_t>(n)));
  for (int c = 0; c < channels_; ++c)
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(c)][static_cast<size_t>(i)] = static_cast<double>(p.value()[c * n + i]);
  return out;
}

// --------------------------------------------------------------- entropy model

template <typename T>
struct EntropyModel<T>::Slice : public nn::Module<T> {
  std::unique_ptr<attn::MutualAttentionBlock<T>> mab;
  std::unique_ptr<nn::PointwiseStack<T>> gch;
  std::unique_ptr<nn::Conv3d<T>> gsp;
  std::unique_ptr<nn::PointwiseStack<T>> gag;
  std::unique_ptr<nn::PointwiseStack<T>> gag_ach;
  std::unique_ptr<nn::Conv3d<T>> gach;
  std::unique_ptr<nn::PointwiseStack<T>> gag_nac;

  void child(const std::string& name, nn::Module<T>* m) { this->add_child(name, m); }
};

template <typename T>
EntropyModel<T>::EntropyModel(const ModelConfig& cfg, int hyper_channels, std::mt19937_64& rng)
    : cfg_(cfg),
      K_(cfg.slices()),
      S_(cfg.slice_channels()),
      hyper_channels_(hyper_channels),
      slope_(static_cast<T>(cfg.leaky_slope)) {
  cfg.validate();
  const int ctx = cfg.context_width;
  const int cc = uses_channel_context() ? cfg.channel_context_width : 0;
  const std::vector<int> hidden{2 * ctx, 3 * ctx / 2, ctx};
  auto stack = [&](int in) {
    std::vector<int> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(2 * S_);
    return std::make_unique<nn::PointwiseStack<T>>(w, slope_, rng);
  };
  for (int k = 0; k < K_; ++k) {
    auto s = std::make_unique<Slice>();
    if (uses_channel_context() && k > 0) {
      const int in = S_ * k;
      s->mab = std::make_unique<attn::MutualAttentionBlock<T>>(in, std::min(cfg.attention_embed, in), slope_, rng);
      s->gch = std::make_unique<nn::PointwiseStack<T>>(std::vector<int>{in, cc, cc, cc, cc}, slope_, rng);
      s->child("channel_attention", s->mab.get());
      s->child("g_ch", s->gch.get());
    }
    if (cfg.mode == CodingMode::kAR) {
      nn::ConvSpec sp{S_, ctx};
      sp.kernel = {3, 5, 5};
      sp.pad = {1, 2, 2};
      sp.tap_mask = causal_tap_mask(!cfg.ablations.entropy_minnen);
      s->gsp = std::make_unique<nn::Conv3d<T>>(sp, rng);
      s->gag = stack(hyper_channels + cc + ctx);
      s->child("g_sp", s->gsp.get());
      s->child("g_ag", s->gag.get());
    } else {
      nn::ConvSpec ach{S_, ctx};
      const bool flat = cfg.ablations.vanilla_ckbd;
      ach.kernel = {flat ? 1 : 3, 5, 5};
      ach.pad = {flat ? 0 : 1, 2, 2};
      s->gag_ach = stack(hyper_channels + cc);
      s->gach = std::make_unique<nn::Conv3d<T>>(ach, rng);
      s->gag_nac = stack(hyper_channels + cc + ctx);
      s->child("g_ag_ach", s->gag_ach.get());
      s->child("g_ach", s->gach.get());
      s->child("g_ag_nac", s->gag_nac.get());
    }
    this->add_child("slice" + std::to_string(k), s.get());
    slices_.push_back(std::move(s));
  }
}

template <typename T>
EntropyModel<T>::~EntropyModel() = default;

template <typename T>
const attn::MutualAttentionBlock<T>* EntropyModel<T>::channel_attention(int k) const {
  return slices_.at(static_cast<size_t>(k))->mab.get();
}

template <typename T>
GaussianParams<T> EntropyModel<T>::split_params(const Var<T>& raw) const {
  return {slice(raw, 1, 0, S_), add_scalar(softplus(slice(raw, 1, S_, S_)), static_cast<T>(cfg_.sigma_floor))};
}

template <typename T>
Var<T> EntropyModel<T>::channel_context(int k, const Var<T>& previous, int64_t B, int64_t h, int64_t w) const {
  if (!uses_channel_context()) return Var<T>();
  if (k == 0) {
    return Var<T>::constant(Tensor<T>(Shape{B, cfg_.channel_context_width, 2, h, w}));
  }
  if (!previous.defined() || previous.dim(1) != int64_t{S_} * k) {
    throw ProtocolError("channel context for slice " + std::to_string(k) + " needs the " +
                        std::to_string(k) + " previous slices");
  }
  const Slice& s = *slices_[static_cast<size_t>(k)];
  return (*s.gch)((*s.mab)(previous));
}

template <typename T>
Var<T> EntropyModel<T>::spatial_context(int k, const Var<T>& y) const {
  const Slice& s = *slices_.at(static_cast<size_t>(k));
  if (!s.gsp) throw ProtocolError("spatial context requested from a checkerboard model");
  return (*s.gsp)(y);
}

template <typename T>
Var<T> EntropyModel<T>::spatial_context_at(int k, const Var<T>& window) const {
  const Slice& s = *slices_.at(static_cast<size_t>(k));
  if (!s.gsp) throw ProtocolError("spatial context requested from a checkerboard model");
  if (window.ndim() != 5 || window.dim(3) != 5 || window.dim(4) != 5) {
    throw ShapeError("spatial context window must be [B, S, 2, 5, 5], got " + shape_str(window.shape()));
  }
  ops::ConvGeometry g = s.gsp->geometry();
  g.pad = {1, 0, 0};
  return conv3d(window, s.gsp->weight(), s.gsp->bias(), g);
}

namespace {

template <typename T>
Var<T> join(const Var<T>& zt, const Var<T>& theta, const Var<T>& ups) {
  std::vector<Var<T>> parts{zt};
  if (theta.defined()) parts.push_back(theta);
  if (ups.defined()) parts.push_back(ups);
  return parts.size() == 1 ? zt : concat(parts, 1);
}

}  // namespace

template <typename T>
GaussianParams<T> EntropyModel<T>::aggregate(int k, const Var<T>& zt, const Var<T>& theta, const Var<T>& ups) const {
  const Slice& s = *slices_.at(static_cast<size_t>(k));
  if (!s.gag) throw ProtocolError("aggregate requested from a checkerboard model");
  if (zt.dim(3) != ups.dim(3) || zt.dim(4) != ups.dim(4) || (theta.defined() && theta.dim(3) != zt.dim(3))) {
    throw ShapeError("aggregate: hyper " + shape_str(zt.shape()) + " and context " + shape_str(ups.shape()) +
                     " are not aligned");
  }
  return split_params((*s.gag)(join(zt, theta, ups)));
}

template <typename T>
GaussianParams<T> EntropyModel<T>::anchor_params(int k, const Var<T>& zt, const Var<T>& theta) const {
  const Slice& s = *slices_.at(static_cast<size_t>(k));
  if (!s.gag_ach) throw ProtocolError("anchor parameters requested from an autoregressive model");
  return split_params((*s.gag_ach)(join(zt, theta, Var<T>())));
}

template <typename T>
Var<T> EntropyModel<T>::anchor_context(int k, const Var<T>& anchors) const {
  const Slice& s = *slices_.at(static_cast<size_t>(k));
  if (!s.gach) throw ProtocolError("anchor context requested from an autoregressive model");
  return (*s.gach)(anchors);
}

template <typename T>
GaussianParams<T> EntropyModel<T>::nonanchor_params(int k, const Var<T>& zt, const Var<T>& theta,
                                                    const Var<T>& ups) const {
  const Slice& s = *slices_.at(static_cast<size_t>(k));
  if (!s.gag_nac) throw ProtocolError("non-anchor parameters requested from an autoregressive model");
  if (!ups.defined()) throw ProtocolError("non-anchor parameters need the decoded anchor context");
  return split_params((*s.gag_nac)(join(zt, theta, ups)));
}

template <typename T>
GaussianParams<T> EntropyModel<T>::forward(const Var<T>& y_hat, const Var<T>& zt) const {
  if (y_hat.ndim() != 5 || y_hat.dim(1) != cfg_.N || y_hat.dim(2) != 2) {
    throw ShapeError("entropy model expects [B, " + std::to_string(cfg_.N) + ", 2, h, w], got " +
                     shape_str(y_hat.shape()));
  }
  const int64_t B = y_hat.dim(0), h = y_hat.dim(3), w = y_hat.dim(4);
  std::vector<Var<T>> mus, sigmas;
  Var<T> mask, inv_mask;
  if (cfg_.mode == CodingMode::kCKBD) {
    Tensor<T> m = anchor_mask<T>(h, w);
    Tensor<T> im = m;
    for (auto& v : im.values()) v = T(1) - v;
    mask = Var<T>::constant(std::move(m));
    inv_mask = Var<T>::constant(std::move(im));
  }
  for (int k = 0; k < K_; ++k) {
    const Var<T> yk = slice(y_hat, 1, int64_t{k} * S_, S_);
    const Var<T> theta = channel_context(k, k > 0 ? slice(y_hat, 1, 0, int64_t{k} * S_) : Var<T>(), B, h, w);
    GaussianParams<T> p;
    if (cfg_.mode == CodingMode::kAR) {
      p = aggregate(k, zt, theta, spatial_context(k, yk));
    } else {
      const GaussianParams<T> a = anchor_params(k, zt, theta);
      const GaussianParams<T> n = nonanchor_params(k, zt, theta, anchor_context(k, mul(yk, mask)));
      p.mu = add(mul(a.mu, mask), mul(n.mu, inv_mask));
      p.sigma = add(mul(a.sigma, mask), mul(n.sigma, inv_mask));
    }
    mus.push_back(p.mu);
    sigmas.push_back(p.sigma);
  }
  if (K_ == 1) return {mus[0], sigmas[0]};
  return {concat(mus, 1), concat(sigmas, 1)};
}

#define BISIC_INSTANTIATE_EM(T)                                                                          \
  template Var<T> likelihood(const Var<T>&, const GaussianParams<T>&);                                   \
  template Var<T> rate_bits(const Var<T>&);                                                              \
  template Tensor<T> anchor_mask(int64_t, int64_t);                                                      \
  template std::pair<std::vector<T>, std::vector<T>> checkerboard_split(const Tensor<T>&);               \
  template Tensor<T> checkerboard_merge(const Shape&, const std::vector<T>&, const std::vector<T>&);     \
  template class FactorizedPrior<T>;                                                                     \
  template class EntropyModel<T>;

BISIC_INSTANTIATE_EM(float)
BISIC_INSTANTIATE_EM(double)
template std::pair<std::vector<int32_t>, std::vector<int32_t>> checkerboard_split(const Tensor<int32_t>&);
template Tensor<int32_t> checkerboard_merge(const Shape&, const std::vector<int32_t>&, const std::vector<int32_t>&);

}  // namespace bisic
