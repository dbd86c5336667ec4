#include "bisic/attention.hpp"

#include <cmath>

namespace bisic::attn {

using namespace ops;

template <typename T>
AttentionResult<T> efficient_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3) {
    throw ShapeError("efficient_attention expects [B, C, P] inputs");
  }
  if (q.shape() != k.shape() || v.dim(0) != q.dim(0) || v.dim(2) != q.dim(2)) {
    throw ShapeError("efficient_attention: Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) +
                     ", V " + shape_str(v.shape()));
  }
  const Var<T> sk = softmax(k, 2);
  const Var<T> sq = softmax(q, 1);
  AttentionResult<T> r;
  r.map = matmul_nt(sk, v);      // [B, Ck, Cv]
  r.out = matmul_tn(r.map, sq);  // [B, Cv, P]
  return r;
}

template <typename T>
std::pair<Var<T>, Var<T>> cross_key(const Embeddings<T>& l, const Embeddings<T>& r) {
  return {efficient_attention(r.q, r.k, l.v).out, efficient_attention(l.q, l.k, r.v).out};
}

template <typename T>
std::pair<Var<T>, Var<T>> cross_query(const Embeddings<T>& l, const Embeddings<T>& r) {
  return {efficient_attention(r.q, l.k, l.v).out, efficient_attention(l.q, r.k, r.v).out};
}

template <typename T>
Var<T> view_of(const Var<T>& x, int v) {
  if (x.ndim() != 5 || x.dim(2) != 2) throw ShapeError("expected a stereo tensor, got " + shape_str(x.shape()));
  return slice(x, 2, v, 1);
}

template <typename T>
Var<T> join_views(const Var<T>& l, const Var<T>& r) {
  return concat<T>({l, r}, 2);
}

namespace {

template <typename T>
Var<T> flatten_view(const Var<T>& x) {  // [B, C, 1, H, W] -> [B, C, H*W]
  return reshape(x, {x.dim(0), x.dim(1), x.dim(3) * x.dim(4)});
}

template <typename T>
Var<T> unflatten_view(const Var<T>& x, int64_t H, int64_t W) {
  return reshape(x, {x.dim(0), x.dim(1), 1, H, W});
}

nn::ConvSpec conv3x3(int c) {
  nn::ConvSpec s{c, c};
  s.kernel = {1, 3, 3};
  s.pad = {0, 1, 1};
  return s;
}

}  // namespace

template <typename T>
ResidualBlock<T>::ResidualBlock(int channels, T slope, std::mt19937_64& rng)
    : c1_(conv3x3(channels), rng), c2_(conv3x3(channels), rng), slope_(slope) {
  this->add_child("conv1", &c1_);
  this->add_child("conv2", &c2_);
}

template <typename T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x) const {
  return add(x, c2_(leaky_relu(c1_(x), slope_)));
}

template <typename T>
EmbeddingHead<T>::EmbeddingHead(int in, int embed, std::mt19937_64& rng)
    : q_(nn::pointwise(in, embed), rng), k_(nn::pointwise(in, embed), rng), v_(nn::pointwise(in, embed), rng) {
  this->add_child("query", &q_);
  this->add_child("key", &k_);
  this->add_child("value", &v_);
}

template <typename T>
std::pair<Embeddings<T>, Embeddings<T>> EmbeddingHead<T>::operator()(const Var<T>& x) const {
  const Var<T> q = q_(x), k = k_(x), v = v_(x);
  auto per_view = [&](int view) {
    return Embeddings<T>{flatten_view(view_of(q, view)), flatten_view(view_of(k, view)),
                         flatten_view(view_of(v, view))};
  };
  return {per_view(0), per_view(1)};
}

template <typename T>
SelfAttention<T>::SelfAttention(int channels, std::mt19937_64& rng) : head_(channels, channels, rng) {
  this->add_child("embed", &head_);
}

template <typename T>
Var<T> SelfAttention<T>::operator()(const Var<T>& x) const {
  const auto [l, r] = head_(x);
  const int64_t H = x.dim(3), W = x.dim(4);
  const Var<T> al = unflatten_view(efficient_attention(l.q, l.k, l.v).out, H, W);
  const Var<T> ar = unflatten_view(efficient_attention(r.q, r.k, r.v).out, H, W);
  return add(x, join_views(al, ar));
}

template <typename T>
MutualAttentionBlock<T>::MutualAttentionBlock(int channels, int embed, T slope, std::mt19937_64& rng)
    : channels_(channels),
      embed_(embed),
      res1_(channels, slope, rng),
      res2_(channels, slope, rng),
      emb1_(channels, embed, rng),
      emb2_(channels, embed, rng),
      self1_(embed, rng),
      self2_(embed, rng),
      combine_(nn::pointwise(2 * embed + channels, channels), rng) {
  this->add_child("residual1", &res1_);
  this->add_child("residual2", &res2_);
  this->add_child("embed1", &emb1_);
  this->add_child("embed2", &emb2_);
  this->add_child("self1", &self1_);
  this->add_child("self2", &self2_);
  this->add_child("combine", &combine_);
}

template <typename T>
Var<T> MutualAttentionBlock<T>::operator()(const Var<T>& x) const {
  if (x.ndim() != 5 || x.dim(2) != 2 || x.dim(1) != channels_) {
    throw ShapeError("mutual attention block expects [B, " + std::to_string(channels_) +
                     ", 2, H, W], got " + shape_str(x.shape()));
  }
  const int64_t H = x.dim(3), W = x.dim(4);

  const auto [l1, r1] = emb1_(res1_(x));
  const auto [phi_l, phi_r] = cross_key(l1, r1);
  const Var<T> phi = self1_(join_views(unflatten_view(phi_l, H, W), unflatten_view(phi_r, H, W)));

  const auto [l2, r2] = emb2_(res2_(x));
  const auto [psi_l, psi_r] = cross_query(l2, r2);
  const Var<T> psi = self2_(join_views(unflatten_view(psi_l, H, W), unflatten_view(psi_r, H, W)));

  last_map_shape_ = {x.dim(0), embed_, embed_};
  return combine_(concat<T>({phi, psi, x}, 1));
}

template <typename T>
RowAttentionBlock<T>::RowAttentionBlock(int channels, int embed, std::mt19937_64& rng)
    : embed_(embed),
      q_(nn::pointwise(channels, embed), rng),
      k_(nn::pointwise(channels, embed), rng),
      v_(nn::pointwise(channels, channels), rng),
      combine_(nn::pointwise(2 * channels, channels), rng) {
  this->add_child("query", &q_);
  this->add_child("key", &k_);
  this->add_child("value", &v_);
  this->add_child("combine", &combine_);
}

template <typename T>
Var<T> RowAttentionBlock<T>::operator()(const Var<T>& x) const {
  if (x.ndim() != 5 || x.dim(2) != 2) throw ShapeError("row attention expects a stereo tensor");
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(3), W = x.dim(4);
  const Var<T> q = q_(x), k = k_(x), v = v_(x);
  // [B, C', 1, H, W] -> [B*H, W, C']
  auto rows = [&](const Var<T>& t, int view) {
    const Var<T> s = reshape(view_of(t, view), {B, t.dim(1), H, W});
    return reshape(permute(s, {0, 2, 3, 1}), {B * H, W, t.dim(1)});
  };
  auto back = [&](const Var<T>& t) {
    return reshape(permute(reshape(t, {B, H, W, C}), {0, 3, 1, 2}), {B, C, 1, H, W});
  };
  const T scale = T(1) / std::sqrt(static_cast<T>(embed_));
  auto attend = [&](int to, int from) {
    const Var<T> a = softmax(mul_scalar(matmul_nt(rows(q, to), rows(k, from)), scale), 2);
    return back(matmul(a, rows(v, from)));
  };
  const Var<T> warped = join_views(attend(0, 1), attend(1, 0));
  return combine_(concat<T>({warped, x}, 1));
}

#define BISIC_INSTANTIATE_ATTN(T)                                                                 \
  template AttentionResult<T> efficient_attention(const Var<T>&, const Var<T>&, const Var<T>&);   \
  template std::pair<Var<T>, Var<T>> cross_key(const Embeddings<T>&, const Embeddings<T>&);       \
  template std::pair<Var<T>, Var<T>> cross_query(const Embeddings<T>&, const Embeddings<T>&);     \
  template Var<T> view_of(const Var<T>&, int);                                                    \
  template Var<T> join_views(const Var<T>&, const Var<T>&);                                       \
  template class ResidualBlock<T>;                                                                \
  template class EmbeddingHead<T>;                                                                \
  template class SelfAttention<T>;                                                                \
  template class MutualAttentionBlock<T>;                                                         \
  template class RowAttentionBlock<T>;

BISIC_INSTANTIATE_ATTN(float)
BISIC_INSTANTIATE_ATTN(double)

}  // namespace bisic::attn
