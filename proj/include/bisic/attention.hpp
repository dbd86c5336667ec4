#pragma once

#include <memory>
#include <random>
#include <utility>

#include "bisic/nn.hpp"

namespace bisic::attn {

// Q, K: [B, Ck, P]; V: [B, Cv, P]. Softmax over positions for K and over
// channels for Q; the attention map is [B, Ck, Cv] whatever P is.
template <typename T>
struct AttentionResult {
  Var<T> out;  // [B, Cv, P]
  Var<T> map;  // [B, Ck, Cv]
};

template <typename T>
AttentionResult<T> efficient_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v);

template <typename T>
struct Embeddings {
  Var<T> q, k, v;  // [B, C, P]
};

// (Phi_{r->l}, Phi_{l->r}): the other view's key/query attend to this view's values.
template <typename T>
std::pair<Var<T>, Var<T>> cross_key(const Embeddings<T>& l, const Embeddings<T>& r);
// (Psi_{r->l}, Psi_{l->r}): a view's own key/value map queried by the other view.
template <typename T>
std::pair<Var<T>, Var<T>> cross_query(const Embeddings<T>& l, const Embeddings<T>& r);

// View helpers for [B, C, 2, H, W] tensors.
template <typename T>
Var<T> view_of(const Var<T>& x, int v);  // -> [B, C, 1, H, W]
template <typename T>
Var<T> join_views(const Var<T>& l, const Var<T>& r);  // two [B, C, 1, H, W] -> [B, C, 2, H, W]

// Two 3x3 convs with shared weights across views plus a skip connection.
template <typename T>
class ResidualBlock : public nn::Module<T> {
 public:
  ResidualBlock(int channels, T slope, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;

 private:
  nn::Conv3d<T> c1_, c2_;
  T slope_;
};

// Pointwise Q/K/V projections.
template <typename T>
class EmbeddingHead : public nn::Module<T> {
 public:
  EmbeddingHead(int in, int embed, std::mt19937_64& rng);
  // Returns per-view embeddings flattened to [B, C, H*W].
  std::pair<Embeddings<T>, Embeddings<T>> operator()(const Var<T>& x) const;

 private:
  nn::Conv3d<T> q_, k_, v_;
};

// Efficient self-attention with a skip: x + EA(Q(x), K(x), V(x)), per view.
template <typename T>
class SelfAttention : public nn::Module<T> {
 public:
  SelfAttention(int channels, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;

 private:
  EmbeddingHead<T> head_;
};

// Bidirectional mutual attention over a [B, C, 2, H, W] stereo feature.
template <typename T>
class MutualAttentionBlock : public nn::Module<T> {
 public:
  MutualAttentionBlock(int channels, int embed, T slope, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;
  int embed() const { return embed_; }
  // Shape of the most recent cross-stage attention map ([B, C, C]).
  const Shape& last_map_shape() const { return last_map_shape_; }

 private:
  int channels_, embed_;
  ResidualBlock<T> res1_, res2_;
  EmbeddingHead<T> emb1_, emb2_;
  SelfAttention<T> self1_, self2_;
  nn::Conv3d<T> combine_;
  mutable Shape last_map_shape_;
};

// Row-wise parallax attention between views: each position attends to every
// position on the same row of the other view.
template <typename T>
class RowAttentionBlock : public nn::Module<T> {
 public:
  RowAttentionBlock(int channels, int embed, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;

 private:
  int embed_;
  nn::Conv3d<T> q_, k_, v_, combine_;
};

}  // namespace bisic::attn
