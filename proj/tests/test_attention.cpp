#include <cmath>
#include <random>

#include "bisic/attention.hpp"
#include "doctest.h"
#include "bisic/gradcheck.hpp"

using namespace bisic;
using bisic::testing::gradcheck;
using bisic::testing::gradcheck_params;
using bisic::testing::random_tensor;
using V = Var<double>;

namespace {

// Literal (sigma_pos(K) V^T)^T sigma_chan(Q) for one batch item, dense loops.
Tensor<double> dense_attention(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v) {
  const int64_t B = q.dim(0), Ck = q.dim(1), P = q.dim(2), Cv = v.dim(1);
  Tensor<double> out(Shape{B, Cv, P});
  for (int64_t b = 0; b < B; ++b) {
    std::vector<double> sk(static_cast<size_t>(Ck * P)), sq(static_cast<size_t>(Ck * P));
    for (int64_t i = 0; i < Ck; ++i) {
      double z = 0;
      for (int64_t p = 0; p < P; ++p) z += std::exp(k[(b * Ck + i) * P + p]);
      for (int64_t p = 0; p < P; ++p) sk[static_cast<size_t>(i * P + p)] = std::exp(k[(b * Ck + i) * P + p]) / z;
    }
    for (int64_t p = 0; p < P; ++p) {
      double z = 0;
      for (int64_t i = 0; i < Ck; ++i) z += std::exp(q[(b * Ck + i) * P + p]);
      for (int64_t i = 0; i < Ck; ++i) sq[static_cast<size_t>(i * P + p)] = std::exp(q[(b * Ck + i) * P + p]) / z;
    }
    for (int64_t j = 0; j < Cv; ++j)
      for (int64_t p = 0; p < P; ++p) {
        double s = 0;
        for (int64_t i = 0; i < Ck; ++i) {
          double m = 0;
          for (int64_t t = 0; t < P; ++t) m += sk[static_cast<size_t>(i * P + t)] * v[(b * Cv + j) * P + t];
          s += m * sq[static_cast<size_t>(i * P + p)];
        }
        out[(b * Cv + j) * P + p] = s;
      }
  }
  return out;
}

attn::Embeddings<double> random_embeddings(std::mt19937_64& rng, int64_t C, int64_t P) {
  return {V::constant(random_tensor({1, C, P}, rng, -2, 2)), V::constant(random_tensor({1, C, P}, rng, -2, 2)),
          V::constant(random_tensor({1, C, P}, rng, -2, 2))};
}

}  // namespace

TEST_CASE("efficient attention map size does not depend on the grid") {
  std::mt19937_64 rng(1);
  for (int64_t P : {1, 4, 30, 1000}) {
    auto r = attn::efficient_attention(V::constant(random_tensor({2, 3, P}, rng)),
                                       V::constant(random_tensor({2, 3, P}, rng)),
                                       V::constant(random_tensor({2, 5, P}, rng)));
    CHECK(r.map.shape() == Shape{2, 3, 5});
    CHECK(r.out.shape() == Shape{2, 5, P});
  }
}

TEST_CASE("efficient attention closed forms") {
  std::mt19937_64 rng(2);
  // Constant V on a 2x2 grid with C=2.
  Tensor<double> v(Shape{1, 2, 4});
  for (int p = 0; p < 4; ++p) v[p] = 0.3, v[4 + p] = -1.7;
  const auto q = random_tensor({1, 2, 4}, rng), k = random_tensor({1, 2, 4}, rng);
  auto out = attn::efficient_attention(V::constant(q), V::constant(k), V::constant(v)).out.value();
  CHECK(max_abs_diff(out, dense_attention(q, k, v)) < 1e-12);
  for (int p = 0; p < 4; ++p) {
    CHECK(out[p] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(out[4 + p] == doctest::Approx(-1.7).epsilon(1e-12));
  }
  // A single position takes all of the normalized weight.
  const auto v1 = random_tensor({1, 3, 1}, rng);
  out = attn::efficient_attention(V::constant(random_tensor({1, 2, 1}, rng)), V::constant(random_tensor({1, 2, 1}, rng)),
                                  V::constant(v1))
            .out.value();
  CHECK(max_abs_diff(out, v1) < 1e-12);
}

TEST_CASE("cross_key matches the dense oracle") {
  std::mt19937_64 rng(3);
  const auto l = random_embeddings(rng, 2, 4), r = random_embeddings(rng, 2, 4);
  const auto [phi_rl, phi_lr] = attn::cross_key(l, r);
  CHECK(max_abs_diff(phi_rl.value(), dense_attention(r.q.value(), r.k.value(), l.v.value())) < 1e-12);
  CHECK(max_abs_diff(phi_lr.value(), dense_attention(l.q.value(), l.k.value(), r.v.value())) < 1e-12);

  const auto [a, b] = attn::cross_key(l, l);
  CHECK(a.value() == b.value());

  attn::Embeddings<double> lz = l, rz = r;
  lz.v = V::constant(Tensor<double>(l.v.shape()));
  rz.v = V::constant(Tensor<double>(r.v.shape()));
  const auto [z1, z2] = attn::cross_key(lz, rz);
  for (double x : z1.value().values()) CHECK(x == 0.0);
  for (double x : z2.value().values()) CHECK(x == 0.0);
}

TEST_CASE("cross_query matches the dense oracle") {
  std::mt19937_64 rng(4);
  const auto l = random_embeddings(rng, 2, 4), r = random_embeddings(rng, 2, 4);
  const auto [psi_rl, psi_lr] = attn::cross_query(l, r);
  CHECK(max_abs_diff(psi_rl.value(), dense_attention(r.q.value(), l.k.value(), l.v.value())) < 1e-12);
  CHECK(max_abs_diff(psi_lr.value(), dense_attention(l.q.value(), r.k.value(), r.v.value())) < 1e-12);

  // Identical views collapse to self-attention.
  const auto [s1, s2] = attn::cross_query(l, l);
  const auto self = attn::efficient_attention(l.q, l.k, l.v).out.value();
  CHECK(max_abs_diff(s1.value(), self) < 1e-15);
  CHECK(max_abs_diff(s2.value(), self) < 1e-15);

  // Zero query -> uniform channel weights -> column means of the map.
  attn::Embeddings<double> rq = r;
  rq.q = V::constant(Tensor<double>(r.q.shape()));
  const auto [psi, unused] = attn::cross_query(l, rq);
  const auto map = attn::efficient_attention(rq.q, l.k, l.v).map.value();  // [1, Ck, Cv]
  for (int64_t j = 0; j < 2; ++j) {
    const double mean = (map[0 * 2 + j] + map[1 * 2 + j]) / 2;
    for (int64_t p = 0; p < 4; ++p) CHECK(psi.value()[j * 4 + p] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("mutual attention block contracts") {
  std::mt19937_64 rng(5);
  attn::MutualAttentionBlock<double> block(32, 8, 0.1, rng);
  const auto x = random_tensor({1, 32, 2, 4, 4}, rng);
  const auto out = block(V::constant(x));
  CHECK(out.shape() == x.shape());

  // Same weights on two grid sizes; the attention map size is unchanged.
  attn::MutualAttentionBlock<float> fblock(8, 4, 0.1f, rng);
  Tensor<float> a(Shape{1, 8, 2, 16, 16}, 0.1f), b(Shape{1, 8, 2, 48, 80}, -0.2f);
  CHECK(fblock(Var<float>::constant(a)).shape() == a.shape());
  const Shape m1 = fblock.last_map_shape();
  CHECK(fblock(Var<float>::constant(b)).shape() == b.shape());
  CHECK(fblock.last_map_shape() == m1);
  CHECK(m1 == Shape{1, 4, 4});

  CHECK_THROWS_AS(block(V::constant(random_tensor({1, 16, 2, 4, 4}, rng))), ShapeError);
}

TEST_CASE("left output depends on the right input") {
  std::mt19937_64 rng(6);
  attn::MutualAttentionBlock<double> block(4, 4, 0.1, rng);
  auto x = V::parameter(random_tensor({1, 4, 2, 4, 4}, rng));
  ops::sum(attn::view_of(block(x), 0)).backward();
  double right_grad = 0;
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t i = 0; i < 16; ++i) right_grad += std::abs(x.grad().at(0, c, 1, i / 4, i % 4));
  CHECK(right_grad > 1e-6);
}

TEST_CASE("mutual attention block gradient check") {
  std::mt19937_64 rng(7);
  attn::MutualAttentionBlock<double> block(4, 4, 0.1, rng);
  const auto x = random_tensor({1, 4, 2, 4, 4}, rng);
  CHECK(gradcheck([&](const std::vector<V>& v) { return block(v[0]); }, {x}) < 1e-3);
  const V xc = V::constant(x);
  std::string where;
  const double err = gradcheck_params(block.parameters(), [&] { return block(xc); }, 11, 12, 1e-6, &where);
  INFO(where);
  CHECK(err < 1e-3);
}

TEST_CASE("row attention block") {
  std::mt19937_64 rng(8);
  attn::RowAttentionBlock<double> block(4, 4, rng);
  auto x = V::parameter(random_tensor({2, 4, 2, 3, 5}, rng));
  auto out = block(x);
  CHECK(out.shape() == x.shape());
  ops::sum(attn::view_of(out, 0)).backward();
  // Row attention stays on the same row: the right view's row 2 of batch 0
  // influences left row 2 only, but rows are all read, so every right entry
  // of the same batch gets gradient.
  double g = 0;
  for (int64_t c = 0; c < 4; ++c) g += std::abs(x.grad().at(0, c, 1, 2, 3));
  CHECK(g > 0);
  const auto xs = random_tensor({1, 4, 2, 2, 3}, rng);
  CHECK(gradcheck([&](const std::vector<V>& v) { return block(v[0]); }, {xs}) < 1e-3);
}
