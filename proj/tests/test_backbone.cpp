#include <cmath>
#include <random>

#include "bisic/backbone.hpp"
#include "doctest.h"
#include "bisic/gradcheck.hpp"

using namespace bisic;
using bisic::testing::gradcheck_params;
using bisic::testing::random_tensor;

namespace {

ModelConfig tiny(int N = 8) {
  ModelConfig c;
  c.N = N;
  c.M = N;
  c.K = 2;
  c.attention_embed = 4;
  return c;
}

Tensor<float> random_image(Shape s, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor(s, rng, 0, 1).cast<float>();
}

}  // namespace

TEST_CASE("latent and hyper shapes") {
  std::mt19937_64 rng(1);
  ModelConfig cfg;
  Backbone<float> net(cfg, rng);
  NoGradGuard ng;
  const auto x = Var<float>::constant(random_image({1, 3, 2, 64, 64}, 2));
  const auto y = net.encode(x);
  CHECK(y.shape() == Shape{1, 32, 2, 4, 4});
  const auto z = net.hyper_encode(y);
  CHECK(z.shape() == Shape{1, 32, 2, 1, 1});
  CHECK(net.hyper_decode(z).shape() == Shape{1, net.hyper_channels(), 2, 4, 4});
  const auto xh = net.decode(y);
  CHECK(xh.shape() == x.shape());
  for (float v : xh.value().values()) REQUIRE(std::isfinite(v));

  // Full-resolution latent grid without running the image transform.
  const auto big = Var<float>::constant(Tensor<float>(Shape{1, 32, 2, 64, 52}, 0.5f));
  CHECK(net.hyper_encode(big).shape() == Shape{1, 32, 2, 16, 13});
  CHECK(net.hyper_decode(net.hyper_encode(big)).shape() == Shape{1, 32, 2, 64, 52});

  CHECK_THROWS_AS(net.encode(Var<float>::constant(Tensor<float>(Shape{1, 3, 2, 72, 64}))), ShapeError);
  CHECK_THROWS_AS(net.decode(Var<float>::constant(Tensor<float>(Shape{1, 16, 2, 4, 4}))), ShapeError);
}

TEST_CASE("full-size image maps to a 64x52 latent") {
  std::mt19937_64 rng(1);
  ModelConfig cfg = tiny(8);
  Backbone<float> net(cfg, rng);
  NoGradGuard ng;
  const auto y = net.encode(Var<float>::constant(Tensor<float>(Shape{1, 3, 2, 1024, 832}, 0.5f)));
  CHECK(y.shape() == Shape{1, 8, 2, 64, 52});
}

TEST_CASE("cross-view dependence follows the configuration") {
  const auto x = random_image({1, 3, 2, 64, 64}, 3);
  auto x2 = x;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 64; ++i) x2.at(0, c, 1, i, i) += 0.25f;  // right view only
  auto left_diff = [&](const ModelConfig& cfg) {
    std::mt19937_64 rng(4);
    Backbone<float> net(cfg, rng);
    NoGradGuard ng;
    const auto a = attn::view_of(net.encode(Var<float>::constant(x)), 0).value();
    const auto b = attn::view_of(net.encode(Var<float>::constant(x2)), 0).value();
    return max_abs_diff(a, b);
  };
  ModelConfig cfg;
  CHECK(left_diff(cfg) > 0);
  cfg.ablations.attention = AttentionMode::kRow;
  CHECK(left_diff(cfg) > 0);
  cfg.ablations.attention = AttentionMode::kNone;
  CHECK(left_diff(cfg) > 0);  // 3D kernels still mix views
  cfg.ablations.backbone_2d = true;
  CHECK(left_diff(cfg) == 0.0);
  cfg.ablations.attention = AttentionMode::kMutual;
  CHECK(left_diff(cfg) > 0);
}

TEST_CASE("zero latent through a transposed stage yields its bias") {
  std::mt19937_64 rng(5);
  ModelConfig cfg = tiny(8);
  Backbone<float> net(cfg, rng);
  const auto& layer = net.decoder_layer(0);
  const auto out = layer(Var<float>::constant(Tensor<float>(Shape{1, 8, 2, 4, 4}))).value();
  const auto bias = layer.parameters()[1].second.value();
  for (int64_t c = 0; c < 8; ++c)
    for (int64_t v = 0; v < 2; ++v)
      for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j) REQUIRE(out.at(0, c, v, i, j) == bias[c]);
}

TEST_CASE("hyper decode is deterministic") {
  std::mt19937_64 rng(6);
  Backbone<float> net(tiny(8), rng);
  const auto z = Var<float>::constant(random_image({1, 8, 2, 2, 3}, 7));
  CHECK(net.hyper_decode(z).value() == net.hyper_decode(z).value());
}

TEST_CASE("backbone parameter gradients match finite differences") {
  std::mt19937_64 rng(8);
  Backbone<double> net(tiny(8), rng);
  std::mt19937_64 drng(9);
  const auto x = Var<double>::constant(random_tensor({1, 3, 2, 16, 16}, drng, 0, 1));
  std::string where;
  double err = gradcheck_params(net.parameters(), [&] { return net.decode(net.encode(x)); }, 3, 6, 1e-6, &where);
  INFO(where);
  CHECK(err < 1e-3);
  const auto y = Var<double>::constant(random_tensor({1, 8, 2, 4, 4}, drng));
  err = gradcheck_params(net.parameters(), [&] { return net.hyper_decode(net.hyper_encode(y)); }, 4, 6, 1e-6, &where);
  INFO(where);
  CHECK(err < 1e-3);
}
