#include <cmath>
#include <random>

#include "bisic/entropy_model.hpp"
#include "doctest.h"
#include "bisic/gradcheck.hpp"

using namespace bisic;
using bisic::testing::gradcheck_params;
using bisic::testing::random_tensor;

namespace {

ModelConfig tiny(CodingMode mode, int N = 8, int K = 2) {
  ModelConfig c;
  c.N = N;
  c.M = N;
  c.K = K;
  c.mode = mode;
  c.attention_embed = 4;
  c.channel_context_width = 16;
  c.context_width = 8;
  return c;
}

template <typename T>
Var<T> cvar(const Tensor<double>& t) {
  return Var<T>::constant(t.cast<T>());
}

Tensor<double> integer_latent(Shape s, uint64_t seed, int lo = -4, int hi = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(lo, hi);
  Tensor<double> t(std::move(s));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("gaussian bin probability") {
  const Var<double> y = Var<double>::constant(Tensor<double>::scalar(0));
  GaussianParams<double> p{Var<double>::constant(Tensor<double>::scalar(0)),
                           Var<double>::constant(Tensor<double>::scalar(1))};
  CHECK(likelihood(y, p).value().item() == doctest::Approx(std::erf(0.5 / std::sqrt(2.0))).epsilon(1e-12));
  CHECK(likelihood(y, p).value().item() == doctest::Approx(0.3829).epsilon(1e-4));

  for (double mu : {-2.3, 0.0, 0.4, 7.4}) {
    for (double sigma : {0.04, 0.3, 1.0, 6.0}) {
      Tensor<double> ys(Shape{801}), mus(Shape{801}, mu), sig(Shape{801}, sigma);
      for (int i = 0; i < 801; ++i) ys[i] = i - 400;
      const auto pv = likelihood(Var<double>::constant(ys),
                                 {Var<double>::constant(mus), Var<double>::constant(sig)})
                          .value();
      double total = 0;
      int argmax = 0;
      for (int i = 0; i < 801; ++i) {
        total += pv[i];
        if (pv[i] > pv[argmax]) argmax = i;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(argmax - 400 == static_cast<int>(std::lround(mu)));
    }
  }
}

TEST_CASE("rate is finite and non-negative") {
  Tensor<double> p(Shape{4}, std::vector<double>{1.0, 0.5, 0.0, 1e-30});
  const double r = rate_bits(Var<double>::constant(p)).value().item();
  CHECK(r == doctest::Approx(1.0 + 24.0 + 24.0));
}

TEST_CASE("causal tap mask") {
  const auto m = causal_tap_mask(true);
  int live = 0;
  for (auto v : m) live += v;
  CHECK(live == 3 * 12);
  for (int kd = 0; kd < 3; ++kd) {
    CHECK(m[static_cast<size_t>((kd * 5 + 2) * 5 + 2)] == 0);  // centre
    CHECK(m[static_cast<size_t>((kd * 5 + 2) * 5 + 1)] == 1);
    CHECK(m[static_cast<size_t>((kd * 5 + 3) * 5 + 0)] == 0);
  }
  const auto w = causal_tap_mask(false);
  int live_w = 0;
  for (int i = 0; i < 75; ++i) {
    live_w += w[static_cast<size_t>(i)];
    if (i / 25 != 1) CHECK(w[static_cast<size_t>(i)] == 0);
  }
  CHECK(live_w == 12);
}

TEST_CASE("checkerboard split and merge") {
  Tensor<int32_t> g(Shape{1, 1, 2, 2, 2}, std::vector<int32_t>{0, 1, 10, 11, 100, 101, 110, 111});
  const auto [a, n] = checkerboard_split(g);
  CHECK(a == std::vector<int32_t>{0, 11, 100, 111});
  CHECK(n == std::vector<int32_t>{1, 10, 101, 110});

  const auto y = integer_latent({2, 3, 2, 5, 7}, 3, -100, 100).cast<float>();
  const auto [ya, yn] = checkerboard_split(y);
  CHECK(checkerboard_merge(y.shape(), ya, yn) == y);
  CHECK_THROWS_AS(checkerboard_merge(y.shape(), yn, ya), ShapeError);

  for (int h = 1; h <= 9; ++h) {
    for (int w = 1; w <= 9; ++w) {
      const auto [pa, pn] = checkerboard_split(Tensor<int32_t>(Shape{1, 1, 2, h, w}));
      // Per view.
      const int64_t diff = (static_cast<int64_t>(pa.size()) - static_cast<int64_t>(pn.size())) / 2;
      CHECK(diff >= 0);
      CHECK(diff <= h);
      CHECK(static_cast<int64_t>(pa.size() + pn.size()) == 2 * h * w);
    }
  }
  const auto mask = anchor_mask<float>(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(mask.at(0, 0, 0, i, j) == mask.at(0, 0, 1, i, j));
}

TEST_CASE("factorized prior") {
  std::mt19937_64 rng(5);
  FactorizedPrior<double> prior(4, rng);
  const auto cdf_lo = prior.logits_cumulative(Var<double>::constant(Tensor<double>(Shape{4, 1, 1}, -1e4)));
  const auto cdf_hi = prior.logits_cumulative(Var<double>::constant(Tensor<double>(Shape{4, 1, 1}, 1e4)));
  for (int c = 0; c < 4; ++c) {
    const double mass = 1.0 / (1.0 + std::exp(-cdf_hi.value()[c])) - 1.0 / (1.0 + std::exp(-cdf_lo.value()[c]));
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
  const auto table = prior.pmf_table(-128, 127);
  for (const auto& row : table) {
    double total = 0;
    for (double p : row) {
      CHECK(p > 0);
      total += p;
    }
    CHECK(total <= 1.0 + 1e-9);
    CHECK(total > 0.99);
  }
  // Monotone CDF: logits non-decreasing in x.
  Tensor<double> xs(Shape{4, 1, 64});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 64; ++i) xs[c * 64 + i] = -16 + 0.5 * i;
  const auto lg = prior.logits_cumulative(Var<double>::constant(xs)).value();
  for (int c = 0; c < 4; ++c)
    for (int i = 1; i < 64; ++i) CHECK(lg[c * 64 + i] >= lg[c * 64 + i - 1]);

  // Rate under the prior equals the direct recomputation from the table.
  const auto z = integer_latent({2, 4, 2, 3, 3}, 9);
  const auto p = prior.likelihood(Var<double>::constant(z));
  double oracle = 0;
  for (int64_t i = 0; i < z.numel(); ++i) {
    const int64_t c = (i / (2 * 3 * 3)) % 4;
    oracle -= std::log2(table[static_cast<size_t>(c)][static_cast<size_t>(z[i] + 128)]);
  }
  CHECK(rate_bits(p).value().item() == doctest::Approx(oracle).epsilon(1e-9));
  CHECK_THROWS_AS(prior.likelihood(Var<double>::constant(Tensor<double>(Shape{1, 3, 2, 1, 1}))), ShapeError);
}

TEST_CASE("factorized prior gradients") {
  std::mt19937_64 rng(6);
  FactorizedPrior<double> prior(2, rng);
  std::mt19937_64 r2(1);
  const auto z = Var<double>::constant(random_tensor({1, 2, 2, 2, 2}, r2, -3, 3));
  const double err = gradcheck_params(prior.parameters(), [&] { return prior.likelihood(z); });
  CHECK(err < 1e-3);
}

TEST_CASE("channel context shapes and contracts") {
  std::mt19937_64 rng(2);
  ModelConfig cfg = tiny(CodingMode::kAR, 32, 4);
  cfg.channel_context_width = 128;
  EntropyModel<float> em(cfg, 32, rng);
  CHECK(em.slices() == 4);
  CHECK(em.slice_channels() == 8);
  NoGradGuard ng;
  const auto th0 = em.channel_context(0, Var<float>(), 1, 4, 4);
  CHECK(th0.shape() == Shape{1, 128, 2, 4, 4});
  for (float v : th0.value().values()) CHECK(v == 0.0f);

  const auto prev = integer_latent({1, 16, 2, 4, 4}, 4);
  const auto th2 = em.channel_context(2, cvar<float>(prev), 1, 4, 4);
  CHECK(th2.shape() == Shape{1, 128, 2, 4, 4});
  CHECK_THROWS_AS(em.channel_context(3, cvar<float>(prev), 1, 4, 4), ProtocolError);
  CHECK_THROWS_AS(em.channel_context(2, Var<float>(), 1, 4, 4), ProtocolError);

  // A right-view change reaches the left view's channel context.
  auto moved = prev;
  moved.at(0, 3, 1, 2, 2) += 5;
  const auto th2b = em.channel_context(2, cvar<float>(moved), 1, 4, 4);
  double diff = 0;
  for (int c = 0; c < 128; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) diff += std::abs(th2.value().at(0, c, 0, i, j) - th2b.value().at(0, c, 0, i, j));
  CHECK(diff > 0);
}

TEST_CASE("spatial context is causal across views") {
  std::mt19937_64 rng(3);
  const ModelConfig cfg = tiny(CodingMode::kAR);
  EntropyModel<float> em(cfg, 8, rng);
  NoGradGuard ng;
  const int64_t h = 6, w = 7;
  const auto y = integer_latent({1, 4, 2, h, w}, 8);
  const auto base = em.spatial_context(0, cvar<float>(y)).value();

  // Zero input gives the bias everywhere, and position 0 never sees data.
  const auto zero = em.spatial_context(0, Var<float>::constant(Tensor<float>(Shape{1, 4, 2, h, w}))).value();
  for (int64_t c = 0; c < zero.dim(1); ++c) {
    for (int v = 0; v < 2; ++v) {
      CHECK(zero.at(0, c, v, 3, 3) == zero.at(0, c, 0, 0, 0));
      CHECK(base.at(0, c, v, 0, 0) == zero.at(0, c, v, 0, 0));
    }
  }

  std::mt19937_64 pr(99);
  std::uniform_int_distribution<int64_t> pos(0, h * w - 1);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t i = pos(pr);
    auto y2 = y;
    std::uniform_int_distribution<int> val(-50, 50);
    for (int64_t c = 0; c < 4; ++c)
      for (int v = 0; v < 2; ++v)
        for (int64_t q = i; q < h * w; ++q) y2.at(0, c, v, q / w, q % w) = val(pr);
    const auto out = em.spatial_context(0, cvar<float>(y2)).value();
    bool same = true;
    for (int64_t c = 0; c < out.dim(1); ++c)
      for (int v = 0; v < 2; ++v) same &= out.at(0, c, v, i / w, i % w) == base.at(0, c, v, i / w, i % w);
    CHECK(same);
  }

  // The windowed evaluation used by the coder matches the full-grid one.
  for (int64_t i : {0L, 9L, 20L, 41L}) {
    const int64_t r = i / w, col = i % w;
    Tensor<float> win(Shape{1, 4, 2, 5, 5});
    for (int64_t c = 0; c < 4; ++c)
      for (int v = 0; v < 2; ++v)
        for (int a = 0; a < 5; ++a)
          for (int b = 0; b < 5; ++b) {
            const int64_t rr = r + a - 2, cc = col + b - 2;
            if (rr >= 0 && rr < h && cc >= 0 && cc < w) win.at(0, c, v, a, b) = static_cast<float>(y.at(0, c, v, rr, cc));
          }
    const auto at = em.spatial_context_at(0, Var<float>::constant(win)).value();
    CHECK(at.shape() == Shape{1, base.dim(1), 2, 1, 1});
    for (int64_t c = 0; c < base.dim(1); ++c)
      for (int v = 0; v < 2; ++v) CHECK(at.at(0, c, v, 0, 0) == doctest::Approx(base.at(0, c, v, r, col)).epsilon(1e-5));
  }
}

TEST_CASE("minnen ablation keeps the views apart") {
  std::mt19937_64 rng(3);
  ModelConfig cfg = tiny(CodingMode::kAR);
  cfg.ablations.entropy_minnen = true;
  EntropyModel<float> em(cfg, 8, rng);
  CHECK(em.slices() == 1);
  CHECK_FALSE(em.uses_channel_context());
  NoGradGuard ng;
  const auto y = integer_latent({1, 8, 2, 4, 4}, 8);
  auto y2 = y;
  y2.at(0, 2, 1, 0, 0) += 9;
  const auto a = em.spatial_context(0, cvar<float>(y)).value();
  const auto b = em.spatial_context(0, cvar<float>(y2)).value();
  for (int64_t c = 0; c < a.dim(1); ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(a.at(0, c, 0, i, j) == b.at(0, c, 0, i, j));
}

TEST_CASE("aggregate contracts") {
  std::mt19937_64 rng(4);
  const ModelConfig cfg = tiny(CodingMode::kAR);
  EntropyModel<double> em(cfg, 8, rng);
  NoGradGuard ng;
  std::mt19937_64 r2(5);
  // Same features in both views -> same parameters in both views.
  auto one_view = random_tensor({1, 8, 1, 3, 3}, r2, -20, 20);
  Tensor<double> zt(Shape{1, 8, 2, 3, 3});
  for (int c = 0; c < 8; ++c)
    for (int v = 0; v < 2; ++v)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) zt.at(0, c, v, i, j) = one_view.at(0, c, 0, i, j);
  const auto theta = em.channel_context(0, Var<double>(), 1, 3, 3);
  const auto ups = Var<double>::constant(Tensor<double>(Shape{1, 8, 2, 3, 3}, 0.25));
  const auto p = em.aggregate(0, Var<double>::constant(zt), theta, ups);
  CHECK(p.mu.shape() == Shape{1, 4, 2, 3, 3});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        // Equal up to GEMM summation order, which may differ between columns.
        CHECK(p.mu.value().at(0, c, 0, i, j) == doctest::Approx(p.mu.value().at(0, c, 1, i, j)).epsilon(1e-12));
        CHECK(p.sigma.value().at(0, c, 0, i, j) == doctest::Approx(p.sigma.value().at(0, c, 1, i, j)).epsilon(1e-12));
      }
  for (double s : p.sigma.value().values()) CHECK(s >= cfg.sigma_floor);

  // Zero features: constant parameters everywhere.
  const auto z0 = Var<double>::constant(Tensor<double>(Shape{1, 8, 2, 3, 3}));
  const auto q = em.aggregate(0, z0, theta, z0);
  for (int c = 0; c < 4; ++c)
    for (int v = 0; v < 2; ++v)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          CHECK(q.mu.value().at(0, c, v, i, j) == doctest::Approx(q.mu.value().at(0, c, 0, 0, 0)).epsilon(1e-12));

  const auto bad = Var<double>::constant(Tensor<double>(Shape{1, 8, 2, 2, 3}));
  CHECK_THROWS_AS(em.aggregate(0, z0, theta, bad), ShapeError);
  CHECK_THROWS_AS(em.anchor_params(0, z0, theta), ProtocolError);
}

TEST_CASE("sigma stays above the floor for extreme inputs") {
  std::mt19937_64 rng(4);
  const ModelConfig cfg = tiny(CodingMode::kAR);
  EntropyModel<float> em(cfg, 8, rng);
  NoGradGuard ng;
  std::mt19937_64 r2(5);
  const auto zt = cvar<float>(random_tensor({1, 8, 2, 3, 3}, r2, -1e4, 1e4));
  const auto y = cvar<float>(integer_latent({1, 8, 2, 3, 3}, 1, -128, 127));
  const auto p = em.forward(y, zt);
  for (float s : p.sigma.value().values()) CHECK(s >= cfg.sigma_floor);
  const double r = rate_bits(likelihood(y, p)).value().item();
  CHECK(std::isfinite(r));
  CHECK(r >= 0);
}

TEST_CASE("forward is causal in AR mode") {
  std::mt19937_64 rng(12);
  const ModelConfig cfg = tiny(CodingMode::kAR, 8, 2);
  EntropyModel<float> em(cfg, 8, rng);
  NoGradGuard ng;
  const int64_t h = 4, w = 5;
  std::mt19937_64 r2(3);
  const auto zt = cvar<float>(random_tensor({1, 8, 2, h, w}, r2));
  const auto y = integer_latent({1, 8, 2, h, w}, 21);
  const auto base = em.forward(cvar<float>(y), zt);
  std::mt19937_64 pr(7);
  std::uniform_int_distribution<int> val(-30, 30);
  for (int k = 0; k < 2; ++k) {
    for (int64_t i = 0; i < h * w; i += 3) {
      auto y2 = y;
      for (int64_t c = 0; c < 8; ++c)
        for (int v = 0; v < 2; ++v)
          for (int64_t q = 0; q < h * w; ++q) {
            const int64_t slice = c / 4;
            if (slice > k || (slice == k && q >= i)) y2.at(0, c, v, q / w, q % w) = val(pr);
          }
      const auto p = em.forward(cvar<float>(y2), zt);
      bool same = true;
      for (int64_t c = k * 4; c < k * 4 + 4; ++c)
        for (int v = 0; v < 2; ++v) {
          same &= p.mu.value().at(0, c, v, i / w, i % w) == base.mu.value().at(0, c, v, i / w, i % w);
          same &= p.sigma.value().at(0, c, v, i / w, i % w) == base.sigma.value().at(0, c, v, i / w, i % w);
        }
      CHECK(same);
    }
  }
}

TEST_CASE("checkerboard mode causality") {
  for (bool vanilla : {false, true}) {
    std::mt19937_64 rng(13);
    ModelConfig cfg = tiny(CodingMode::kCKBD, 8, 2);
    cfg.ablations.vanilla_ckbd = vanilla;
    EntropyModel<float> em(cfg, 8, rng);
    NoGradGuard ng;
    const int64_t h = 4, w = 4;
    std::mt19937_64 r2(3);
    const auto zt = cvar<float>(random_tensor({1, 8, 2, h, w}, r2));
    const auto y = integer_latent({1, 8, 2, h, w}, 22);
    const auto base = em.forward(cvar<float>(y), zt);

    // Non-anchor and later-slice changes leave the anchors alone; later
    // slices leave slice 0 alone entirely.
    auto y2 = y;
    for (int64_t c = 0; c < 8; ++c)
      for (int v = 0; v < 2; ++v)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            if (!is_anchor(i, j) || c >= 4) y2.at(0, c, v, i, j) += 7;
    const auto p = em.forward(cvar<float>(y2), zt);
    for (int64_t c = 0; c < 8; ++c)
      for (int v = 0; v < 2; ++v)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) {
            if (c < 4 || is_anchor(i, j)) {
              if (c >= 4) continue;
              CHECK(p.mu.value().at(0, c, v, i, j) == base.mu.value().at(0, c, v, i, j));
              CHECK(p.sigma.value().at(0, c, v, i, j) == base.sigma.value().at(0, c, v, i, j));
            }
          }

    // Anchor parameters of slice 0 do not look at y at all.
    const auto theta = em.channel_context(0, Var<float>(), 1, h, w);
    const auto a = em.anchor_params(0, zt, theta);
    for (int64_t c = 0; c < 4; ++c)
      for (int v = 0; v < 2; ++v)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            if (is_anchor(i, j)) CHECK(a.mu.value().at(0, c, v, i, j) == base.mu.value().at(0, c, v, i, j));

    // Zero anchors give the bias map; cross-view probe for the anchor context.
    const auto zero = em.anchor_context(0, Var<float>::constant(Tensor<float>(Shape{1, 4, 2, h, w}))).value();
    for (int64_t c = 0; c < zero.dim(1); ++c)
      for (int v = 0; v < 2; ++v)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) CHECK(zero.at(0, c, v, i, j) == zero.at(0, c, 0, 0, 0));
    Tensor<float> anchors(Shape{1, 4, 2, h, w});
    Tensor<float> moved = anchors;
    moved.at(0, 1, 1, 2, 2) = 6;
    const auto c0 = em.anchor_context(0, Var<float>::constant(anchors)).value();
    const auto c1 = em.anchor_context(0, Var<float>::constant(moved)).value();
    double left_change = 0;
    for (int64_t c = 0; c < c0.dim(1); ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) left_change += std::abs(c0.at(0, c, 0, i, j) - c1.at(0, c, 0, i, j));
    if (vanilla) {
      CHECK(left_change == 0);
    } else {
      CHECK(left_change > 0);
    }
    CHECK_THROWS_AS(em.nonanchor_params(0, zt, theta, Var<float>()), ProtocolError);
    CHECK_THROWS_AS(em.spatial_context(0, cvar<float>(y)), ProtocolError);
  }
}

TEST_CASE("views share one parameter set") {
  std::mt19937_64 rng(1);
  EntropyModel<float> em(tiny(CodingMode::kAR), 8, rng);
  for (const auto& [name, p] : em.parameters()) {
    CHECK(name.find("left") == std::string::npos);
    CHECK(name.find("right") == std::string::npos);
  }
  CHECK(em.channel_attention(0) == nullptr);
  CHECK(em.channel_attention(1) != nullptr);
}

TEST_CASE("aggregate and likelihood gradients") {
  for (CodingMode mode : {CodingMode::kAR, CodingMode::kCKBD}) {
    std::mt19937_64 rng(31);
    ModelConfig cfg = tiny(mode, 4, 2);
    cfg.channel_context_width = 4;
    cfg.context_width = 4;
    cfg.attention_embed = 2;
    EntropyModel<double> em(cfg, 4, rng);
    std::mt19937_64 r2(2);
    const auto zt = Var<double>::constant(random_tensor({1, 4, 2, 3, 3}, r2));
    const auto y = Var<double>::constant(random_tensor({1, 4, 2, 3, 3}, r2, -2, 2));
    std::string worst;
    const double err = gradcheck_params(
        em.parameters(), [&] { return likelihood(y, em.forward(y, zt)); }, 11, 6, 1e-6, &worst);
    INFO(worst);
    CHECK(err < 1e-3);
  }
}
