#include "bisic/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "bisic/attention.hpp"
#include "bisic/data.hpp"
#include "bisic/gradcheck.hpp"

namespace bisic::selftest {

namespace {

struct Latents {
  Tensor<float> y_hat;
  Var<float> zt;
};

Latents encode_latents(const Model<float>& model, const Tensor<float>& x) {
  NoGradGuard ng;
  const auto out = model.forward(Var<float>::constant(x), Quantizer::kRound, nullptr, false);
  return {out.y_hat.value(), out.zt};
}

GaussianParams<float> params_for(const Model<float>& model, const Latents& l, const Tensor<float>& y) {
  NoGradGuard ng;
  return model.entropy().forward(Var<float>::constant(y), l.zt);
}

bool same_at(const GaussianParams<float>& a, const GaussianParams<float>& b, int64_t c, int64_t v, int64_t i,
             int64_t j) {
  return a.mu.value().at(0, c, v, i, j) == b.mu.value().at(0, c, v, i, j) &&
         a.sigma.value().at(0, c, v, i, j) == b.sigma.value().at(0, c, v, i, j);
}

template <typename F>
double timed(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

int64_t ar_causality_violations(const Model<float>& model, const Tensor<float>& x, int trials, uint64_t seed) {
  if (model.config().mode != CodingMode::kAR) throw ParameterError("AR causality probe needs an AR model");
  const Latents l = encode_latents(model, x);
  const auto base = params_for(model, l, l.y_hat);
  const int64_t C = l.y_hat.dim(1), h = l.y_hat.dim(3), w = l.y_hat.dim(4);
  const int K = model.config().slices();
  const int64_t S = C / K;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> slice_d(0, K - 1), view_d(0, 1), val(-40, 40);
  std::uniform_int_distribution<int64_t> pos_d(0, h * w - 1);
  int64_t violations = 0;
  for (int t = 0; t < trials; ++t) {
    const int k = slice_d(rng);
    const int64_t p = pos_d(rng);
    const int view = view_d(rng);
    Tensor<float> y = l.y_hat;
    for (int64_t c = 0; c < C; ++c) {
      const int64_t slice = c / S;
      if (slice < k) continue;
      for (int v = 0; v < 2; ++v)
        for (int64_t q = slice == k ? p : 0; q < h * w; ++q) y.at(0, c, v, q / w, q % w) = static_cast<float>(val(rng));
    }
    const auto probe = params_for(model, l, y);
    bool same = true;
    for (int64_t c = k * S; c < (k + 1) * S; ++c) same &= same_at(base, probe, c, view, p / w, p % w);
    if (!same) ++violations;
  }
  return violations;
}

int64_t ckbd_causality_violations(const Model<float>& model, const Tensor<float>& x, int trials, uint64_t seed) {
  if (model.config().mode != CodingMode::kCKBD) throw ParameterError("checkerboard causality probe needs a CKBD model");
  const Latents l = encode_latents(model, x);
  const auto base = params_for(model, l, l.y_hat);
  const int64_t C = l.y_hat.dim(1), h = l.y_hat.dim(3), w = l.y_hat.dim(4);
  const int K = model.config().slices();
  const int64_t S = C / K;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> slice_d(0, K - 1), val(-40, 40);
  int64_t violations = 0;
  for (int t = 0; t < trials; ++t) {
    const int k = slice_d(rng);
    Tensor<float> y = l.y_hat;
    for (int64_t c = k * S; c < C; ++c)
      for (int v = 0; v < 2; ++v)
        for (int64_t i = 0; i < h; ++i)
          for (int64_t j = 0; j < w; ++j)
            if (c >= (k + 1) * S || !is_anchor(i, j)) y.at(0, c, v, i, j) = static_cast<float>(val(rng));
    const auto probe = params_for(model, l, y);
    bool same = true;
    for (int64_t c = k * S; c < (k + 1) * S; ++c)
      for (int v = 0; v < 2; ++v)
        for (int64_t i = 0; i < h; ++i)
          for (int64_t j = 0; j < w; ++j)
            if (is_anchor(i, j)) same &= same_at(base, probe, c, v, i, j);
    if (!same) ++violations;
  }
  return violations;
}

RoundTrip round_trip(const Model<float>& model, const Tensor<float>& x, const codec::Options& opt) {
  const auto enc = codec::compress(model, x, opt);
  const auto dec = codec::decompress(model, enc.bytes, opt);
  const auto ref = codec::quantized_reconstruction(model, x);
  RoundTrip r;
  r.max_diff = max_abs_diff(dec.x_hat, ref);
  r.latents_equal = max_abs_diff(dec.y_hat, enc.y_hat) == 0 && max_abs_diff(dec.z_hat, enc.z_hat) == 0;
  r.stats = enc.stats;
  r.bytes = enc.bytes.size();
  return r;
}

double mutual_attention_gradcheck(uint64_t seed) {
  std::mt19937_64 rng(seed);
  attn::MutualAttentionBlock<double> block(4, 4, 0.1, rng);
  const auto x = testing::random_tensor({1, 4, 2, 4, 4}, rng);
  const double input_err =
      testing::gradcheck([&](const std::vector<Var<double>>& v) { return block(v[0]); }, {x}, seed);
  const auto xc = Var<double>::constant(x);
  const double param_err = testing::gradcheck_params(block.parameters(), [&] { return block(xc); }, seed);
  return std::max(input_err, param_err);
}

double masked_conv_gradcheck(uint64_t seed) {
  std::mt19937_64 rng(seed);
  ops::ConvGeometry g;
  g.pad = {1, 2, 2};
  g.tap_mask = causal_tap_mask(true);
  const auto x = testing::random_tensor({1, 2, 2, 4, 5}, rng);
  const auto w = testing::random_tensor({3, 2, 3, 5, 5}, rng);
  const auto b = testing::random_tensor({3}, rng);
  return testing::gradcheck(
      [g](const std::vector<Var<double>>& v) { return ops::conv3d(v[0], v[1], v[2], g); }, {x, w, b}, seed);
}

double aggregate_likelihood_gradcheck(CodingMode mode, uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelConfig cfg;
  cfg.N = 4;
  cfg.M = 4;
  cfg.K = 2;
  cfg.mode = mode;
  cfg.channel_context_width = 4;
  cfg.context_width = 4;
  cfg.attention_embed = 2;
  EntropyModel<double> em(cfg, 4, rng);
  const auto zt = Var<double>::constant(testing::random_tensor({1, 4, 2, 3, 3}, rng));
  const auto y = Var<double>::constant(testing::random_tensor({1, 4, 2, 3, 3}, rng, -2, 2));
  return testing::gradcheck_params(em.parameters(), [&] { return likelihood(y, em.forward(y, zt)); }, seed, 6);
}

std::vector<Check> run(bool quick, uint64_t seed) {
  std::vector<Check> out;
  const int trials = quick ? 25 : 100;
  const int pairs = quick ? 2 : 5;
  ModelConfig base;
  base.N = 32;
  base.M = 32;
  base.K = 4;

  auto pair_x = [&](uint64_t s) {
    SyntheticSpec spec;
    spec.seed = s;
    return to_batch(std::vector<StereoPair>{generate_synthetic_pair(spec)});
  };

  for (CodingMode mode : {CodingMode::kAR, CodingMode::kCKBD}) {
    ModelConfig cfg = base;
    cfg.mode = mode;
    const Model<float> model(cfg, seed);
    const auto x = pair_x(seed + 1);
    Check c;
    c.name = "causality " + to_string(mode);
    int64_t bad = 0;
    c.seconds = timed([&] {
      bad = mode == CodingMode::kAR ? ar_causality_violations(model, x, trials, seed)
                                    : ckbd_causality_violations(model, x, trials, seed);
    });
    c.pass = bad == 0;
    c.detail = std::to_string(bad) + " violations in " + std::to_string(trials) + " trials";
    out.push_back(c);

    Check r;
    r.name = "round trip " + to_string(mode);
    double worst = 0;
    bool latents = true, rate = true;
    r.seconds = timed([&] {
      for (int i = 0; i < pairs; ++i) {
        const auto rt = round_trip(model, pair_x(seed + 100 + i));
        worst = std::max(worst, rt.max_diff);
        latents &= rt.latents_equal;
        for (const auto& s : rt.stats.streams) {
          rate &= static_cast<double>(s.measured_bits) >= s.estimate_bits &&
                  static_cast<double>(s.measured_bits) <= s.estimate_bits * 1.02 + 128;
        }
      }
    });
    r.pass = worst == 0 && latents && rate;
    r.detail = std::to_string(pairs) + " pairs, max diff " + fmt("%g", worst) + (latents ? "" : ", latents differ") +
               (rate ? "" : ", rate outside bound");
    out.push_back(r);
  }

  auto grad = [&](const std::string& name, auto&& f) {
    Check c;
    c.name = name;
    double err = 0;
    c.seconds = timed([&] { err = f(); });
    c.pass = err < 1e-3;
    c.detail = "max relative error " + fmt("%.3g", err);
    out.push_back(c);
  };
  grad("gradient mutual attention", [&] { return mutual_attention_gradcheck(seed); });
  grad("gradient masked conv", [&] { return masked_conv_gradcheck(seed); });
  grad("gradient aggregate+likelihood ar", [&] { return aggregate_likelihood_gradcheck(CodingMode::kAR, seed); });
  grad("gradient aggregate+likelihood ckbd", [&] { return aggregate_likelihood_gradcheck(CodingMode::kCKBD, seed); });
  return out;
}

std::string format_table(const std::vector<Check>& checks) {
  size_t width = 0;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  std::string s;
  for (const auto& c : checks) {
    s += (c.pass ? "PASS  " : "FAIL  ") + c.name + std::string(width - c.name.size() + 2, ' ') + c.detail +
         fmt("  (%.1fs)", c.seconds) + "\n";
  }
  return s;
}

}  // namespace bisic::selftest
