#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

#include "bisic/codec.hpp"
#include "bisic/metrics.hpp"
#include "bisic/training.hpp"
#include "doctest.h"

using namespace bisic;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.N = 16;
  c.M = 16;
  c.K = 2;
  c.attention_embed = 8;
  c.channel_context_width = 32;
  c.context_width = 16;
  return c;
}

std::vector<StereoPair> dataset(int n, int64_t size = 64) {
  std::vector<StereoPair> out;
  for (int i = 0; i < n; ++i) {
    SyntheticSpec s;
    s.seed = 100 + i;
    s.height = size;
    s.width = size;
    out.push_back(generate_synthetic_pair(s));
  }
  return out;
}

Var<float> batch_of(const std::vector<StereoPair>& pairs) { return Var<float>::constant(to_batch(pairs)); }

TrainConfig quick(int64_t steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 2;
  t.lr = 1e-3;
  t.seed = 5;
  return t;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("bisic_train_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("config validation and overrides") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.set("lambda", "1024");
  t.set("distortion", "ms_ssim");
  t.set("crop_size", "128");
  CHECK(t.lambda == 1024);
  CHECK(t.distortion == Distortion::kMsSsim);
  CHECK_NOTHROW(t.validate());
  t.crop_size = 96;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  t.crop_size = 64;
  t.lambda = 0;
  CHECK_THROWS_AS(t.validate(), ParameterError);
  CHECK_THROWS_AS(t.set("lambda", "abc"), ParameterError);
  CHECK_THROWS_AS(t.set("momentum", "1"), ParameterError);
  for (double l : {256.0, 512.0, 1024.0, 2048.0, 3072.0, 4096.0}) CHECK(is_standard_lambda(l));
  CHECK_FALSE(is_standard_lambda(100));
}

TEST_CASE("bypass gives zero distortion and L equals the rate") {
  Model<float> model(tiny(), 1);
  const auto x = batch_of(dataset(2));
  for (Distortion d : {Distortion::kMse, Distortion::kMsSsim}) {
    std::mt19937_64 rng(3);
    const auto v = rd_loss(model, x, 512, d, rng, true).values();
    CHECK(std::abs(v.D) < 1e-6);
    CHECK(v.L == doctest::Approx(v.R_y + v.R_z).epsilon(1e-6));
    CHECK(v.R_y > 0);
    CHECK(v.R_z > 0);
  }
}

TEST_CASE("loss is linear in lambda") {
  Model<float> model(tiny(), 2);
  const auto x = batch_of(dataset(2));
  std::mt19937_64 r1(9), r2(9);
  const auto a = rd_loss(model, x, 512, Distortion::kMse, r1).values();
  const auto b = rd_loss(model, x, 1024, Distortion::kMse, r2).values();
  CHECK(a.D > 0);
  CHECK(a.L == doctest::Approx(512 * a.D + a.R_y + a.R_z).epsilon(1e-6));
  CHECK(b.L - a.L == doctest::Approx(512 * a.D).epsilon(1e-5));
  CHECK(b.R_y == a.R_y);
  CHECK(b.R_z == a.R_z);
}

TEST_CASE("mse distortion sums the per-view errors") {
  Model<float> model(tiny(), 4);
  const auto x = batch_of(dataset(1));
  std::mt19937_64 rng(1);
  const auto t = rd_loss(model, x, 512, Distortion::kMse, rng);
  std::mt19937_64 rng2(1);
  const auto out = model.forward(x, Quantizer::kNoise, &rng2);
  const auto& a = out.x_hat.value();
  const auto& b = x.value();
  double per_view[2] = {0, 0};
  const int64_t H = b.dim(3), W = b.dim(4);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t v = 0; v < 2; ++v)
      for (int64_t i = 0; i < H * W; ++i) {
        const int64_t j = (c * 2 + v) * H * W + i;
        per_view[v] += std::pow(static_cast<double>(a[j]) - b[j], 2);
      }
  const double expect = (per_view[0] + per_view[1]) / (3.0 * H * W);
  CHECK(t.values().D == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("noise quantization stays within half a step") {
  std::mt19937_64 rng(11);
  Tensor<float> y({4, 16, 2, 8, 8});
  std::normal_distribution<float> n(0, 3);
  for (auto& v : y.values()) v = n(rng);
  const auto yv = Var<float>::constant(y);
  const auto q = quantize(yv, Quantizer::kNoise, &rng).value();
  double sum = 0, worst = 0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double d = static_cast<double>(q[i]) - y[i];
    sum += d;
    worst = std::max(worst, std::abs(d));
  }
  CHECK(worst <= 0.5 + 1e-6);
  // Mean of 4096 U(-0.5, 0.5) draws: standard error 0.0045.
  CHECK(std::abs(sum / y.numel()) < 0.02);
}

TEST_CASE("learning rate halves on schedule") {
  CHECK(learning_rate(1e-4, 500, 0) == 1e-4);
  CHECK(learning_rate(1e-4, 500, 499) == 1e-4);
  CHECK(learning_rate(1e-4, 500, 500) == 5e-5);
  CHECK(learning_rate(1e-4, 500, 1999) == 1.25e-5);
}

TEST_CASE("gradient clipping bounds the global norm") {
  Var<float> a = Var<float>::parameter(Tensor<float>({3}, {0, 0, 0}));
  Var<float> b = Var<float>::parameter(Tensor<float>({1}, {0}));
  a.mutable_grad() = Tensor<float>({3}, {3, 0, 0});
  b.mutable_grad() = Tensor<float>({1}, {4});
  nn::NamedParams<float> ps{{"a", a}, {"b", b}};
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(1.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
}

TEST_CASE("identical seeds give identical logs") {
  const auto data = dataset(3);
  Model<float> m1(tiny(), 7), m2(tiny(), 7);
  const auto r1 = train(m1, data, quick(4));
  const auto r2 = train(m2, data, quick(4));
  REQUIRE(r1.log.size() == 4);
  CHECK(log_csv(r1.log) == log_csv(r2.log));
  CHECK(serialize_checkpoint(m1, {}) == serialize_checkpoint(m2, {}));
  CHECK(log_csv(r1.log).rfind("step,L,D,R_y,R_z,lr\n", 0) == 0);
}

TEST_CASE("short run lowers the loss and reaches every parameter") {
  const auto data = dataset(4);
  Model<float> model(tiny(), 8);
  auto cfg = quick(60);
  const auto r = train(model, data, cfg);
  std::vector<double> first, last;
  for (int i = 0; i < 15; ++i) {
    first.push_back(r.log[i].L);
    last.push_back(r.log[r.log.size() - 1 - i].L);
  }
  CHECK(median(last) < median(first));
  CHECK(r.dead_parameters.empty());
  CHECK(r.warnings.empty());
}

TEST_CASE("non-standard lambda warns") {
  Model<float> model(tiny(), 8);
  auto cfg = quick(1);
  cfg.lambda = 300;
  CHECK(train(model, dataset(1), cfg).warnings.size() == 1);
}

TEST_CASE("non-finite loss reports the step") {
  Model<float> model(tiny(), 9);
  auto cfg = quick(3);
  cfg.lambda = 1e300;  // float overflow on the distortion term
  try {
    train(model, dataset(1), cfg);
    FAIL("expected a training fault");
  } catch (const TrainingFault& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("checkpoints carry the run metadata") {
  const auto dir = temp_dir("ckpt");
  Model<float> model(tiny(), 10);
  auto cfg = quick(4);
  cfg.checkpoint_every = 2;
  cfg.out_dir = dir.string();
  const auto r = train(model, dataset(2), cfg, {{"note", "x"}});
  REQUIRE(r.checkpoints.size() == 2);
  CHECK(std::filesystem::exists(dir / "log.csv"));
  const auto mid = load_checkpoint(r.checkpoints[0]);
  CHECK(mid.metadata.at("total_steps") == "2");
  const auto fin = load_checkpoint(r.checkpoints[1]);
  CHECK(fin.metadata.at("total_steps") == "4");
  CHECK(fin.metadata.at("lambda") == "512");
  CHECK(fin.metadata.at("distortion") == "mse");
  CHECK(fin.metadata.at("seed") == "5");
  CHECK(fin.metadata.at("note") == "x");
  CHECK(serialize_checkpoint(*fin.model, {}) == serialize_checkpoint(model, {}));
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero-step finetune keeps the weights and marks ms_ssim") {
  const auto dir = temp_dir("ft");
  Model<float> model(tiny(), 12);
  const auto before = serialize_checkpoint(model, {});
  auto cfg = quick(0);
  cfg.out_dir = dir.string();
  const auto r = finetune_msssim(model, dataset(1), cfg, {{"total_steps", "4"}});
  CHECK(serialize_checkpoint(model, {}) == before);
  REQUIRE(r.checkpoints.size() == 1);
  const auto ck = load_checkpoint(r.checkpoints[0]);
  CHECK(ck.metadata.at("distortion") == "ms_ssim");
  CHECK(ck.metadata.at("total_steps") == "4");
  CHECK(serialize_checkpoint(*ck.model, {}) == before);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ms_ssim finetune steps run") {
  Model<float> model(tiny(), 13);
  const auto r = finetune_msssim(model, dataset(2), quick(2));
  REQUIRE(r.log.size() == 2);
  CHECK(r.log[0].D > 0);
  CHECK(r.log[0].D < 2);
}

TEST_CASE("bad inputs are rejected before training") {
  Model<float> model(tiny(), 14);
  CHECK_THROWS_AS(train(model, {}, quick(1)), ParameterError);
  auto cfg = quick(1);
  cfg.crop_size = 128;
  CHECK_THROWS_AS(train(model, dataset(1), cfg), ParameterError);
}

TEST_CASE("ms_ssim finetune does not lower held-out ms-ssim") {
  const auto data = dataset(16);
  std::vector<StereoPair> held_out;
  for (int i = 0; i < 4; ++i) {
    SyntheticSpec s;
    s.seed = 9000 + i;
    held_out.push_back(generate_synthetic_pair(s));
  }
  auto score = [&](const Model<float>& m) {
    double total = 0;
    for (const auto& p : held_out) {
      const auto x = to_batch(std::vector<StereoPair>{p});
      total += eval::ms_ssim_views(x, codec::quantized_reconstruction(m, x)).avg;
    }
    return total / static_cast<double>(held_out.size());
  };
  Model<float> model(tiny(), 21);
  auto cfg = quick(150);
  cfg.batch_size = 4;
  train(model, data, cfg);
  const double before = score(model);
  auto ft = quick(60);
  ft.batch_size = 4;
  ft.lambda = 16;
  finetune_msssim(model, data, ft);
  const double after = score(model);
  MESSAGE("held-out ms-ssim " << before << " -> " << after);
  CHECK(after >= before);
}
