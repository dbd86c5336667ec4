#include <cmath>
#include <filesystem>

#include "bisic/data.hpp"
#include "doctest.h"

using namespace bisic;

TEST_CASE("zero disparity, noise and occlusion gives identical views") {
  SyntheticSpec s;
  s.seed = 3;
  s.disparity = 0;
  s.noise_level = 0;
  s.occlusion_fraction = 0;
  const auto p = generate_synthetic_pair(s);
  CHECK(p.left == p.right);
}

TEST_CASE("clean synthetic pair is a pure horizontal shift") {
  SyntheticSpec s;
  s.seed = 11;
  s.width = 128;
  s.disparity = 13;
  s.noise_level = 0;
  s.occlusion_fraction = 0;
  const auto p = generate_synthetic_pair(s);
  const int64_t H = p.height(), W = p.width();
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t j = 0; j + s.disparity < W; ++j)
        REQUIRE(p.right[(c * H + y) * W + j] == p.left[(c * H + y) * W + j + s.disparity]);
}

TEST_CASE("cross-correlation peaks at the generated disparity") {
  SyntheticSpec s;
  s.seed = 7;
  s.disparity = 8;
  const auto p = generate_synthetic_pair(s);
  const int64_t H = p.height(), W = p.width();
  // Brute force: normalized correlation of left[:, :, j+d] with right[:, :, j].
  int best = -1;
  double best_score = -2;
  for (int d = 0; d < 32; ++d) {
    double sl = 0, sr = 0, sll = 0, srr = 0, slr = 0, n = 0;
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t j = 0; j + d < W; ++j) {
          const double a = p.left[(c * H + y) * W + j + d], b = p.right[(c * H + y) * W + j];
          sl += a, sr += b, sll += a * a, srr += b * b, slr += a * b, n += 1;
        }
    const double cov = slr / n - sl / n * sr / n;
    const double score = cov / std::sqrt((sll / n - sl * sl / n / n) * (srr / n - sr * sr / n / n));
    if (score > best_score) best_score = score, best = d;
  }
  CHECK(best == 8);
}

TEST_CASE("synthetic pairs are deterministic and bounded") {
  SyntheticSpec s;
  s.seed = 99;
  s.height = 128;
  s.width = 192;
  s.disparity = 20;
  const auto a = generate_synthetic_pair(s);
  const auto b = generate_synthetic_pair(s);
  CHECK(a.left == b.left);
  CHECK(a.right == b.right);
  CHECK(a.left.shape() == Shape{3, 128, 192});
  CHECK(a.right.shape() == Shape{3, 128, 192});
  for (float v : a.left.values()) REQUIRE((v >= 0.0f && v <= 1.0f));
  for (float v : a.right.values()) REQUIRE((v >= 0.0f && v <= 1.0f));
  s.seed = 100;
  CHECK_FALSE(generate_synthetic_pair(s).left == a.left);
}

TEST_CASE("invalid synthetic specs name the violated bound") {
  SyntheticSpec s;
  s.height = 60;
  CHECK_THROWS_WITH_AS(generate_synthetic_pair(s), doctest::Contains("height"), ParameterError);
  s = {};
  s.disparity = 16;  // width 64 -> must be < 16
  CHECK_THROWS_WITH_AS(generate_synthetic_pair(s), doctest::Contains("disparity"), ParameterError);
  s = {};
  s.noise_level = 1.5;
  CHECK_THROWS_AS(generate_synthetic_pair(s), ParameterError);
}

namespace {
StereoPair blank(int64_t H, int64_t W) {
  StereoPair p;
  p.left = Tensor<float>(Shape{3, H, W});
  p.right = Tensor<float>(Shape{3, H, W});
  for (int64_t i = 0; i < p.left.numel(); ++i) p.left[i] = static_cast<float>(i % 251) / 251.0f;
  p.right = p.left;
  return p;
}
}  // namespace

TEST_CASE("preprocess crop rules") {
  auto a = preprocess(blank(1080, 860), CropRule::kDivisible64);
  CHECK(a.height() == 1024);
  CHECK(a.width() == 832);
  // Center crop: offsets (28, 14).
  const auto src = blank(1080, 860);
  CHECK(a.left[0] == src.left[28 * 860 + 14]);

  auto c = preprocess(blank(1024, 2048), CropRule::kCityscapes);
  CHECK(c.height() == 704);
  CHECK(c.width() == 1792);
  CHECK(c.left[0] == blank(1024, 2048).left[64 * 2048 + 128]);

  auto same = blank(64, 64);
  CHECK(preprocess(same, CropRule::kDivisible64).left == same.left);
  CHECK_THROWS_AS(preprocess(blank(63, 128), CropRule::kDivisible64), ShapeError);
  CHECK_THROWS_AS(preprocess(blank(256, 512), CropRule::kCityscapes), ShapeError);
}

TEST_CASE("PNG round trip and load_pair contract") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bisic_test_data";
  fs::create_directories(dir);
  SyntheticSpec s;
  s.seed = 5;
  const auto p = generate_synthetic_pair(s);
  const std::string l = (dir / "l.png").string(), r = (dir / "r.png").string();
  save_image(l, p.left);
  save_image(r, p.left);
  const auto q = load_pair(l, r);
  CHECK(q.left == q.right);
  // 8-bit quantization only.
  for (int64_t i = 0; i < p.left.numel(); ++i) REQUIRE(std::abs(q.left[i] - p.left[i]) <= 0.5f / 255.0f + 1e-6f);

  Tensor<float> white(Shape{3, 64, 64}, 1.0f);
  save_image(l, white);
  CHECK(load_pair(l, l).left[0] == 1.0f);

  save_image(r, Tensor<float>(Shape{3, 64, 128}, 0.5f));
  CHECK_THROWS_AS(load_pair(l, r), IoError);
  CHECK_THROWS_AS(load_pair(l, (dir / "missing.png").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("batch packing round trips") {
  SyntheticSpec s;
  std::vector<StereoPair> pairs;
  for (uint64_t i = 0; i < 3; ++i) {
    s.seed = i;
    pairs.push_back(generate_synthetic_pair(s));
  }
  const auto b = to_batch(pairs);
  CHECK(b.shape() == Shape{3, 3, 2, 64, 64});
  for (int64_t i = 0; i < 3; ++i) {
    const auto p = from_batch(b, i);
    CHECK(p.left == pairs[static_cast<size_t>(i)].left);
    CHECK(p.right == pairs[static_cast<size_t>(i)].right);
  }
}
