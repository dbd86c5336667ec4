#include "bisic/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "bisic/errors.hpp"
#include "bisic/io.hpp"

namespace bisic {

namespace {

int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {  // inclusive
  return lo + static_cast<int64_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
}

// Band-limited sinusoid field plus flat rectangles, [3, H, W].
Tensor<float> make_texture(int64_t H, int64_t W, std::mt19937_64& rng) {
  constexpr int kWaves = 10;
  constexpr int kRects = 14;
  struct Wave {
    double fx, fy, phase, amp;
    std::array<double, 3> tint;
  };
  std::vector<Wave> waves(kWaves);
  double amp_total = 0;
  for (auto& wv : waves) {
    // Periods between 6 and ~64 pixels.
    const double freq = 1.0 / (6.0 + 58.0 * uniform01(rng));
    const double angle = std::numbers::pi * uniform01(rng);
    wv.fx = freq * std::cos(angle);
    wv.fy = freq * std::sin(angle);
    wv.phase = 2 * std::numbers::pi * uniform01(rng);
    wv.amp = 0.3 + uniform01(rng);
    for (auto& t : wv.tint) t = 0.6 + 0.4 * uniform01(rng);
    amp_total += wv.amp;
  }
  Tensor<float> tex(Shape{3, H, W});
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      std::array<double, 3> s{0, 0, 0};
      for (const auto& wv : waves) {
        const double v = wv.amp * std::sin(2 * std::numbers::pi * (wv.fx * x + wv.fy * y) + wv.phase);
        for (int c = 0; c < 3; ++c) s[c] += v * wv.tint[c];
      }
      for (int c = 0; c < 3; ++c) {
        tex[(c * H + y) * W + x] = static_cast<float>(0.5 + 0.45 * s[c] / amp_total);
      }
    }
  }
  for (int r = 0; r < kRects; ++r) {
    const int64_t h = uniform_int(rng, 4, std::max<int64_t>(4, H / 3));
    const int64_t w = uniform_int(rng, 4, std::max<int64_t>(4, W / 3));
    const int64_t y0 = uniform_int(rng, 0, H - 1);
    const int64_t x0 = uniform_int(rng, 0, W - 1);
    std::array<float, 3> color;
    for (auto& c : color) c = static_cast<float>(0.05 + 0.9 * uniform01(rng));
    for (int64_t y = y0; y < std::min(H, y0 + h); ++y) {
      for (int64_t x = x0; x < std::min(W, x0 + w); ++x) {
        for (int c = 0; c < 3; ++c) tex[(c * H + y) * W + x] = color[static_cast<size_t>(c)];
      }
    }
  }
  return tex;
}

void add_noise(Tensor<float>& img, double level, std::mt19937_64& rng) {
  if (level <= 0) return;
  for (auto& v : img.values()) {
    const double n = level * (2 * uniform01(rng) - 1);
    v = static_cast<float>(std::clamp(static_cast<double>(v) + n, 0.0, 1.0));
  }
}

}  // namespace

void SyntheticSpec::validate() const {
  if (height <= 0 || height % 64 != 0) {
    throw ParameterError("synthetic height must be a positive multiple of 64, got " + std::to_string(height));
  }
  if (width <= 0 || width % 64 != 0) {
    throw ParameterError("synthetic width must be a positive multiple of 64, got " + std::to_string(width));
  }
  if (disparity < 0 || 4 * disparity >= width) {
    throw ParameterError("disparity must satisfy 0 <= disparity < width/4, got " + std::to_string(disparity) +
                         " for width " + std::to_string(width));
  }
  if (!(noise_level >= 0 && noise_level <= 1)) throw ParameterError("noise_level must be in [0, 1]");
  if (!(occlusion_fraction >= 0 && occlusion_fraction <= 1)) {
    throw ParameterError("occlusion_fraction must be in [0, 1]");
  }
}

StereoPair generate_synthetic_pair(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const int64_t H = spec.height;
  const int64_t W = spec.width;
  const int64_t d = spec.disparity;
  const Tensor<float> world = make_texture(H, W + d, rng);

  StereoPair pair;
  pair.left = Tensor<float>(Shape{3, H, W});
  pair.right = Tensor<float>(Shape{3, H, W});
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        pair.left[(c * H + y) * W + x] = world[(c * H + y) * (W + d) + x];
        pair.right[(c * H + y) * W + x] = world[(c * H + y) * (W + d) + x + d];
      }
    }
  }

  // Occluded regions in the right view show content the left view never sees.
  const auto target = static_cast<int64_t>(std::llround(spec.occlusion_fraction * static_cast<double>(H * W)));
  if (target > 0) {
    const Tensor<float> other = make_texture(H, W, rng);
    std::vector<uint8_t> covered(static_cast<size_t>(H * W), 0);
    int64_t count = 0;
    while (count < target) {
      const int64_t h = uniform_int(rng, 4, std::max<int64_t>(4, H / 4));
      const int64_t w = uniform_int(rng, 4, std::max<int64_t>(4, W / 4));
      const int64_t y0 = uniform_int(rng, 0, H - 1);
      const int64_t x0 = uniform_int(rng, 0, W - 1);
      for (int64_t y = y0; y < std::min(H, y0 + h) && count < target; ++y) {
        for (int64_t x = x0; x < std::min(W, x0 + w) && count < target; ++x) {
          auto& cov = covered[static_cast<size_t>(y * W + x)];
          if (cov) continue;
          cov = 1;
          ++count;
          for (int64_t c = 0; c < 3; ++c) pair.right[(c * H + y) * W + x] = other[(c * H + y) * W + x];
        }
      }
    }
  }
  add_noise(pair.left, spec.noise_level, rng);
  add_noise(pair.right, spec.noise_level, rng);
  pair.source = "synthetic:" + std::to_string(spec.seed);
  pair.disparity = static_cast<float>(spec.disparity);
  return pair;
}

CropRule parse_crop_rule(const std::string& s) {
  if (s == "divisible64") return CropRule::kDivisible64;
  if (s == "cityscapes") return CropRule::kCityscapes;
  throw ParameterError("crop rule must be divisible64 or cityscapes, got '" + s + "'");
}

StereoPair crop(const StereoPair& pair, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  const int64_t H = pair.height();
  const int64_t W = pair.width();
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > H || x0 + w > W) {
    throw ShapeError("crop window out of bounds for " + std::to_string(H) + "x" + std::to_string(W));
  }
  StereoPair out;
  out.source = pair.source;
  out.disparity = pair.disparity;
  for (const auto* src : {&pair.left, &pair.right}) {
    Tensor<float> t(Shape{3, h, w});
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < h; ++y) {
        std::copy_n(src->data() + (c * H + y0 + y) * W + x0, w, t.data() + (c * h + y) * w);
      }
    }
    (src == &pair.left ? out.left : out.right) = std::move(t);
  }
  return out;
}

StereoPair preprocess(const StereoPair& pair, CropRule rule) {
  if (pair.left.shape() != pair.right.shape()) throw ShapeError("stereo views differ in shape");
  const int64_t H = pair.height();
  const int64_t W = pair.width();
  if (H < 64 || W < 64) {
    throw ShapeError("image " + std::to_string(H) + "x" + std::to_string(W) + " is smaller than 64x64");
  }
  int64_t y0 = 0, x0 = 0, h = H, w = W;
  if (rule == CropRule::kDivisible64) {
    h = H / 64 * 64;
    w = W / 64 * 64;
    y0 = (H - h) / 2;
    x0 = (W - w) / 2;
  } else {
    y0 = 64;
    x0 = 128;
    h = H - 64 - 256;
    w = W - 256;
    if (h < 64 || w < 64) {
      throw ShapeError("cityscapes crop of " + std::to_string(H) + "x" + std::to_string(W) +
                       " leaves less than 64x64");
    }
    if (h % 64 != 0 || w % 64 != 0) {
      throw ShapeError("cityscapes crop gives " + std::to_string(h) + "x" + std::to_string(w) +
                       ", not divisible by 64");
    }
  }
  if (h == H && w == W) return pair;
  return crop(pair, y0, x0, h, w);
}

StereoPair random_crop(const StereoPair& pair, int64_t size, std::mt19937_64& rng, int64_t align) {
  const int64_t ny = (pair.height() - size) / align;
  const int64_t nx = (pair.width() - size) / align;
  if (ny < 0 || nx < 0) throw ShapeError("crop size " + std::to_string(size) + " exceeds image");
  const int64_t y0 = uniform_int(rng, 0, ny) * align;
  const int64_t x0 = uniform_int(rng, 0, nx) * align;
  return crop(pair, y0, x0, size, size);
}

namespace {

Tensor<float> read_rgb(const std::string& path, const std::string& other) {
  const cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IoError("cannot decode '" + path + "' (pair with '" + other + "')");
  if (img.depth() != CV_8U || img.channels() != 3) {
    throw IoError("'" + path + "' is not 8-bit RGB (pair with '" + other + "')");
  }
  const int64_t H = img.rows;
  const int64_t W = img.cols;
  Tensor<float> t(Shape{3, H, W});
  for (int64_t y = 0; y < H; ++y) {
    const auto* row = img.ptr<cv::Vec3b>(static_cast<int>(y));
    for (int64_t x = 0; x < W; ++x) {
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) t[(c * H + y) * W + x] = static_cast<float>(row[x][2 - c]) / 255.0f;
    }
  }
  return t;
}

}  // namespace

StereoPair load_pair(const std::string& path_left, const std::string& path_right) {
  StereoPair pair;
  pair.left = read_rgb(path_left, path_right);
  pair.right = read_rgb(path_right, path_left);
  if (pair.left.shape() != pair.right.shape()) {
    throw IoError("'" + path_left + "' is " + shape_str(pair.left.shape()) + " but '" + path_right + "' is " +
                  shape_str(pair.right.shape()));
  }
  pair.source = path_left;
  return pair;
}

std::vector<uint8_t> encode_png(const Tensor<float>& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) throw ShapeError("expected [3, H, W], got " + shape_str(image.shape()));
  const int64_t H = image.dim(1);
  const int64_t W = image.dim(2);
  cv::Mat img(static_cast<int>(H), static_cast<int>(W), CV_8UC3);
  for (int64_t y = 0; y < H; ++y) {
    auto* row = img.ptr<cv::Vec3b>(static_cast<int>(y));
    for (int64_t x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image[(c * H + y) * W + x], 0.0f, 1.0f);
        row[x][2 - c] = static_cast<uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  std::vector<uint8_t> buf;
  if (!cv::imencode(".png", img, buf)) throw IoError("PNG encoding failed");
  return buf;
}

void save_image(const std::string& path, const Tensor<float>& image) {
  io::write_file_atomic(path, encode_png(image));
}

Tensor<float> to_batch(const std::vector<StereoPair>& pairs) {
  if (pairs.empty()) throw ShapeError("empty batch");
  const Shape s = pairs[0].left.shape();
  const int64_t H = s[1], W = s[2], B = static_cast<int64_t>(pairs.size());
  Tensor<float> out(Shape{B, 3, 2, H, W});
  const int64_t plane = H * W;
  for (int64_t b = 0; b < B; ++b) {
    const auto& p = pairs[static_cast<size_t>(b)];
    if (p.left.shape() != s || p.right.shape() != s) throw ShapeError("batch items differ in shape");
    for (int64_t c = 0; c < 3; ++c) {
      std::copy_n(p.left.data() + c * plane, plane, out.data() + ((b * 3 + c) * 2 + 0) * plane);
      std::copy_n(p.right.data() + c * plane, plane, out.data() + ((b * 3 + c) * 2 + 1) * plane);
    }
  }
  return out;
}

StereoPair from_batch(const Tensor<float>& batch, int64_t b) {
  if (batch.ndim() != 5 || batch.dim(1) != 3 || batch.dim(2) != 2) {
    throw ShapeError("expected [B, 3, 2, H, W], got " + shape_str(batch.shape()));
  }
  const int64_t H = batch.dim(3), W = batch.dim(4), plane = H * W;
  StereoPair p;
  p.left = Tensor<float>(Shape{3, H, W});
  p.right = Tensor<float>(Shape{3, H, W});
  for (int64_t c = 0; c < 3; ++c) {
    std::copy_n(batch.data() + ((b * 3 + c) * 2 + 0) * plane, plane, p.left.data() + c * plane);
    std::copy_n(batch.data() + ((b * 3 + c) * 2 + 1) * plane, plane, p.right.data() + c * plane);
  }
  return p;
}

}  // namespace bisic
