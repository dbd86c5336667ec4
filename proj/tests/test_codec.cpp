#include <cmath>
#include <random>

#include "bisic/codec.hpp"
#include "bisic/data.hpp"
#include "doctest.h"

using namespace bisic;

namespace {

ModelConfig tiny(CodingMode mode) {
  ModelConfig c;
  c.N = 16;
  c.M = 16;
  c.K = 2;
  c.mode = mode;
  c.attention_embed = 8;
  c.channel_context_width = 32;
  c.context_width = 16;
  return c;
}

Tensor<float> pair_tensor(uint64_t seed, int64_t size = 64) {
  SyntheticSpec s;
  s.seed = seed;
  s.height = size;
  s.width = size;
  return to_batch(std::vector<StereoPair>{generate_synthetic_pair(s)});
}

double max_diff(const Tensor<float>& a, const Tensor<float>& b) { return max_abs_diff(a, b); }

}  // namespace

TEST_CASE("container round trip") {
  codec::Container c;
  c.header = {CodingMode::kCKBD, 128, 192, 32, 24, 4};
  c.streams = {std::vector<uint8_t>{1, 2}, {}, std::vector<uint8_t>(300, 7), {9}};
  const auto bytes = codec::pack(c);
  CHECK(bytes.size() == codec::kHeaderBytes + 16 + 2 + 300 + 1);
  const auto d = codec::unpack(bytes);
  CHECK(d.header.mode == CodingMode::kCKBD);
  CHECK(d.header.height == 128);
  CHECK(d.header.width == 192);
  CHECK(d.header.N == 32);
  CHECK(d.header.M == 24);
  CHECK(d.header.K == 4);
  CHECK(d.streams == c.streams);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(codec::unpack(bad), FormatError);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(codec::unpack(cut), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(codec::unpack(extra), FormatError);
  auto ver = bytes;
  ver[4] = 9;
  CHECK_THROWS_AS(codec::unpack(ver), FormatError);
}

TEST_CASE("round trip, counters and rate consistency") {
  for (CodingMode mode : {CodingMode::kAR, CodingMode::kCKBD}) {
    CAPTURE(to_string(mode));
    const Model<float> model(tiny(mode), 3);
    for (uint64_t seed : {1u, 2u}) {
      const auto x = pair_tensor(seed);
      const auto enc = codec::compress(model, x);
      const auto dec = codec::decompress(model, enc.bytes);
      CHECK(dec.y_hat == enc.y_hat);
      CHECK(dec.z_hat == enc.z_hat);
      CHECK(max_diff(dec.x_hat, codec::quantized_reconstruction(model, x)) == 0.0);

      const int64_t per_view = mode == CodingMode::kAR ? 4 * 4 : 2;
      for (const auto& s : dec.stats.evals.per_slice) {
        CHECK(s[0] == per_view);
        CHECK(s[1] == per_view);
      }
      uint64_t payload = 0;
      for (int s = 0; s < 4; ++s) {
        const auto& st = enc.stats.streams[static_cast<size_t>(s)];
        CAPTURE(codec::stream_name(s));
        CHECK(st.measured_bits >= st.estimate_bits);
        CHECK(st.measured_bits <= st.estimate_bits * 1.02 + 128);
        CHECK(dec.stats.streams[static_cast<size_t>(s)].estimate_bits == st.estimate_bits);
        payload += st.measured_bits;
      }
      CHECK(8 * enc.bytes.size() == payload + 8 * (codec::kHeaderBytes + 16));
    }
  }
}

TEST_CASE("rate estimate from the forward pass matches the coded tables") {
  const Model<float> model(tiny(CodingMode::kAR), 4);
  const auto x = pair_tensor(5);
  const auto enc = codec::compress(model, x);
  NoGradGuard ng;
  const auto out = model.forward(Var<float>::constant(x), Quantizer::kRound, nullptr, false);
  const double est_y = rate_bits(out.p_y).value().item();
  const double coded_y = enc.stats.streams[2].estimate_bits + enc.stats.streams[3].estimate_bits;
  // Table quantization and the check words make the coded estimate a bit larger.
  CHECK(coded_y >= est_y * 0.98);
  CHECK(coded_y <= est_y * 1.05 + 200);
}

TEST_CASE("wrong model or mode is a format error") {
  const Model<float> ar(tiny(CodingMode::kAR), 3);
  const Model<float> ckbd(tiny(CodingMode::kCKBD), 3);
  ModelConfig other = tiny(CodingMode::kAR);
  other.K = 4;
  const Model<float> k4(other, 3);
  const auto enc = codec::compress(ar, pair_tensor(1));
  CHECK_THROWS_AS(codec::decompress(ckbd, enc.bytes), FormatError);
  CHECK_THROWS_AS(codec::decompress(k4, enc.bytes), FormatError);
  CHECK_THROWS_AS(codec::compress(ar, Tensor<float>(Shape{1, 3, 2, 48, 64})), ShapeError);
}

TEST_CASE("corruption never yields a silent wrong image") {
  const Model<float> model(tiny(CodingMode::kCKBD), 7);
  const auto enc = codec::compress(model, pair_tensor(9));
  const auto clean = codec::decompress(model, enc.bytes);
  std::mt19937_64 rng(1);
  int detected = 0, silent = 0, harmless = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto b = enc.bytes;
    const size_t pos = codec::kHeaderBytes + rng() % (b.size() - codec::kHeaderBytes);
    b[pos] ^= static_cast<uint8_t>(1 + rng() % 255);
    try {
      const auto d = codec::decompress(model, b);
      if (d.y_hat == clean.y_hat) {
        ++harmless;
      } else {
        ++silent;
      }
    } catch (const IntegrityError&) {
      ++detected;
    } catch (const FormatError&) {
      ++detected;
    }
  }
  INFO("detected " << detected << " harmless " << harmless);
  CHECK(silent == 0);
}

TEST_CASE("backends produce identical streams") {
  const Model<float> model(tiny(CodingMode::kAR), 3);
  const auto x = pair_tensor(4);
  codec::Options native;
  native.backend = rc::select_backend(rc::BackendChoice::kNative, BISIC_NATIVE_SHIM);
  const auto a = codec::compress(model, x);
  const auto b = codec::compress(model, x, native);
  CHECK(a.bytes == b.bytes);
  CHECK(codec::decompress(model, a.bytes, native).y_hat == a.y_hat);
}

TEST_CASE("zero latents cost less than random ones under the same tables") {
  std::mt19937_64 rng(3);
  const auto c = rc::gaussian_cdf(0.0, 1.0);
  std::vector<int> zeros(4000, 128), random(4000);
  for (auto& v : random) v = static_cast<int>(rng() % 256);
  const std::vector<rc::Cdf> cdfs(4000, c);
  CHECK(rc::encode_all(zeros, cdfs).size() < rc::encode_all(random, cdfs).size());
}

TEST_CASE("escaped values round trip") {
  const Model<float> model(tiny(CodingMode::kAR), 3);
  // A hugely scaled input pushes latents past the table range.
  auto x = pair_tensor(2);
  for (auto& v : x.values()) v *= 1e5f;
  const auto enc = codec::compress(model, x);
  float max_abs = 0;
  for (float v : enc.y_hat.values()) max_abs = std::max(max_abs, std::abs(v));
  int64_t escapes = 0;
  for (const auto& s : enc.stats.streams) escapes += s.escapes;
  CAPTURE(max_abs);
  CHECK(escapes > 0);
  const auto dec = codec::decompress(model, enc.bytes);
  CHECK(dec.y_hat == enc.y_hat);
}
