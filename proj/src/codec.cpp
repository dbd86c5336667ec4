#include "bisic/codec.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "bisic/io.hpp"

namespace bisic::codec {

std::string stream_name(int s) {
  static const char* names[4] = {"z-left", "z-right", "y-left", "y-right"};
  return names[s];
}

std::vector<uint8_t> pack(const Container& c) {
  std::vector<uint8_t> out{'B', 'S', 'I', 'C'};
  io::put_u8(out, kVersion);
  io::put_u8(out, static_cast<uint8_t>(c.header.mode));
  io::put_u16(out, c.header.height);
  io::put_u16(out, c.header.width);
  io::put_u16(out, c.header.N);
  io::put_u16(out, c.header.M);
  io::put_u8(out, c.header.K);
  for (const auto& s : c.streams) {
    if (s.size() > std::numeric_limits<uint32_t>::max()) throw FormatError("substream too large for the container");
    io::put_u32(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

Container unpack(std::span<const uint8_t> bytes, const std::string& what) {
  io::Reader r(bytes.data(), bytes.size(), what);
  if (bytes.size() < 4 || std::memcmp(r.bytes(4), "BSIC", 4) != 0) throw FormatError(what + ": bad magic");
  const uint8_t version = r.u8();
  if (version != kVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  Container c;
  const uint8_t mode = r.u8();
  if (mode > 1) throw FormatError(what + ": unknown coding mode " + std::to_string(mode));
  c.header.mode = static_cast<CodingMode>(mode);
  c.header.height = r.u16();
  c.header.width = r.u16();
  c.header.N = r.u16();
  c.header.M = r.u16();
  c.header.K = r.u8();
  if (c.header.height == 0 || c.header.width == 0 || c.header.height % 64 || c.header.width % 64) {
    throw FormatError(what + ": image size " + std::to_string(c.header.height) + "x" +
                      std::to_string(c.header.width) + " is not a positive multiple of 64");
  }
  for (auto& s : c.streams) {
    const uint32_t n = r.u32();
    const uint8_t* p = r.bytes(n);
    s.assign(p, p + n);
  }
  if (r.remaining() != 0) throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

uint32_t fnv1a_update(uint32_t h, int16_t v) {
  const auto u = static_cast<uint16_t>(v);
  for (uint8_t b : {static_cast<uint8_t>(u & 0xFF), static_cast<uint8_t>(u >> 8)}) {
    h ^= b;
    h *= 16777619u;
  }
  return h;
}

namespace {

// One substream: values in [-128, 127] map to their own symbol, anything
// else is an escape followed by the clamped int16 as two raw bytes. A
// check word over all values ends the stream.
class ValueStream {
 public:
  ValueStream(std::unique_ptr<rc::SymbolSink> sink, SubstreamStats* stats, int64_t* clamped)
      : sink_(std::move(sink)), stats_(stats), clamped_(clamped) {}
  ValueStream(std::unique_ptr<rc::SymbolSource> source, SubstreamStats* stats, int64_t* clamped)
      : source_(std::move(source)), stats_(stats), clamped_(clamped) {}

  bool encoding() const { return sink_ != nullptr; }

  // Encoding: codes `value` and returns what the decoder will see.
  // Decoding: ignores `value` and returns the decoded one.
  int code(std::span<const uint32_t> cdf, int value) {
    int out;
    if (encoding()) {
      if (value >= rc::kMinValue && value <= rc::kMaxValue) {
        put(cdf, value - rc::kMinValue);
        out = value;
      } else {
        put(cdf, rc::kEscape);
        const int clamped = std::clamp(value, -32768, 32767);
        if (clamped != value) ++*clamped_;
        const auto u = static_cast<uint16_t>(static_cast<int16_t>(clamped));
        put(rc::uniform_byte_cdf(), u & 0xFF);
        put(rc::uniform_byte_cdf(), u >> 8);
        ++stats_->escapes;
        out = clamped;
      }
    } else {
      const int s = get(cdf);
      if (s == rc::kEscape) {
        const int lo = get(rc::uniform_byte_cdf());
        const int hi = get(rc::uniform_byte_cdf());
        out = static_cast<int16_t>(static_cast<uint16_t>(lo | (hi << 8)));
        ++stats_->escapes;
      } else {
        out = s + rc::kMinValue;
      }
    }
    ++stats_->symbols;
    hash_ = fnv1a_update(hash_, static_cast<int16_t>(out));
    return out;
  }

  std::vector<uint8_t> finish_encode() {
    const uint32_t h = hash_;
    for (int i = 0; i < 4; ++i) put(rc::uniform_byte_cdf(), static_cast<int>((h >> (8 * i)) & 0xFF));
    auto bytes = sink_->finish();
    stats_->measured_bits = 8 * bytes.size();
    return bytes;
  }

  // Throws IntegrityError on a check-word mismatch.
  void finish_decode(const std::string& name, size_t size) {
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(get(rc::uniform_byte_cdf())) << (8 * i);
    source_->finish();
    if (stored != hash_) {
      throw IntegrityError(name + " substream failed its check word: decoded values differ from the encoded ones");
    }
    stats_->measured_bits = 8 * size;
  }

 private:
  void put(std::span<const uint32_t> cdf, int symbol) {
    stats_->estimate_bits += rc::symbol_bits(cdf, symbol);
    sink_->put(cdf, symbol);
  }
  int get(std::span<const uint32_t> cdf) {
    const int s = source_->get(cdf);
    stats_->estimate_bits += rc::symbol_bits(cdf, s);
    return s;
  }

  std::unique_ptr<rc::SymbolSink> sink_;
  std::unique_ptr<rc::SymbolSource> source_;
  SubstreamStats* stats_;
  int64_t* clamped_;
  uint32_t hash_ = kFnvOffset;
};

Tensor<float> column(const Tensor<float>& t, int64_t r, int64_t c) {
  const int64_t C = t.dim(1);
  Tensor<float> out(Shape{1, C, 2, 1, 1});
  for (int64_t ch = 0; ch < C; ++ch)
    for (int v = 0; v < 2; ++v) out.at(0, ch, v, 0, 0) = t.at(0, ch, v, r, c);
  return out;
}

// 5x5 neighbourhood of (r, c) in channels [c0, c0 + S), zero outside.
Tensor<float> window(const Tensor<float>& y, int64_t c0, int64_t S, int64_t r, int64_t c) {
  const int64_t h = y.dim(3), w = y.dim(4);
  Tensor<float> out(Shape{1, S, 2, 5, 5});
  for (int64_t ch = 0; ch < S; ++ch)
    for (int v = 0; v < 2; ++v)
      for (int64_t a = 0; a < 5; ++a) {
        const int64_t rr = r + a - 2;
        if (rr < 0 || rr >= h) continue;
        for (int64_t b = 0; b < 5; ++b) {
          const int64_t cc = c + b - 2;
          if (cc >= 0 && cc < w) out.at(0, ch, v, a, b) = y.at(0, c0 + ch, v, rr, cc);
        }
      }
  return out;
}

int to_int(float v) { return static_cast<int>(std::clamp(std::nearbyint(v), -1e6f, 1e6f)); }

// Runs the coding protocol. When encoding, `src_y` / `src_z` hold the
// rounded latents; the working buffers are filled in decode order either
// way, so both directions evaluate the entropy model on identical inputs.
class Protocol {
 public:
  Protocol(const Model<float>& model, const rc::Backend& backend, std::array<ValueStream*, 4> streams,
           CodecStats* stats)
      : model_(model), backend_(backend), streams_(streams), stats_(stats) {}

  void run(int64_t h, int64_t w, const Tensor<float>* src_z, const Tensor<float>* src_y) {
    const ModelConfig& cfg = model_.config();
    z_ = Tensor<float>(Shape{1, cfg.M, 2, h / 4, w / 4});
    y_ = Tensor<float>(Shape{1, cfg.N, 2, h, w});
    code_z(src_z);
    {
      NoGradGuard ng;
      zt_ = model_.backbone().hyper_decode(Var<float>::constant(z_)).value();
    }
    const auto& em = model_.entropy();
    stats_->evals.reset(em.slices());
    for (int k = 0; k < em.slices(); ++k) {
      if (em.mode() == CodingMode::kAR) {
        code_slice_ar(k, src_y);
      } else {
        code_slice_ckbd(k, src_y);
      }
    }
  }

  const Tensor<float>& y() const { return y_; }
  const Tensor<float>& z() const { return z_; }

 private:
  void code_z(const Tensor<float>* src) {
    const auto pmfs = model_.prior().pmf_table(rc::kMinValue, rc::kMaxValue);
    std::vector<rc::Cdf> cdfs;
    for (const auto& p : pmfs) cdfs.push_back(rc::table_cdf(p));
    const int64_t hz = z_.dim(3), wz = z_.dim(4);
    for (int v = 0; v < 2; ++v)
      for (int64_t c = 0; c < z_.dim(1); ++c)
        for (int64_t i = 0; i < hz * wz; ++i) {
          const int64_t r = i / wz, col = i % wz;
          const int in = src ? to_int(src->at(0, c, v, r, col)) : 0;
          z_.at(0, c, v, r, col) = static_cast<float>(streams_[kZLeft + v]->code(cdfs[static_cast<size_t>(c)], in));
        }
  }

  Var<float> theta(int k) const {
    const auto& em = model_.entropy();
    if (!em.uses_channel_context()) return Var<float>();
    const int64_t S = em.slice_channels();
    const Var<float> prev = k > 0 ? Var<float>::constant(narrow(y_, 1, 0, S * k)) : Var<float>();
    return em.channel_context(k, prev, 1, y_.dim(3), y_.dim(4));
  }

  void code_element(int v, int64_t ch, int64_t r, int64_t c, float mu, float sigma, const Tensor<float>* src,
                    int k) {
    const rc::Cdf cdf = backend_.gaussian_cdf(mu, sigma);
    const int in = src ? to_int(src->at(0, ch, v, r, c)) : 0;
    ValueStream& s = *streams_[kYLeft + v];
    try {
      y_.at(0, ch, v, r, c) = static_cast<float>(s.code(cdf, in));
    } catch (const CoderError& e) {
      if (s.encoding()) throw;
      throw IntegrityError(stream_name(kYLeft + v) + " diverged at slice " + std::to_string(k) + ", position (" +
                           std::to_string(r) + ", " + std::to_string(c) + "), channel " + std::to_string(ch) + ": " +
                           e.what());
    }
  }

  void code_slice_ar(int k, const Tensor<float>* src) {
    NoGradGuard ng;
    const auto& em = model_.entropy();
    const int64_t S = em.slice_channels(), h = y_.dim(3), w = y_.dim(4);
    const Var<float> th = theta(k);
    const Tensor<float> th_full = th.defined() ? th.value() : Tensor<float>();
    for (int64_t r = 0; r < h; ++r) {
      for (int64_t c = 0; c < w; ++c) {
        const Var<float> ups = em.spatial_context_at(k, Var<float>::constant(window(y_, k * S, S, r, c)));
        const Var<float> th_at = th.defined() ? Var<float>::constant(column(th_full, r, c)) : Var<float>();
        const GaussianParams<float> p = em.aggregate(k, Var<float>::constant(column(zt_, r, c)), th_at, ups);
        stats_->evals.add(k);
        for (int v = 0; v < 2; ++v)
          for (int64_t ch = 0; ch < S; ++ch) {
            code_element(v, k * S + ch, r, c, p.mu.value().at(0, ch, v, 0, 0), p.sigma.value().at(0, ch, v, 0, 0),
                         src, k);
          }
      }
    }
  }

  void code_slice_ckbd(int k, const Tensor<float>* src) {
    NoGradGuard ng;
    const auto& em = model_.entropy();
    const int64_t S = em.slice_channels(), h = y_.dim(3), w = y_.dim(4);
    const Var<float> th = theta(k);
    const Var<float> zt = Var<float>::constant(zt_);
    auto pass = [&](const GaussianParams<float>& p, bool anchors) {
      for (int v = 0; v < 2; ++v)
        for (int64_t r = 0; r < h; ++r)
          for (int64_t c = 0; c < w; ++c) {
            if (is_anchor(r, c) != anchors) continue;
            for (int64_t ch = 0; ch < S; ++ch) {
              code_element(v, k * S + ch, r, c, p.mu.value().at(0, ch, v, r, c), p.sigma.value().at(0, ch, v, r, c),
                           src, k);
            }
          }
    };
    const GaussianParams<float> a = em.anchor_params(k, zt, th);
    stats_->evals.add(k);
    pass(a, true);
    Tensor<float> anchors = narrow(y_, 1, k * S, S);
    for (int64_t i = 0; i < anchors.numel(); ++i) {
      const int64_t c = i % w, r = (i / w) % h;
      if (!is_anchor(r, c)) anchors[i] = 0;
    }
    const GaussianParams<float> n =
        em.nonanchor_params(k, zt, th, em.anchor_context(k, Var<float>::constant(std::move(anchors))));
    stats_->evals.add(k);
    pass(n, false);
  }

  const Model<float>& model_;
  const rc::Backend& backend_;
  std::array<ValueStream*, 4> streams_;
  CodecStats* stats_;
  Tensor<float> z_, y_, zt_;
};

const rc::Backend& backend_of(const Options& opt) { return opt.backend ? *opt.backend : rc::reference_backend(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Encoded compress(const Model<float>& model, const Tensor<float>& x, const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model.config();
  if (x.ndim() != 5 || x.dim(0) != 1 || x.dim(1) != 3 || x.dim(2) != 2) {
    throw ShapeError("compress expects one stereo pair [1, 3, 2, H, W], got " + shape_str(x.shape()));
  }
  const int64_t H = x.dim(3), W = x.dim(4);
  if (H % 64 || W % 64 || H <= 0 || W <= 0 || H > 65535 || W > 65535) {
    throw ShapeError("compress needs H and W to be positive multiples of 64 below 65536, got " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  Tensor<float> y_round, z_round;
  {
    NoGradGuard ng;
    const Var<float> y = model.backbone().encode(Var<float>::constant(x));
    const Var<float> z = model.backbone().hyper_encode(y);
    y_round = quantize(y, Quantizer::kRound, nullptr).value();
    z_round = quantize(z, Quantizer::kRound, nullptr).value();
  }
  const rc::Backend& backend = backend_of(opt);
  Encoded out;
  std::array<std::unique_ptr<ValueStream>, 4> owned;
  std::array<ValueStream*, 4> streams{};
  for (int s = 0; s < 4; ++s) {
    owned[static_cast<size_t>(s)] =
        std::make_unique<ValueStream>(backend.encoder(), &out.stats.streams[static_cast<size_t>(s)], &out.stats.clamped);
    streams[static_cast<size_t>(s)] = owned[static_cast<size_t>(s)].get();
  }
  Protocol proto(model, backend, streams, &out.stats);
  proto.run(H / 16, W / 16, &z_round, &y_round);

  Container c;
  c.header = {cfg.mode, static_cast<uint16_t>(H), static_cast<uint16_t>(W), static_cast<uint16_t>(cfg.N),
              static_cast<uint16_t>(cfg.M), static_cast<uint8_t>(cfg.K)};
  for (int s = 0; s < 4; ++s) c.streams[static_cast<size_t>(s)] = streams[static_cast<size_t>(s)]->finish_encode();
  out.bytes = pack(c);
  out.y_hat = proto.y();
  out.z_hat = proto.z();
  out.stats.seconds = seconds_since(t0);
  return out;
}

Decoded decompress(const Model<float>& model, std::span<const uint8_t> bytes, const Options& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model.config();
  Container c = unpack(bytes);
  const Header& hd = c.header;
  if (hd.mode != cfg.mode || hd.N != cfg.N || hd.M != cfg.M || hd.K != cfg.K) {
    throw FormatError("bitstream was made for mode=" + to_string(hd.mode) + " N=" + std::to_string(hd.N) +
                      " M=" + std::to_string(hd.M) + " K=" + std::to_string(hd.K) + ", but the model has mode=" +
                      to_string(cfg.mode) + " N=" + std::to_string(cfg.N) + " M=" + std::to_string(cfg.M) +
                      " K=" + std::to_string(cfg.K));
  }
  const rc::Backend& backend = backend_of(opt);
  Decoded out;
  out.header = hd;
  std::array<std::unique_ptr<ValueStream>, 4> owned;
  std::array<ValueStream*, 4> streams{};
  for (int s = 0; s < 4; ++s) {
    const auto& b = c.streams[static_cast<size_t>(s)];
    try {
      owned[static_cast<size_t>(s)] = std::make_unique<ValueStream>(
          backend.decoder(b), &out.stats.streams[static_cast<size_t>(s)], &out.stats.clamped);
    } catch (const CoderError& e) {
      throw IntegrityError(stream_name(s) + " substream is unreadable: " + e.what());
    }
    streams[static_cast<size_t>(s)] = owned[static_cast<size_t>(s)].get();
  }
  Protocol proto(model, backend, streams, &out.stats);
  try {
    proto.run(hd.height / 16, hd.width / 16, nullptr, nullptr);
  } catch (const CoderError& e) {
    throw IntegrityError(std::string("hyper-latent substream diverged: ") + e.what());
  }
  for (int s = 0; s < 4; ++s) {
    try {
      streams[static_cast<size_t>(s)]->finish_decode(stream_name(s), c.streams[static_cast<size_t>(s)].size());
    } catch (const CoderError& e) {
      throw IntegrityError(stream_name(s) + " substream: " + e.what());
    }
  }
  out.y_hat = proto.y();
  out.z_hat = proto.z();
  {
    NoGradGuard ng;
    out.x_hat = model.backbone().decode(Var<float>::constant(out.y_hat)).value();
  }
  out.stats.seconds = seconds_since(t0);
  return out;
}

Tensor<float> quantized_reconstruction(const Model<float>& model, const Tensor<float>& x) {
  NoGradGuard ng;
  const Var<float> y = model.backbone().encode(Var<float>::constant(x));
  return model.backbone().decode(quantize(y, Quantizer::kRound, nullptr)).value();
}

}  // namespace bisic::codec
