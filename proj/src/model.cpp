#include "bisic/model.hpp"

#include <cmath>
#include <cstring>

#include "bisic/io.hpp"

namespace bisic {

using namespace ops;

template <typename T>
Var<T> quantize(const Var<T>& v, Quantizer q, std::mt19937_64* rng) {
  if (q == Quantizer::kNoise) {
    if (!rng) throw ParameterError("noise quantization needs a random generator");
    Tensor<T> u(v.shape());
    for (auto& e : u.values()) e = static_cast<T>(static_cast<double>((*rng)() >> 11) * 0x1.0p-53 - 0.5);
    return add(v, Var<T>::constant(std::move(u)));
  }
  Tensor<T> r = v.value();
  for (auto& e : r.values()) e = std::nearbyint(e);
  return Var<T>::constant(std::move(r));
}

template <typename T>
Var<T> bits_per_pixel(const Var<T>& p, int64_t batch, int64_t height, int64_t width) {
  return mul_scalar(rate_bits(p), static_cast<T>(1.0 / static_cast<double>(batch * height * width)));
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  backbone_ = std::make_unique<Backbone<T>>(cfg, rng);
  prior_ = std::make_unique<FactorizedPrior<T>>(cfg.M, rng);
  entropy_ = std::make_unique<EntropyModel<T>>(cfg, backbone_->hyper_channels(), rng);
  this->add_child("backbone", backbone_.get());
  this->add_child("prior", prior_.get());
  this->add_child("entropy", entropy_.get());
}

template <typename T>
ModelOutput<T> Model<T>::forward(const Var<T>& x, Quantizer q, std::mt19937_64* rng, bool reconstruct) const {
  ModelOutput<T> o;
  o.y = backbone_->encode(x);
  o.z = backbone_->hyper_encode(o.y);
  o.y_hat = quantize(o.y, q, rng);
  o.z_hat = quantize(o.z, q, rng);
  o.p_z = prior_->likelihood(o.z_hat);
  o.zt = backbone_->hyper_decode(o.z_hat);
  o.params = entropy_->forward(o.y_hat, o.zt);
  o.p_y = likelihood(o.y_hat, o.params);
  if (reconstruct) o.x_hat = backbone_->decode(o.y_hat);
  return o;
}

template <typename A, typename B>
void copy_parameters(const Model<A>& from, Model<B>& to) {
  const auto src = from.parameters();
  auto dst = to.parameters();
  if (src.size() != dst.size()) throw ShapeError("copy_parameters: models differ in parameter count");
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first || src[i].second.shape() != dst[i].second.shape()) {
      throw ShapeError("copy_parameters: mismatch at " + src[i].first);
    }
    dst[i].second.mutable_value() = src[i].second.value().template cast<B>();
  }
}

namespace {

constexpr char kMagic[4] = {'B', 'S', 'C', 'K'};
constexpr uint8_t kVersion = 1;

std::string metadata_text(const Metadata& m) {
  std::string s;
  for (const auto& [k, v] : m) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ParameterError("metadata entry '" + k + "' cannot be stored as key=value text");
    }
    s += k + "=" + v + "\n";
  }
  return s;
}

void put_string(std::vector<uint8_t>& out, const std::string& s) {
  io::put_u32(out, static_cast<uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string get_string(io::Reader& r) {
  const uint32_t n = r.u32();
  const uint8_t* b = r.bytes(n);
  return std::string(b, b + n);
}

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const Model<float>& model, const Metadata& metadata) {
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  io::put_u8(out, kVersion);
  put_string(out, model.config().to_text());
  put_string(out, metadata_text(metadata));
  const auto params = model.parameters();
  io::put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    put_string(out, name);
    io::put_u8(out, static_cast<uint8_t>(p.ndim()));
    for (int d = 0; d < p.ndim(); ++d) io::put_u64(out, static_cast<uint64_t>(p.dim(d)));
    for (float v : p.value().values()) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      io::put_u32(out, bits);
    }
  }
  return out;
}

void save_checkpoint(const Model<float>& model, const Metadata& metadata, const std::string& path) {
  io::write_file_atomic(path, serialize_checkpoint(model, metadata));
}

Checkpoint parse_checkpoint(const std::vector<uint8_t>& bytes, const std::string& what) {
  io::Reader r(bytes.data(), bytes.size(), what);
  if (std::memcmp(r.bytes(4), kMagic, 4) != 0) throw FormatError(what + ": not a checkpoint (bad magic)");
  const uint8_t version = r.u8();
  if (version != kVersion) throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_text(get_string(r));
  } catch (const ParameterError& e) {
    throw FormatError(what + ": bad embedded config: " + e.what());
  }
  Checkpoint ck;
  ck.metadata = parse_key_values(get_string(r));
  ck.model = std::make_unique<Model<float>>(cfg, 0);
  auto params = ck.model->parameters();
  const uint32_t count = r.u32();
  if (count != params.size()) {
    throw FormatError(what + ": holds " + std::to_string(count) + " arrays, config needs " +
                      std::to_string(params.size()));
  }
  for (auto& [name, p] : params) {
    const std::string stored = get_string(r);
    if (stored != name) throw FormatError(what + ": expected array '" + name + "', found '" + stored + "'");
    const uint8_t nd = r.u8();
    Shape s;
    for (uint8_t d = 0; d < nd; ++d) s.push_back(static_cast<int64_t>(r.u64()));
    if (s != p.shape()) {
      throw FormatError(what + ": array '" + name + "' has shape " + shape_str(s) + ", expected " +
                        shape_str(p.shape()));
    }
    for (auto& v : p.mutable_value().values()) {
      const uint32_t bits = r.u32();
      std::memcpy(&v, &bits, 4);
    }
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after the last array");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(io::read_file(path), path); }

template class Model<float>;
template class Model<double>;
template Var<float> quantize(const Var<float>&, Quantizer, std::mt19937_64*);
template Var<double> quantize(const Var<double>&, Quantizer, std::mt19937_64*);
template Var<float> bits_per_pixel(const Var<float>&, int64_t, int64_t, int64_t);
template Var<double> bits_per_pixel(const Var<double>&, int64_t, int64_t, int64_t);
template void copy_parameters(const Model<float>&, Model<float>&);
template void copy_parameters(const Model<float>&, Model<double>&);
template void copy_parameters(const Model<double>&, Model<float>&);

}  // namespace bisic
