#include "bisic/coder_backend.hpp"

#include <dlfcn.h>

#include <cstdlib>

#include "bisic/native_coder.h"

namespace bisic::rc {

namespace {

class ReferenceSink : public SymbolSink {
 public:
  void put(std::span<const uint32_t> cdf, int symbol) override { enc_.encode(cdf, symbol); }
  std::vector<uint8_t> finish() override { return enc_.finish(); }

 private:
  Encoder enc_;
};

class ReferenceSource : public SymbolSource {
 public:
  explicit ReferenceSource(std::span<const uint8_t> b) : dec_(b.data(), b.size()) {}
  int get(std::span<const uint32_t> cdf) override { return dec_.decode(cdf); }
  void finish() override { dec_.finish(); }

 private:
  Decoder dec_;
};

class ReferenceBackend : public Backend {
 public:
  std::string name() const override { return "reference"; }
  std::unique_ptr<SymbolSink> encoder() const override { return std::make_unique<ReferenceSink>(); }
  std::unique_ptr<SymbolSource> decoder(std::span<const uint8_t> bytes) const override {
    return std::make_unique<ReferenceSource>(bytes);
  }
};

struct NativeApi {
  void* handle = nullptr;
  decltype(&bisic_native_abi_version) abi_version = nullptr;
  decltype(&bisic_native_max_encoded_len) max_encoded_len = nullptr;
  decltype(&bisic_native_rc_encode) encode = nullptr;
  decltype(&bisic_native_decoder_open) open = nullptr;
  decltype(&bisic_native_decoder_next) next = nullptr;
  decltype(&bisic_native_decoder_close) close = nullptr;
  decltype(&bisic_native_quantize_cdf) quantize = nullptr;

  ~NativeApi() {
    if (handle) dlclose(handle);
  }
};

void check_status(int status, const char* what) {
  switch (status) {
    case BISIC_NATIVE_OK:
      return;
    case BISIC_NATIVE_TRUNCATED:
      throw CoderError(std::string("native coder: ") + what + ": stream truncated");
    case BISIC_NATIVE_CORRUPT:
      throw CoderError(std::string("native coder: ") + what + ": corrupt stream");
    case BISIC_NATIVE_TRAILING_BYTES:
      throw CoderError(std::string("native coder: ") + what + ": stream not fully consumed");
    default:
      throw CoderError(std::string("native coder: ") + what + " failed with status " + std::to_string(status));
  }
}

class NativeSink : public SymbolSink {
 public:
  explicit NativeSink(std::shared_ptr<const NativeApi> api) : api_(std::move(api)) {}
  void put(std::span<const uint32_t> cdf, int symbol) override {
    offsets_.push_back(table_.size());
    sizes_.push_back(static_cast<uint32_t>(cdf.size()));
    table_.insert(table_.end(), cdf.begin(), cdf.end());
    symbols_.push_back(symbol);
  }
  std::vector<uint8_t> finish() override {
    std::vector<uint8_t> out(api_->max_encoded_len(symbols_.size()));
    size_t len = 0;
    check_status(api_->encode(symbols_.data(), symbols_.size(), table_.data(), offsets_.data(), sizes_.data(),
                              out.data(), out.size(), &len),
                 "encode");
    out.resize(len);
    symbols_.clear();
    table_.clear();
    offsets_.clear();
    sizes_.clear();
    return out;
  }

 private:
  std::shared_ptr<const NativeApi> api_;
  std::vector<int32_t> symbols_;
  std::vector<uint32_t> table_;
  std::vector<uint64_t> offsets_;
  std::vector<uint32_t> sizes_;
};

class NativeSource : public SymbolSource {
 public:
  NativeSource(std::shared_ptr<const NativeApi> api, std::span<const uint8_t> bytes) : api_(std::move(api)) {
    check_status(api_->open(bytes.data(), bytes.size(), &dec_), "open");
  }
  ~NativeSource() override {
    if (dec_) api_->close(dec_);
  }
  int get(std::span<const uint32_t> cdf) override {
    int32_t s = 0;
    check_status(api_->next(dec_, cdf.data(), static_cast<uint32_t>(cdf.size()), &s), "decode");
    return s;
  }
  void finish() override {
    bisic_native_decoder* d = dec_;
    dec_ = nullptr;
    check_status(api_->close(d), "finish");
  }

 private:
  std::shared_ptr<const NativeApi> api_;
  bisic_native_decoder* dec_ = nullptr;
};

class NativeBackend : public Backend {
 public:
  NativeBackend(std::shared_ptr<const NativeApi> api, std::string path) : api_(std::move(api)), path_(std::move(path)) {}
  std::string name() const override { return "native:" + path_; }
  std::unique_ptr<SymbolSink> encoder() const override { return std::make_unique<NativeSink>(api_); }
  std::unique_ptr<SymbolSource> decoder(std::span<const uint8_t> bytes) const override {
    return std::make_unique<NativeSource>(api_, bytes);
  }
  Cdf gaussian_cdf(double mu, double sigma) const override {
    Cdf c(kAlphabet + 1);
    check_status(api_->quantize(mu, sigma, c.data(), c.size()), "quantize_cdf");
    return c;
  }

 private:
  std::shared_ptr<const NativeApi> api_;
  std::string path_;
};

template <typename F>
void bind(const std::shared_ptr<NativeApi>& api, F& slot, const char* symbol, const std::string& path) {
  void* p = dlsym(api->handle, symbol);
  if (!p) throw IoError("native coder " + path + " does not export " + symbol);
  slot = reinterpret_cast<F>(p);
}

}  // namespace

const Backend& reference_backend() {
  static const ReferenceBackend backend;
  return backend;
}

std::shared_ptr<const Backend> load_native_backend(const std::string& path) {
  auto api = std::make_shared<NativeApi>();
  api->handle = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (!api->handle) {
    const char* err = dlerror();
    throw IoError("cannot load native coder " + path + ": " + (err ? err : "unknown error"));
  }
  bind(api, api->abi_version, "bisic_native_abi_version", path);
  bind(api, api->max_encoded_len, "bisic_native_max_encoded_len", path);
  bind(api, api->encode, "bisic_native_rc_encode", path);
  bind(api, api->open, "bisic_native_decoder_open", path);
  bind(api, api->next, "bisic_native_decoder_next", path);
  bind(api, api->close, "bisic_native_decoder_close", path);
  bind(api, api->quantize, "bisic_native_quantize_cdf", path);
  const uint32_t v = api->abi_version();
  if (v != BISIC_NATIVE_ABI_VERSION) {
    throw CoderError("native coder " + path + " has ABI version " + std::to_string(v) + ", expected " +
                     std::to_string(BISIC_NATIVE_ABI_VERSION));
  }
  return std::make_shared<NativeBackend>(std::move(api), path);
}

BackendChoice parse_backend_choice(const std::string& s) {
  if (s == "auto") return BackendChoice::kAuto;
  if (s == "reference") return BackendChoice::kReference;
  if (s == "native") return BackendChoice::kNative;
  throw ParameterError("unknown coder backend '" + s + "' (expected auto, reference or native)");
}

std::shared_ptr<const Backend> select_backend(BackendChoice choice, const std::string& path, std::string* note) {
  const std::shared_ptr<const Backend> reference(&reference_backend(), [](const Backend*) {});
  if (choice == BackendChoice::kReference) return reference;
  std::string lib = path;
  if (lib.empty()) {
    const char* env = std::getenv("BISIC_NATIVE_CODER");
    if (env) lib = env;
  }
  if (choice == BackendChoice::kNative) {
    if (lib.empty()) throw ParameterError("native coder requested but no library path given (set BISIC_NATIVE_CODER)");
    return load_native_backend(lib);
  }
  if (lib.empty()) {
    if (note) *note = "no native coder configured; using the reference coder";
    return reference;
  }
  try {
    return load_native_backend(lib);
  } catch (const Error& e) {
    if (note) *note = std::string(e.what()) + "; falling back to the reference coder";
    return reference;
  }
}

}  // namespace bisic::rc
