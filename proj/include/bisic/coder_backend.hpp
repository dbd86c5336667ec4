#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bisic/range_coder.hpp"

namespace bisic::rc {

class SymbolSink {
 public:
  virtual ~SymbolSink() = default;
  virtual void put(std::span<const uint32_t> cdf, int symbol) = 0;
  virtual std::vector<uint8_t> finish() = 0;
};

class SymbolSource {
 public:
  virtual ~SymbolSource() = default;
  virtual int get(std::span<const uint32_t> cdf) = 0;
  virtual void finish() = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<SymbolSink> encoder() const = 0;
  // `bytes` must outlive the source.
  virtual std::unique_ptr<SymbolSource> decoder(std::span<const uint8_t> bytes) const = 0;
  virtual Cdf gaussian_cdf(double mu, double sigma) const { return rc::gaussian_cdf(mu, sigma); }
};

const Backend& reference_backend();

// Loads a shared library exporting the native_coder.h interface. Throws
// IoError if it cannot be opened or lacks a symbol, CoderError on an ABI
// version mismatch.
std::shared_ptr<const Backend> load_native_backend(const std::string& path);

enum class BackendChoice { kAuto, kReference, kNative };
BackendChoice parse_backend_choice(const std::string& s);

// kReference: the reference coder. kNative: the library at `path` (or
// $BISIC_NATIVE_CODER), failing if absent. kAuto: native when loadable,
// otherwise the reference coder, with the reason in *note.
std::shared_ptr<const Backend> select_backend(BackendChoice choice, const std::string& path = "",
                                              std::string* note = nullptr);

}  // namespace bisic::rc
