#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>

#include "bisic/backbone.hpp"
#include "bisic/entropy_model.hpp"

namespace bisic {

enum class Quantizer {
  kNoise,  // y + U(-0.5, 0.5), training
  kRound,  // nearest integer, inference and coding
};

template <typename T>
struct ModelOutput {
  Var<T> y, y_hat, z, z_hat, zt, x_hat;
  Var<T> p_y, p_z;
  GaussianParams<T> params;
};

// Backbone + factorized prior + entropy model.
template <typename T>
class Model : public nn::Module<T> {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const Backbone<T>& backbone() const { return *backbone_; }
  const FactorizedPrior<T>& prior() const { return *prior_; }
  const EntropyModel<T>& entropy() const { return *entropy_; }

  // x: [B, 3, 2, H, W]. `rng` is required for Quantizer::kNoise.
  ModelOutput<T> forward(const Var<T>& x, Quantizer q, std::mt19937_64* rng = nullptr,
                         bool reconstruct = true) const;

 private:
  ModelConfig cfg_;
  std::unique_ptr<Backbone<T>> backbone_;
  std::unique_ptr<FactorizedPrior<T>> prior_;
  std::unique_ptr<EntropyModel<T>> entropy_;
};

template <typename T>
Var<T> quantize(const Var<T>& v, Quantizer q, std::mt19937_64* rng);

// Rate in bits per pixel per view, summed over views, averaged over the
// batch: sum(-log2 max(p, 2^-24)) / (B * H * W).
template <typename T>
Var<T> bits_per_pixel(const Var<T>& p, int64_t batch, int64_t height, int64_t width);

// Checkpoint file: "BSCK", version, config text, metadata (key=value text),
// then named float32 arrays.
using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  std::unique_ptr<Model<float>> model;
  Metadata metadata;
};

void save_checkpoint(const Model<float>& model, const Metadata& metadata, const std::string& path);
std::vector<uint8_t> serialize_checkpoint(const Model<float>& model, const Metadata& metadata);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint parse_checkpoint(const std::vector<uint8_t>& bytes, const std::string& what);

// Copies parameter values between models of the same configuration.
template <typename A, typename B>
void copy_parameters(const Model<A>& from, Model<B>& to);

}  // namespace bisic
