#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bisic/autograd.hpp"
#include "bisic/ops.hpp"

namespace bisic::nn {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;

// Owns named parameters and child modules. Modules are neither copyable nor
// movable because parents keep pointers to their children.
template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  // All parameters, depth-first in registration order, with dotted names.
  NamedParams<T> parameters() const;
  int64_t parameter_count() const;
  void zero_grad();

 protected:
  Var<T> add_param(std::string name, Tensor<T> init);
  void add_child(std::string name, Module* child);

 private:
  void collect(const std::string& prefix, NamedParams<T>& out) const;
  NamedParams<T> params_;
  std::vector<std::pair<std::string, Module*>> children_;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, int64_t fan_in, std::mt19937_64& rng);

struct ConvSpec {
  int in = 0;
  int out = 0;
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};
  std::array<int, 3> output_pad{0, 0, 0};
  std::vector<uint8_t> tap_mask;  // conv only
};

// 3D convolution over [B, C, view, H, W].
template <typename T>
class Conv3d : public Module<T> {
 public:
  Conv3d(const ConvSpec& spec, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;
  const Var<T>& weight() const { return weight_; }
  const Var<T>& bias() const { return bias_; }
  const ops::ConvGeometry& geometry() const { return geom_; }

 private:
  ops::ConvGeometry geom_;
  Var<T> weight_;
  Var<T> bias_;
};

template <typename T>
class ConvTranspose3d : public Module<T> {
 public:
  ConvTranspose3d(const ConvSpec& spec, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;

 private:
  ops::ConvGeometry geom_;
  Var<T> weight_;
  Var<T> bias_;
};

// 1x1x1 convolution shorthand.
inline ConvSpec pointwise(int in, int out) { return ConvSpec{in, out}; }

// A stack of pointwise convs with leaky-rectifier activations between them
// (none after the last).
template <typename T>
class PointwiseStack : public Module<T> {
 public:
  PointwiseStack(const std::vector<int>& widths, T slope, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const;
  int out_channels() const { return out_; }

 private:
  std::vector<std::unique_ptr<Conv3d<T>>> layers_;
  T slope_;
  int out_;
};

}  // namespace bisic::nn
