#include "bisic/nn.hpp"

#include <cmath>

namespace bisic::nn {

template <typename T>
NamedParams<T> Module<T>::parameters() const {
  NamedParams<T> out;
  collect("", out);
  return out;
}

template <typename T>
void Module<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  for (const auto& [name, p] : params_) out.emplace_back(prefix + name, p);
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

template <typename T>
int64_t Module<T>::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, p] : parameters()) n += p.numel();
  return n;
}

template <typename T>
void Module<T>::zero_grad() {
  for (auto& [name, p] : parameters()) p.zero_grad();
}

template <typename T>
Var<T> Module<T>::add_param(std::string name, Tensor<T> init) {
  Var<T> v = Var<T>::parameter(std::move(init));
  params_.emplace_back(std::move(name), v);
  return v;
}

template <typename T>
void Module<T>::add_child(std::string name, Module* child) {
  children_.emplace_back(std::move(name), child);
}

template <typename T>
Tensor<T> fan_in_uniform(const Shape& shape, int64_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(fan_in, 1)));
  Tensor<T> t(shape);
  for (auto& v : t.values()) {
    // 53-bit uniform in [0,1), independent of the standard library's distribution code.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = static_cast<T>((2.0 * u - 1.0) * bound);
  }
  return t;
}

namespace {

int64_t live_taps(const ConvSpec& s) {
  if (s.tap_mask.empty()) return int64_t{s.kernel[0]} * s.kernel[1] * s.kernel[2];
  int64_t n = 0;
  for (auto m : s.tap_mask) n += m ? 1 : 0;
  return n;
}

}  // namespace

template <typename T>
Conv3d<T>::Conv3d(const ConvSpec& s, std::mt19937_64& rng) {
  geom_.stride = s.stride;
  geom_.pad = s.pad;
  geom_.tap_mask = s.tap_mask;
  const int64_t fan_in = int64_t{s.in} * live_taps(s);
  Tensor<T> w = fan_in_uniform<T>({s.out, s.in, s.kernel[0], s.kernel[1], s.kernel[2]}, fan_in, rng);
  if (!s.tap_mask.empty()) {
    // Dead taps never contribute; keep their stored weights at zero too.
    const int64_t ksize = int64_t{s.kernel[0]} * s.kernel[1] * s.kernel[2];
    for (int64_t i = 0; i < w.numel(); ++i) {
      if (!s.tap_mask[static_cast<size_t>(i % ksize)]) w[i] = T(0);
    }
  }
  weight_ = this->add_param("weight", std::move(w));
  bias_ = this->add_param("bias", fan_in_uniform<T>({s.out}, fan_in, rng));
}

template <typename T>
Var<T> Conv3d<T>::operator()(const Var<T>& x) const {
  return ops::conv3d(x, weight_, bias_, geom_);
}

template <typename T>
ConvTranspose3d<T>::ConvTranspose3d(const ConvSpec& s, std::mt19937_64& rng) {
  if (!s.tap_mask.empty()) throw ParameterError("transposed convolutions do not take tap masks");
  geom_.stride = s.stride;
  geom_.pad = s.pad;
  geom_.output_pad = s.output_pad;
  const int64_t fan_in = int64_t{s.out} * s.kernel[0] * s.kernel[1] * s.kernel[2];
  weight_ = this->add_param(
      "weight", fan_in_uniform<T>({s.in, s.out, s.kernel[0], s.kernel[1], s.kernel[2]}, fan_in, rng));
  bias_ = this->add_param("bias", fan_in_uniform<T>({s.out}, fan_in, rng));
}

template <typename T>
Var<T> ConvTranspose3d<T>::operator()(const Var<T>& x) const {
  return ops::conv_transpose3d(x, weight_, bias_, geom_);
}

template <typename T>
PointwiseStack<T>::PointwiseStack(const std::vector<int>& widths, T slope, std::mt19937_64& rng)
    : slope_(slope), out_(widths.back()) {
  if (widths.size() < 2) throw ParameterError("pointwise stack needs at least one layer");
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.push_back(std::make_unique<Conv3d<T>>(pointwise(widths[i], widths[i + 1]), rng));
    this->add_child(std::to_string(i), layers_.back().get());
  }
}

template <typename T>
Var<T> PointwiseStack<T>::operator()(const Var<T>& x) const {
  Var<T> h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = (*layers_[i])(h);
    if (i + 1 < layers_.size()) h = ops::leaky_relu(h, slope_);
  }
  return h;
}

template class Module<float>;
template class Module<double>;
template class Conv3d<float>;
template class Conv3d<double>;
template class ConvTranspose3d<float>;
template class ConvTranspose3d<double>;
template class PointwiseStack<float>;
template class PointwiseStack<double>;
template Tensor<float> fan_in_uniform(const Shape&, int64_t, std::mt19937_64&);
template Tensor<double> fan_in_uniform(const Shape&, int64_t, std::mt19937_64&);

}  // namespace bisic::nn
