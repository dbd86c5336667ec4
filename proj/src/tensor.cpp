#include "bisic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace bisic {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& t, int axis, int64_t start, int64_t length) {
  if (axis < 0) axis += t.ndim();
  if (axis < 0 || axis >= t.ndim()) throw ShapeError("narrow: bad axis");
  if (start < 0 || length < 0 || start + length > t.dim(axis)) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of bounds for axis of size " +
                     std::to_string(t.dim(axis)));
  }
  Shape out_shape = t.shape();
  out_shape[static_cast<size_t>(axis)] = length;
  Tensor<T> out(out_shape);
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= t.dim(i);
  int64_t inner = 1;
  for (int i = axis + 1; i < t.ndim(); ++i) inner *= t.dim(i);
  const int64_t src_block = t.dim(axis) * inner;
  const int64_t dst_block = length * inner;
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * dst_block, t.data() + o * src_block + start * inner,
                static_cast<size_t>(dst_block) * sizeof(T));
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<int32_t>;
template double max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);
template double max_abs_diff(const Tensor<int32_t>&, const Tensor<int32_t>&);
template Tensor<float> narrow(const Tensor<float>&, int, int64_t, int64_t);
template Tensor<double> narrow(const Tensor<double>&, int, int64_t, int64_t);
template Tensor<int32_t> narrow(const Tensor<int32_t>&, int, int64_t, int64_t);

}  // namespace bisic
