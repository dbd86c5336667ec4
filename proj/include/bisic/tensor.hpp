#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "bisic/errors.hpp"

namespace bisic {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array with value semantics. Scalars have an empty shape.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  // Negative axes count from the back.
  int64_t dim(int axis) const {
    return shape_[static_cast<size_t>(axis < 0 ? axis + ndim() : axis)];
  }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  T item() const;

  // 5-D accessor used all over the stereo code: [batch, channel, view, row, col].
  T& at(int64_t b, int64_t c, int64_t v, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(
        (((b * shape_[1] + c) * shape_[2] + v) * shape_[3] + h) * shape_[4] + w)];
  }
  const T& at(int64_t b, int64_t c, int64_t v, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(
        (((b * shape_[1] + c) * shape_[2] + v) * shape_[3] + h) * shape_[4] + w)];
  }

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;
  void fill(T v);

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& o) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Max |a - b|; shapes must match.
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

// Copies a contiguous sub-block along one axis.
template <typename T>
Tensor<T> narrow(const Tensor<T>& t, int axis, int64_t start, int64_t length);

}  // namespace bisic
