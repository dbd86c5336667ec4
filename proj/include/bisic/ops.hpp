#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bisic/autograd.hpp"

// Differentiable tensor operations. Binary elementwise ops broadcast with
// numpy rules. All ops are deterministic: reduction order depends only on
// shapes, never on values or timing.
namespace bisic::ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> mul_scalar(const Var<T>& a, T s);

template <typename T> Var<T> neg(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> softplus(const Var<T>& a);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> leaky_relu(const Var<T>& a, T slope);
template <typename T> Var<T> square(const Var<T>& a);
template <typename T> Var<T> abs(const Var<T>& a);
// x^p for x > 0.
template <typename T> Var<T> pow_scalar(const Var<T>& a, T p);
// max(x, lo) with zero gradient where clamped.
template <typename T> Var<T> clamp_min(const Var<T>& a, T lo);
// max(x, bound); gradient still flows where it would push x upwards.
template <typename T> Var<T> lower_bound(const Var<T>& a, T bound);
template <typename T> Var<T> detach(const Var<T>& a);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> sum_axes(const Var<T>& a, std::vector<int> axes, bool keepdim);

template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
template <typename T> Var<T> permute(const Var<T>& a, std::vector<int> perm);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, int axis);
template <typename T> Var<T> slice(const Var<T>& a, int axis, int64_t start, int64_t length);

// [..., m, k] x [..., k, n] with identical leading dims.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// [..., m, k] x [..., n, k]^T without materializing the transpose.
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
// [..., k, m]^T x [..., k, n].
template <typename T> Var<T> matmul_tn(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> softmax(const Var<T>& a, int axis);

struct ConvGeometry {
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};
  std::array<int, 3> output_pad{0, 0, 0};  // transposed convolution only
  // One flag per kernel tap (depth-major); empty means every tap is live.
  // Dead taps are skipped entirely rather than multiplied by zero.
  std::vector<uint8_t> tap_mask;
};

// x: [B, Ci, D, H, W], w: [Co, Ci, kd, kh, kw], bias: [Co] or undefined.
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvGeometry& g);
// x: [B, Ci, D, H, W], w: [Ci, Co, kd, kh, kw], bias: [Co] or undefined.
template <typename T>
Var<T> conv_transpose3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                        const ConvGeometry& g);

// 2x2 average pooling over the last two axes (odd trailing row/col dropped).
template <typename T> Var<T> avg_pool2(const Var<T>& a);

// P(y) for a unit bin under N(mu, sigma); all three share one shape.
template <typename T>
Var<T> gaussian_likelihood(const Var<T>& y, const Var<T>& mu, const Var<T>& sigma);

// Output spatial extent of a convolution along one axis.
int64_t conv_out_size(int64_t in, int kernel, int stride, int pad);
int64_t conv_transpose_out_size(int64_t in, int kernel, int stride, int pad, int output_pad);

}  // namespace bisic::ops
