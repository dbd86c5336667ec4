#include "bisic/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>

namespace bisic::ops {
namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
  }
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (size_t i = 0; i < nd; ++i) {
    const int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

// Strides of `in` laid over `out`, zero along broadcast axes.
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto base = contiguous_strides(in);
  std::vector<int64_t> st(out.size(), 0);
  const size_t off = out.size() - in.size();
  for (size_t i = 0; i < in.size(); ++i) {
    st[i + off] = (in[i] == 1 && out[i + off] != 1) ? 0 : base[i];
  }
  return st;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <typename F>
void for_each_strided(const Shape& out, const std::vector<int64_t>& sa,
                      const std::vector<int64_t>& sb, F&& f) {
  const int nd = static_cast<int>(out.size());
  const int64_t total = shape_numel(out);
  if (total == 0) return;
  if (nd == 0) {
    f(0, 0, 0);
    return;
  }
  const int64_t inner = out[static_cast<size_t>(nd - 1)];
  const int64_t step_a = sa[static_cast<size_t>(nd - 1)];
  const int64_t step_b = sb[static_cast<size_t>(nd - 1)];
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  int64_t base_a = 0;
  int64_t base_b = 0;
  int64_t o = 0;
  while (o < total) {
    for (int64_t i = 0; i < inner; ++i) f(o++, base_a + i * step_a, base_b + i * step_b);
    for (int d = nd - 2; d >= 0; --d) {
      const auto du = static_cast<size_t>(d);
      ++idx[du];
      base_a += sa[du];
      base_b += sb[du];
      if (idx[du] < out[du]) break;
      base_a -= sa[du] * out[du];
      base_b -= sb[du] * out[du];
      idx[du] = 0;
    }
  }
}

// Sums a broadcast gradient back down to `target`.
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor<T> out(target);
  const auto st = broadcast_strides(target, g.shape());
  const std::vector<int64_t> zero(g.shape().size(), 0);
  const T* src = g.data();
  T* dst = out.data();
  for_each_strided(g.shape(), st, zero, [&](int64_t o, int64_t it, int64_t) { dst[it] += src[o]; });
  return out;
}

template <typename T, typename F>
Tensor<T> binary_map(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Shape shape = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(shape);
  const auto sa = broadcast_strides(a.shape(), shape);
  const auto sb = broadcast_strides(b.shape(), shape);
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for_each_strided(shape, sa, sb,
                   [&](int64_t o, int64_t ia, int64_t ib) { po[o] = f(pa[ia], pb[ib]); });
  return out;
}

template <typename T, typename F>
Tensor<T> unary_map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  return out;
}

// Elementwise op whose derivative is df(x, y) with y = f(x).
template <typename T, typename F, typename DF>
Var<T> unary_op(const Var<T>& a, F f, DF df) {
  return make_op<T>(unary_map(a.value(), f), {a}, [df](Node<T>& n) {
    const Tensor<T>& x = n.inputs[0]->value;
    Tensor<T> gx(x.shape());
    const T* px = x.data();
    const T* py = n.value.data();
    const T* pg = n.grad.data();
    T* po = gx.data();
    for (int64_t i = 0; i < x.numel(); ++i) po[i] = pg[i] * df(px[i], py[i]);
    n.inputs[0]->accumulate(std::move(gx));
  });
}

int normalize_axis(int axis, int nd) {
  const int a = axis < 0 ? axis + nd : axis;
  if (a < 0 || a >= nd) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return a;
}

}  // namespace

int64_t conv_out_size(int64_t in, int kernel, int stride, int pad) {
  const int64_t span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

int64_t conv_transpose_out_size(int64_t in, int kernel, int stride, int pad, int output_pad) {
  return (in - 1) * stride - 2 * pad + kernel + output_pad;
}

// ---------------------------------------------------------------- arithmetic

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make_op<T>(binary_map(a.value(), b.value(), [](T x, T y) { return x + y; }), {a, b},
                    [](Node<T>& n) {
                      for (auto& in : n.inputs) {
                        if (in->requires_grad) in->accumulate(reduce_to(n.grad, in->value.shape()));
                      }
                    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return make_op<T>(binary_map(a.value(), b.value(), [](T x, T y) { return x - y; }), {a, b},
                    [](Node<T>& n) {
                      auto& A = n.inputs[0];
                      auto& B = n.inputs[1];
                      if (A->requires_grad) A->accumulate(reduce_to(n.grad, A->value.shape()));
                      if (B->requires_grad) {
                        Tensor<T> g = reduce_to(n.grad, B->value.shape());
                        for (auto& v : g.values()) v = -v;
                        B->accumulate(std::move(g));
                      }
                    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return make_op<T>(binary_map(a.value(), b.value(), [](T x, T y) { return x * y; }), {a, b},
                    [](Node<T>& n) {
                      auto& A = n.inputs[0];
                      auto& B = n.inputs[1];
                      const auto times = [](T x, T y) { return x * y; };
                      if (A->requires_grad) {
                        A->accumulate(reduce_to(binary_map(n.grad, B->value, times), A->value.shape()));
                      }
                      if (B->requires_grad) {
                        B->accumulate(reduce_to(binary_map(n.grad, A->value, times), B->value.shape()));
                      }
                    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return make_op<T>(binary_map(a.value(), b.value(), [](T x, T y) { return x / y; }), {a, b},
                    [](Node<T>& n) {
                      auto& A = n.inputs[0];
                      auto& B = n.inputs[1];
                      if (A->requires_grad) {
                        A->accumulate(reduce_to(
                            binary_map(n.grad, B->value, [](T g, T y) { return g / y; }),
                            A->value.shape()));
                      }
                      if (B->requires_grad) {
                        // d(a/b)/db = -(a/b)/b
                        Tensor<T> q = binary_map(n.value, B->value, [](T o, T y) { return -o / y; });
                        B->accumulate(reduce_to(binary_map(n.grad, q, [](T g, T v) { return g * v; }),
                                                B->value.shape()));
                      }
                    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary_op<T>(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  return unary_op<T>(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return mul_scalar(a, T(-1));
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary_op<T>(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return unary_op<T>(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return unary_op<T>(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary_op<T>(
      a,
      [](T x) {
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  return unary_op<T>(
      a, [](T x) { return x > T(20) ? x : std::log1p(std::exp(x)); },
      [](T x, T) {
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary_op<T>(a, [](T x) { return x > 0 ? x : T(0); },
                     [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return unary_op<T>(a, [slope](T x) { return x > 0 ? x : slope * x; },
                     [slope](T x, T) { return x > 0 ? T(1) : slope; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary_op<T>(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  return unary_op<T>(a, [](T x) { return std::abs(x); },
                     [](T x, T) { return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> pow_scalar(const Var<T>& a, T p) {
  return unary_op<T>(a, [p](T x) { return std::pow(x, p); },
                     [p](T x, T y) { return x > 0 ? p * y / x : T(0); });
}

template <typename T>
Var<T> clamp_min(const Var<T>& a, T lo) {
  return unary_op<T>(a, [lo](T x) { return x < lo ? lo : x; },
                     [lo](T x, T) { return x < lo ? T(0) : T(1); });
}

template <typename T>
Var<T> lower_bound(const Var<T>& a, T bound) {
  Tensor<T> out = unary_map(a.value(), [bound](T x) { return x < bound ? bound : x; });
  return make_op<T>(std::move(out), {a}, [bound](Node<T>& n) {
    const Tensor<T>& x = n.inputs[0]->value;
    Tensor<T> gx(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
      const bool pass = x[i] >= bound || n.grad[i] < 0;
      gx[i] = pass ? n.grad[i] : T(0);
    }
    n.inputs[0]->accumulate(std::move(gx));
  });
}

template <typename T>
Var<T> detach(const Var<T>& a) {
  return Var<T>::constant(a.value());
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().values()) s += v;
  return make_op<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& n) {
    n.inputs[0]->accumulate(Tensor<T>(n.inputs[0]->value.shape(), n.grad[0]));
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return mul_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Var<T> sum_axes(const Var<T>& a, std::vector<int> axes, bool keepdim) {
  const Shape& in = a.shape();
  const int nd = static_cast<int>(in.size());
  Shape kept = in;
  for (int& ax : axes) {
    ax = normalize_axis(ax, nd);
    kept[static_cast<size_t>(ax)] = 1;
  }
  Tensor<T> out(kept);
  {
    const auto st = broadcast_strides(kept, in);
    const std::vector<int64_t> zero(in.size(), 0);
    const T* src = a.value().data();
    T* dst = out.data();
    for_each_strided(in, st, zero, [&](int64_t o, int64_t it, int64_t) { dst[it] += src[o]; });
  }
  Shape final_shape;
  if (keepdim) {
    final_shape = kept;
  } else {
    for (int i = 0; i < nd; ++i) {
      if (std::find(axes.begin(), axes.end(), i) == axes.end()) {
        final_shape.push_back(in[static_cast<size_t>(i)]);
      }
    }
  }
  out = std::move(out).reshaped(final_shape);
  return make_op<T>(std::move(out), {a}, [kept](Node<T>& n) {
    const Shape& in_shape = n.inputs[0]->value.shape();
    Tensor<T> gx(in_shape);
    const auto st = broadcast_strides(kept, in_shape);
    const std::vector<int64_t> zero(in_shape.size(), 0);
    const T* g = n.grad.data();
    T* dst = gx.data();
    for_each_strided(in_shape, st, zero, [&](int64_t o, int64_t it, int64_t) { dst[o] = g[it]; });
    n.inputs[0]->accumulate(std::move(gx));
  });
}

// ------------------------------------------------------------------- layout

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return make_op<T>(a.value().reshaped(std::move(shape)), {a}, [](Node<T>& n) {
    n.inputs[0]->accumulate(n.grad.reshaped(n.inputs[0]->value.shape()));
  });
}

template <typename T>
Var<T> permute(const Var<T>& a, std::vector<int> perm) {
  const Shape& in = a.shape();
  if (perm.size() != in.size()) throw ShapeError("permute: rank mismatch");
  Shape out_shape(in.size());
  const auto in_strides = contiguous_strides(in);
  std::vector<int64_t> gather(in.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    const auto p = static_cast<size_t>(normalize_axis(perm[i], static_cast<int>(in.size())));
    out_shape[i] = in[p];
    gather[i] = in_strides[p];
  }
  Tensor<T> out(out_shape);
  const std::vector<int64_t> zero(in.size(), 0);
  {
    const T* src = a.value().data();
    T* dst = out.data();
    for_each_strided(out_shape, gather, zero, [&](int64_t o, int64_t i, int64_t) { dst[o] = src[i]; });
  }
  return make_op<T>(std::move(out), {a}, [gather, out_shape, zero](Node<T>& n) {
    Tensor<T> gx(n.inputs[0]->value.shape());
    const T* g = n.grad.data();
    T* dst = gx.data();
    for_each_strided(out_shape, gather, zero, [&](int64_t o, int64_t i, int64_t) { dst[i] = g[o]; });
    n.inputs[0]->accumulate(std::move(gx));
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const int nd = parts[0].ndim();
  axis = normalize_axis(axis, nd);
  Shape out_shape = parts[0].shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != nd) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < nd; ++d) {
      if (d != axis && p.dim(d) != out_shape[static_cast<size_t>(d)]) {
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(out_shape));
      }
    }
    total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;
  int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
  int64_t inner = 1;
  for (int d = axis + 1; d < nd; ++d) inner *= out_shape[static_cast<size_t>(d)];
  Tensor<T> out(out_shape);
  std::vector<int64_t> sizes;
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t len = p.dim(axis);
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * total + offset) * inner, p.value().data() + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(T));
    }
    sizes.push_back(len);
    offset += len;
  }
  return make_op<T>(std::move(out), parts, [axis, sizes](Node<T>& n) {
    int64_t off = 0;
    for (size_t i = 0; i < sizes.size(); ++i) {
      if (n.inputs[i]->requires_grad) n.inputs[i]->accumulate(narrow(n.grad, axis, off, sizes[i]));
      off += sizes[i];
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& a, int axis, int64_t start, int64_t length) {
  axis = normalize_axis(axis, a.ndim());
  return make_op<T>(narrow(a.value(), axis, start, length), {a}, [axis, start](Node<T>& n) {
    const Tensor<T>& x = n.inputs[0]->value;
    Tensor<T> gx(x.shape());
    int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    int64_t inner = 1;
    for (int d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
    const int64_t len = n.grad.dim(axis);
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(gx.data() + (o * x.dim(axis) + start) * inner, n.grad.data() + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(T));
    }
    n.inputs[0]->accumulate(std::move(gx));
  });
}

// ------------------------------------------------------------------- matmul

namespace {

struct MatmulDims {
  int64_t batch, m, k, n;
};

enum class MatmulKind { kNN, kNT, kTN };

template <typename T>
MatmulDims matmul_dims(const Tensor<T>& a, const Tensor<T>& b, MatmulKind kind) {
  if (a.ndim() < 2 || a.ndim() != b.ndim()) throw ShapeError("matmul: rank mismatch");
  for (int d = 0; d < a.ndim() - 2; ++d) {
    if (a.dim(d) != b.dim(d)) throw ShapeError("matmul: batch dims differ");
  }
  MatmulDims md{1, 0, 0, 0};
  for (int d = 0; d < a.ndim() - 2; ++d) md.batch *= a.dim(d);
  int64_t bk = 0;
  switch (kind) {
    case MatmulKind::kNN:
      md.m = a.dim(-2), md.k = a.dim(-1), bk = b.dim(-2), md.n = b.dim(-1);
      break;
    case MatmulKind::kNT:
      md.m = a.dim(-2), md.k = a.dim(-1), bk = b.dim(-1), md.n = b.dim(-2);
      break;
    case MatmulKind::kTN:
      md.m = a.dim(-1), md.k = a.dim(-2), bk = b.dim(-2), md.n = b.dim(-1);
      break;
  }
  if (bk != md.k) {
    throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  return md;
}

template <typename T>
Var<T> matmul_impl(const Var<T>& a, const Var<T>& b, MatmulKind kind) {
  const MatmulDims md = matmul_dims(a.value(), b.value(), kind);
  Shape out_shape = a.shape();
  out_shape[out_shape.size() - 2] = md.m;
  out_shape[out_shape.size() - 1] = md.n;
  Tensor<T> out(out_shape);
  const int64_t sa = md.m * md.k;
  const int64_t sb = md.k * md.n;
  const int64_t so = md.m * md.n;
  const auto a_rows = kind == MatmulKind::kTN ? md.k : md.m;
  const auto a_cols = kind == MatmulKind::kTN ? md.m : md.k;
  const auto b_rows = kind == MatmulKind::kNT ? md.n : md.k;
  const auto b_cols = kind == MatmulKind::kNT ? md.k : md.n;
  for (int64_t i = 0; i < md.batch; ++i) {
    CMapRM<T> A(a.value().data() + i * sa, a_rows, a_cols);
    CMapRM<T> B(b.value().data() + i * sb, b_rows, b_cols);
    MapRM<T> O(out.data() + i * so, md.m, md.n);
    switch (kind) {
      case MatmulKind::kNN: O.noalias() = A * B; break;
      case MatmulKind::kNT: O.noalias() = A * B.transpose(); break;
      case MatmulKind::kTN: O.noalias() = A.transpose() * B; break;
    }
  }
  return make_op<T>(std::move(out), {a, b}, [md, kind, a_rows, a_cols, b_rows, b_cols](Node<T>& n) {
    auto& An = n.inputs[0];
    auto& Bn = n.inputs[1];
    Tensor<T> ga, gb;
    if (An->requires_grad) ga = Tensor<T>(An->value.shape());
    if (Bn->requires_grad) gb = Tensor<T>(Bn->value.shape());
    for (int64_t i = 0; i < md.batch; ++i) {
      CMapRM<T> A(An->value.data() + i * md.m * md.k, a_rows, a_cols);
      CMapRM<T> B(Bn->value.data() + i * md.k * md.n, b_rows, b_cols);
      CMapRM<T> G(n.grad.data() + i * md.m * md.n, md.m, md.n);
      if (!ga.empty()) {
        MapRM<T> GA(ga.data() + i * md.m * md.k, a_rows, a_cols);
        switch (kind) {
          case MatmulKind::kNN: GA.noalias() = G * B.transpose(); break;
          case MatmulKind::kNT: GA.noalias() = G * B; break;
          case MatmulKind::kTN: GA.noalias() = B * G.transpose(); break;
        }
      }
      if (!gb.empty()) {
        MapRM<T> GB(gb.data() + i * md.k * md.n, b_rows, b_cols);
        switch (kind) {
          case MatmulKind::kNN: GB.noalias() = A.transpose() * G; break;
          case MatmulKind::kNT: GB.noalias() = G.transpose() * A; break;
          case MatmulKind::kTN: GB.noalias() = A * G; break;
        }
      }
    }
    if (!ga.empty()) An->accumulate(std::move(ga));
    if (!gb.empty()) Bn->accumulate(std::move(gb));
  });
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return matmul_impl(a, b, MatmulKind::kNN);
}
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  return matmul_impl(a, b, MatmulKind::kNT);
}
template <typename T>
Var<T> matmul_tn(const Var<T>& a, const Var<T>& b) {
  return matmul_impl(a, b, MatmulKind::kTN);
}

template <typename T>
Var<T> softmax(const Var<T>& a, int axis) {
  axis = normalize_axis(axis, a.ndim());
  int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  const int64_t len = a.dim(axis);
  int64_t inner = 1;
  for (int d = axis + 1; d < a.ndim(); ++d) inner *= a.dim(d);
  Tensor<T> out(a.shape());
  const T* x = a.value().data();
  T* y = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      T mx = x[base];
      for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
      T s = 0;
      for (int64_t i = 0; i < len; ++i) {
        const T e = std::exp(x[base + i * inner] - mx);
        y[base + i * inner] = e;
        s += e;
      }
      for (int64_t i = 0; i < len; ++i) y[base + i * inner] /= s;
    }
  }
  return make_op<T>(std::move(out), {a}, [outer, len, inner](Node<T>& n) {
    Tensor<T> gx(n.value.shape());
    const T* y = n.value.data();
    const T* g = n.grad.data();
    T* dx = gx.data();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * len * inner + in;
        T dot = 0;
        for (int64_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
        for (int64_t i = 0; i < len; ++i) {
          dx[base + i * inner] = y[base + i * inner] * (g[base + i * inner] - dot);
        }
      }
    }
    n.inputs[0]->accumulate(std::move(gx));
  });
}

// -------------------------------------------------------------- convolution

namespace {

// Geometry shared by im2col/col2im: an "image" of C x D x H x W sampled on an
// OD x OH x OW output grid.
struct ConvPlan {
  int64_t C = 0, D = 0, H = 0, W = 0;
  int KD = 1, KH = 1, KW = 1;
  int64_t OD = 0, OH = 0, OW = 0;
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{0, 0, 0};
  std::vector<std::array<int, 3>> taps;
  std::vector<int> tap_index;  // flat kernel index of each live tap

  int64_t nt() const { return static_cast<int64_t>(taps.size()); }
  int64_t rows() const { return C * nt(); }
  int64_t positions() const { return OD * OH * OW; }
  int64_t image_size() const { return C * D * H * W; }
  bool all_taps() const { return nt() == static_cast<int64_t>(KD) * KH * KW; }
};

void build_taps(ConvPlan& p, const std::vector<uint8_t>& mask) {
  const size_t total = static_cast<size_t>(p.KD) * p.KH * p.KW;
  if (!mask.empty() && mask.size() != total) {
    throw ShapeError("conv tap mask has " + std::to_string(mask.size()) + " entries, kernel has " +
                     std::to_string(total));
  }
  for (int kd = 0; kd < p.KD; ++kd) {
    for (int kh = 0; kh < p.KH; ++kh) {
      for (int kw = 0; kw < p.KW; ++kw) {
        const int idx = (kd * p.KH + kh) * p.KW + kw;
        if (mask.empty() || mask[static_cast<size_t>(idx)]) {
          p.taps.push_back({kd, kh, kw});
          p.tap_index.push_back(idx);
        }
      }
    }
  }
}

// Valid output range [lo, hi) along one axis for kernel offset k.
inline void valid_range(int64_t out, int64_t in, int stride, int pad, int k, int64_t& lo,
                        int64_t& hi) {
  // need 0 <= o*stride - pad + k < in
  const int64_t a = pad - k;  // o*stride >= a
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int64_t b = in - 1 + pad - k;  // o*stride <= b
  hi = b < 0 ? 0 : std::min<int64_t>(out, b / stride + 1);
  if (hi < lo) hi = lo;
}

// cols[(c*nt + t), col_offset + pos] = img[c, in-position(pos, tap t)]
template <typename T>
void im2col(const ConvPlan& p, const T* img, T* cols, int64_t ld, int64_t col_offset) {
  const int64_t nt = p.nt();
  const int64_t plane = p.OH * p.OW;
  for (int64_t c = 0; c < p.C; ++c) {
    for (int64_t t = 0; t < nt; ++t) {
      const auto [kd, kh, kw] = p.taps[static_cast<size_t>(t)];
      T* row = cols + (c * nt + t) * ld + col_offset;
      int64_t w_lo, w_hi, h_lo, h_hi;
      valid_range(p.OW, p.W, p.stride[2], p.pad[2], kw, w_lo, w_hi);
      valid_range(p.OH, p.H, p.stride[1], p.pad[1], kh, h_lo, h_hi);
      for (int64_t od = 0; od < p.OD; ++od) {
        const int64_t id = od * p.stride[0] - p.pad[0] + kd;
        T* drow = row + od * plane;
        if (id < 0 || id >= p.D) {
          std::fill(drow, drow + plane, T(0));
          continue;
        }
        for (int64_t oh = 0; oh < p.OH; ++oh) {
          T* dst = drow + oh * p.OW;
          if (oh < h_lo || oh >= h_hi) {
            std::fill(dst, dst + p.OW, T(0));
            continue;
          }
          const int64_t ih = oh * p.stride[1] - p.pad[1] + kh;
          const T* src = img + ((c * p.D + id) * p.H + ih) * p.W;
          std::fill(dst, dst + w_lo, T(0));
          if (p.stride[2] == 1) {
            const int64_t off = -p.pad[2] + kw;
            std::memcpy(dst + w_lo, src + w_lo + off, static_cast<size_t>(w_hi - w_lo) * sizeof(T));
          } else {
            for (int64_t ow = w_lo; ow < w_hi; ++ow) dst[ow] = src[ow * p.stride[2] - p.pad[2] + kw];
          }
          std::fill(dst + w_hi, dst + p.OW, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: img[c, in-position] += cols[...].
template <typename T>
void col2im(const ConvPlan& p, const T* cols, int64_t ld, int64_t col_offset, T* img) {
  const int64_t nt = p.nt();
  const int64_t plane = p.OH * p.OW;
  for (int64_t c = 0; c < p.C; ++c) {
    for (int64_t t = 0; t < nt; ++t) {
      const auto [kd, kh, kw] = p.taps[static_cast<size_t>(t)];
      const T* row = cols + (c * nt + t) * ld + col_offset;
      int64_t w_lo, w_hi, h_lo, h_hi;
      valid_range(p.OW, p.W, p.stride[2], p.pad[2], kw, w_lo, w_hi);
      valid_range(p.OH, p.H, p.stride[1], p.pad[1], kh, h_lo, h_hi);
      for (int64_t od = 0; od < p.OD; ++od) {
        const int64_t id = od * p.stride[0] - p.pad[0] + kd;
        if (id < 0 || id >= p.D) continue;
        const T* srow = row + od * plane;
        for (int64_t oh = h_lo; oh < h_hi; ++oh) {
          const int64_t ih = oh * p.stride[1] - p.pad[1] + kh;
          T* dst = img + ((c * p.D + id) * p.H + ih) * p.W;
          const T* src = srow + oh * p.OW;
          for (int64_t ow = w_lo; ow < w_hi; ++ow) dst[ow * p.stride[2] - p.pad[2] + kw] += src[ow];
        }
      }
    }
  }
}

// Gathers the live-tap columns of a [rows, C, KD*KH*KW] weight into [rows, C*nt].
template <typename T>
MatRM<T> gather_taps(const ConvPlan& p, const T* w, int64_t rows) {
  const int64_t ksize = static_cast<int64_t>(p.KD) * p.KH * p.KW;
  MatRM<T> m(rows, p.rows());
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < p.C; ++c) {
      for (int64_t t = 0; t < p.nt(); ++t) {
        m(r, c * p.nt() + t) = w[(r * p.C + c) * ksize + p.tap_index[static_cast<size_t>(t)]];
      }
    }
  }
  return m;
}

template <typename T>
void scatter_taps(const ConvPlan& p, const MatRM<T>& m, T* w) {
  const int64_t ksize = static_cast<int64_t>(p.KD) * p.KH * p.KW;
  for (int64_t r = 0; r < m.rows(); ++r) {
    for (int64_t c = 0; c < p.C; ++c) {
      for (int64_t t = 0; t < p.nt(); ++t) {
        w[(r * p.C + c) * ksize + p.tap_index[static_cast<size_t>(t)]] += m(r, c * p.nt() + t);
      }
    }
  }
}

void check_rank5(const Shape& s, const char* what) {
  if (s.size() != 5) throw ShapeError(std::string(what) + " must be 5-D, got " + shape_str(s));
}

}  // namespace

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvGeometry& g) {
  check_rank5(x.shape(), "conv3d input");
  check_rank5(w.shape(), "conv3d weight");
  const int64_t B = x.dim(0);
  const int64_t Co = w.dim(0);
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv3d: weight expects " + std::to_string(w.dim(1)) +
                     " input channels, got " + shape_str(x.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Co)) {
    throw ShapeError("conv3d: bias shape " + shape_str(bias.shape()));
  }
  auto plan = std::make_shared<ConvPlan>();
  plan->C = x.dim(1), plan->D = x.dim(2), plan->H = x.dim(3), plan->W = x.dim(4);
  plan->KD = static_cast<int>(w.dim(2)), plan->KH = static_cast<int>(w.dim(3)),
  plan->KW = static_cast<int>(w.dim(4));
  plan->stride = g.stride;
  plan->pad = g.pad;
  plan->OD = conv_out_size(plan->D, plan->KD, g.stride[0], g.pad[0]);
  plan->OH = conv_out_size(plan->H, plan->KH, g.stride[1], g.pad[1]);
  plan->OW = conv_out_size(plan->W, plan->KW, g.stride[2], g.pad[2]);
  if (plan->OD <= 0 || plan->OH <= 0 || plan->OW <= 0) {
    throw ShapeError("conv3d: empty output for input " + shape_str(x.shape()));
  }
  build_taps(*plan, g.tap_mask);

  const int64_t P = plan->positions();
  const int64_t ld = B * P;
  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(plan->rows() * ld));
  for (int64_t b = 0; b < B; ++b) {
    im2col(*plan, x.value().data() + b * plan->image_size(), cols->data(), ld, b * P);
  }
  auto wm = std::make_shared<MatRM<T>>(
      plan->all_taps() ? MatRM<T>(CMapRM<T>(w.value().data(), Co, plan->rows()))
                       : gather_taps(*plan, w.value().data(), Co));
  MatRM<T> om = (*wm) * CMapRM<T>(cols->data(), plan->rows(), ld);

  Tensor<T> out(Shape{B, Co, plan->OD, plan->OH, plan->OW});
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t co = 0; co < Co; ++co) {
      const T bv = bias.defined() ? bias.value()[co] : T(0);
      const T* src = om.data() + co * ld + b * P;
      T* dst = out.data() + (b * Co + co) * P;
      for (int64_t p = 0; p < P; ++p) dst[p] = src[p] + bv;
    }
  }

  const bool has_bias = bias.defined();
  std::vector<Var<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_op<T>(std::move(out), std::move(inputs), [plan, cols, wm, B, Co, has_bias](Node<T>& n) {
    const int64_t P = plan->positions();
    const int64_t ld = B * P;
    MatRM<T> gm(Co, ld);
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t co = 0; co < Co; ++co) {
        std::memcpy(gm.data() + co * ld + b * P, n.grad.data() + (b * Co + co) * P,
                    static_cast<size_t>(P) * sizeof(T));
      }
    }
    auto& X = n.inputs[0];
    auto& Wn = n.inputs[1];
    CMapRM<T> cm(cols->data(), plan->rows(), ld);
    if (Wn->requires_grad) {
      MatRM<T> dwm = gm * cm.transpose();
      Tensor<T> dw(Wn->value.shape());
      if (plan->all_taps()) {
        std::memcpy(dw.data(), dwm.data(), static_cast<size_t>(dw.numel()) * sizeof(T));
      } else {
        scatter_taps(*plan, dwm, dw.data());
      }
      Wn->accumulate(std::move(dw));
    }
    if (has_bias && n.inputs[2]->requires_grad) {
      Tensor<T> db(Shape{Co});
      for (int64_t co = 0; co < Co; ++co) db[co] = gm.row(co).sum();
      n.inputs[2]->accumulate(std::move(db));
    }
    if (X->requires_grad) {
      MatRM<T> dcols = wm->transpose() * gm;
      Tensor<T> dx(X->value.shape());
      for (int64_t b = 0; b < B; ++b) {
        col2im(*plan, dcols.data(), ld, b * P, dx.data() + b * plan->image_size());
      }
      X->accumulate(std::move(dx));
    }
  });
}

template <typename T>
Var<T> conv_transpose3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                        const ConvGeometry& g) {
  check_rank5(x.shape(), "conv_transpose3d input");
  check_rank5(w.shape(), "conv_transpose3d weight");
  if (!g.tap_mask.empty()) throw ShapeError("conv_transpose3d does not take a tap mask");
  const int64_t B = x.dim(0);
  const int64_t Ci = x.dim(1);
  if (w.dim(0) != Ci) {
    throw ShapeError("conv_transpose3d: weight expects " + std::to_string(w.dim(0)) +
                     " input channels, got " + shape_str(x.shape()));
  }
  const int64_t Co = w.dim(1);
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Co)) {
    throw ShapeError("conv_transpose3d: bias shape " + shape_str(bias.shape()));
  }
  // The plan describes the adjoint convolution: output image sampled on the input grid.
  auto plan = std::make_shared<ConvPlan>();
  plan->C = Co;
  plan->KD = static_cast<int>(w.dim(2)), plan->KH = static_cast<int>(w.dim(3)),
  plan->KW = static_cast<int>(w.dim(4));
  plan->D = conv_transpose_out_size(x.dim(2), plan->KD, g.stride[0], g.pad[0], g.output_pad[0]);
  plan->H = conv_transpose_out_size(x.dim(3), plan->KH, g.stride[1], g.pad[1], g.output_pad[1]);
  plan->W = conv_transpose_out_size(x.dim(4), plan->KW, g.stride[2], g.pad[2], g.output_pad[2]);
  plan->OD = x.dim(2), plan->OH = x.dim(3), plan->OW = x.dim(4);
  plan->stride = g.stride;
  plan->pad = g.pad;
  if (plan->D <= 0 || plan->H <= 0 || plan->W <= 0) {
    throw ShapeError("conv_transpose3d: empty output for input " + shape_str(x.shape()));
  }
  build_taps(*plan, {});

  const int64_t Pin = plan->positions();
  const int64_t ld = B * Pin;
  auto xm = std::make_shared<MatRM<T>>(Ci, ld);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t ci = 0; ci < Ci; ++ci) {
      std::memcpy(xm->data() + ci * ld + b * Pin, x.value().data() + (b * Ci + ci) * Pin,
                  static_cast<size_t>(Pin) * sizeof(T));
    }
  }
  CMapRM<T> wm(w.value().data(), Ci, plan->rows());
  MatRM<T> cols = wm.transpose() * (*xm);
  Tensor<T> out(Shape{B, Co, plan->D, plan->H, plan->W});
  const int64_t img = plan->image_size();
  for (int64_t b = 0; b < B; ++b) col2im(*plan, cols.data(), ld, b * Pin, out.data() + b * img);
  if (bias.defined()) {
    const int64_t plane = plan->D * plan->H * plan->W;
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t co = 0; co < Co; ++co) {
        T* dst = out.data() + (b * Co + co) * plane;
        const T bv = bias.value()[co];
        for (int64_t i = 0; i < plane; ++i) dst[i] += bv;
      }
    }
  }

  const bool has_bias = bias.defined();
  std::vector<Var<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_op<T>(std::move(out), std::move(inputs), [plan, xm, B, Ci, Co, has_bias](Node<T>& n) {
    const int64_t Pin = plan->positions();
    const int64_t ld = B * Pin;
    const int64_t img = plan->image_size();
    MatRM<T> gcols(plan->rows(), ld);
    for (int64_t b = 0; b < B; ++b) im2col(*plan, n.grad.data() + b * img, gcols.data(), ld, b * Pin);
    auto& X = n.inputs[0];
    auto& Wn = n.inputs[1];
    if (Wn->requires_grad) {
      Tensor<T> dw(Wn->value.shape());
      MapRM<T>(dw.data(), Ci, plan->rows()).noalias() = (*xm) * gcols.transpose();
      Wn->accumulate(std::move(dw));
    }
    if (has_bias && n.inputs[2]->requires_grad) {
      const int64_t plane = plan->D * plan->H * plan->W;
      Tensor<T> db(Shape{Co});
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t co = 0; co < Co; ++co) {
          const T* src = n.grad.data() + (b * Co + co) * plane;
          T s = 0;
          for (int64_t i = 0; i < plane; ++i) s += src[i];
          db[co] += s;
        }
      }
      n.inputs[2]->accumulate(std::move(db));
    }
    if (X->requires_grad) {
      CMapRM<T> wm(Wn->value.data(), Ci, plan->rows());
      MatRM<T> dxm = wm * gcols;
      Tensor<T> dx(X->value.shape());
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t ci = 0; ci < Ci; ++ci) {
          std::memcpy(dx.data() + (b * Ci + ci) * Pin, dxm.data() + ci * ld + b * Pin,
                      static_cast<size_t>(Pin) * sizeof(T));
        }
      }
      X->accumulate(std::move(dx));
    }
  });
}

template <typename T>
Var<T> avg_pool2(const Var<T>& a) {
  if (a.ndim() < 2) throw ShapeError("avg_pool2 needs at least 2 dims");
  const int64_t H = a.dim(-2);
  const int64_t W = a.dim(-1);
  const int64_t OH = H / 2;
  const int64_t OW = W / 2;
  if (OH == 0 || OW == 0) throw ShapeError("avg_pool2: input too small " + shape_str(a.shape()));
  const int64_t planes = a.numel() / (H * W);
  Shape out_shape = a.shape();
  out_shape[out_shape.size() - 2] = OH;
  out_shape[out_shape.size() - 1] = OW;
  Tensor<T> out(out_shape);
  const T* x = a.value().data();
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t i = 0; i < OH; ++i) {
      for (int64_t j = 0; j < OW; ++j) {
        const T* s = x + p * H * W + 2 * i * W + 2 * j;
        out[(p * OH + i) * OW + j] = T(0.25) * (s[0] + s[1] + s[W] + s[W + 1]);
      }
    }
  }
  return make_op<T>(std::move(out), {a}, [planes, H, W, OH, OW](Node<T>& n) {
    Tensor<T> gx(n.inputs[0]->value.shape());
    for (int64_t p = 0; p < planes; ++p) {
      for (int64_t i = 0; i < OH; ++i) {
        for (int64_t j = 0; j < OW; ++j) {
          const T g = T(0.25) * n.grad[(p * OH + i) * OW + j];
          T* d = gx.data() + p * H * W + 2 * i * W + 2 * j;
          d[0] += g, d[1] += g, d[W] += g, d[W + 1] += g;
        }
      }
    }
    n.inputs[0]->accumulate(std::move(gx));
  });
}

// ----------------------------------------------------------------- likelihood

namespace {

template <typename T>
inline T std_normal_cdf(T t) {
  return T(0.5) * std::erfc(-t * T(0.70710678118654752440));
}

template <typename T>
inline T std_normal_pdf(T t) {
  return T(0.39894228040143267794) * std::exp(T(-0.5) * t * t);
}

}  // namespace

template <typename T>
Var<T> gaussian_likelihood(const Var<T>& y, const Var<T>& mu, const Var<T>& sigma) {
  if (y.shape() != mu.shape() || y.shape() != sigma.shape()) {
    throw ShapeError("gaussian_likelihood: " + shape_str(y.shape()) + ", " + shape_str(mu.shape()) +
                     ", " + shape_str(sigma.shape()));
  }
  Tensor<T> out(y.shape());
  const T* py = y.value().data();
  const T* pm = mu.value().data();
  const T* ps = sigma.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    // Evaluated on the lower tail for accuracy far from the mean.
    const T v = std::abs(py[i] - pm[i]);
    out[i] = std_normal_cdf((T(0.5) - v) / ps[i]) - std_normal_cdf((T(-0.5) - v) / ps[i]);
  }
  return make_op<T>(std::move(out), {y, mu, sigma}, [](Node<T>& n) {
    const Tensor<T>& yv = n.inputs[0]->value;
    const Tensor<T>& mv = n.inputs[1]->value;
    const Tensor<T>& sv = n.inputs[2]->value;
    const int64_t N = yv.numel();
    Tensor<T> gy(yv.shape()), gs(yv.shape());
    for (int64_t i = 0; i < N; ++i) {
      const T s = sv[i];
      const T a = (yv[i] - mv[i] + T(0.5)) / s;
      const T b = (yv[i] - mv[i] - T(0.5)) / s;
      const T pa = std_normal_pdf(a);
      const T pb = std_normal_pdf(b);
      gy[i] = n.grad[i] * (pa - pb) / s;
      gs[i] = n.grad[i] * (b * pb - a * pa) / s;
    }
    if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(gy);
    if (n.inputs[1]->requires_grad) {
      for (auto& v : gy.values()) v = -v;
      n.inputs[1]->accumulate(std::move(gy));
    }
    if (n.inputs[2]->requires_grad) n.inputs[2]->accumulate(std::move(gs));
  });
}

#define BISIC_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                          \
  template Var<T> div(const Var<T>&, const Var<T>&);                                          \
  template Var<T> add_scalar(const Var<T>&, T);                                               \
  template Var<T> mul_scalar(const Var<T>&, T);                                               \
  template Var<T> neg(const Var<T>&);                                                         \
  template Var<T> exp(const Var<T>&);                                                         \
  template Var<T> log(const Var<T>&);                                                         \
  template Var<T> tanh(const Var<T>&);                                                        \
  template Var<T> sigmoid(const Var<T>&);                                                     \
  template Var<T> softplus(const Var<T>&);                                                    \
  template Var<T> relu(const Var<T>&);                                                        \
  template Var<T> leaky_relu(const Var<T>&, T);                                               \
  template Var<T> square(const Var<T>&);                                                      \
  template Var<T> abs(const Var<T>&);                                                         \
  template Var<T> pow_scalar(const Var<T>&, T);                                               \
  template Var<T> clamp_min(const Var<T>&, T);                                                \
  template Var<T> lower_bound(const Var<T>&, T);                                              \
  template Var<T> detach(const Var<T>&);                                                      \
  template Var<T> sum(const Var<T>&);                                                         \
  template Var<T> mean(const Var<T>&);                                                        \
  template Var<T> sum_axes(const Var<T>&, std::vector<int>, bool);                            \
  template Var<T> reshape(const Var<T>&, Shape);                                              \
  template Var<T> permute(const Var<T>&, std::vector<int>);                                   \
  template Var<T> concat(const std::vector<Var<T>>&, int);                                    \
  template Var<T> slice(const Var<T>&, int, int64_t, int64_t);                                \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                       \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                    \
  template Var<T> matmul_tn(const Var<T>&, const Var<T>&);                                    \
  template Var<T> softmax(const Var<T>&, int);                                                \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvGeometry&);   \
  template Var<T> conv_transpose3d(const Var<T>&, const Var<T>&, const Var<T>&,               \
                                   const ConvGeometry&);                                      \
  template Var<T> avg_pool2(const Var<T>&);                                                   \
  template Var<T> gaussian_likelihood(const Var<T>&, const Var<T>&, const Var<T>&);

BISIC_INSTANTIATE_OPS(float)
BISIC_INSTANTIATE_OPS(double)

}  // namespace bisic::ops
