#pragma once

// Autodiff primitives. Each op validates shapes, runs the forward kernel and,
// when a tape is active and gradient can flow, records a closure that
// accumulates adjoints into its inputs. Closures call kernels directly; they
// never re-enter the tape.

#include <cstring>
#include <vector>

#include "sa2vp/tensor.hpp"

namespace sa2vp {

namespace detail {

inline int normalize_axis(int axis, int ndim) {
  int a = axis < 0 ? axis + ndim : axis;
  check(a >= 0 && a < ndim, ErrKind::shape, "axis out of range");
  return a;
}

// Folds shape around `axis` into (outer, n, inner).
inline void fold_axis(const Shape& s, int axis, int64_t& outer, int64_t& n, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  n = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i)
    if (small[i] != big[off + i]) return false;
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise (right-aligned suffix broadcast on the second operand).
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(detail::is_suffix(b.shape(), a.shape()), ErrKind::shape,
        "add: shape " + shape_str(b.shape()) + " is not a suffix of " + shape_str(a.shape()));
  auto out = Tensor<T>::zeros(a.shape());
  kernels::binary(kernels::BinOp::add, a.data(), b.data(), out.data(), a.numel(), b.numel());
  if (detail::should_record<T>(a, b)) {
    Tape<T>::current()->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        detail::ensure_grad(*a.node());
        kernels::axpy(T(1), gy, a.grad_mut().data(), a.numel());
      }
      if (b.requires_grad()) {
        detail::ensure_grad(*b.node());
        kernels::reduce_suffix_add(gy, b.grad_mut().data(), a.numel(), b.numel());
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check(detail::is_suffix(b.shape(), a.shape()), ErrKind::shape, "sub: incompatible shapes");
  auto out = Tensor<T>::zeros(a.shape());
  kernels::binary(kernels::BinOp::sub, a.data(), b.data(), out.data(), a.numel(), b.numel());
  if (detail::should_record<T>(a, b)) {
    Tape<T>::current()->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        detail::ensure_grad(*a.node());
        kernels::axpy(T(1), gy, a.grad_mut().data(), a.numel());
      }
      if (b.requires_grad()) {
        detail::ensure_grad(*b.node());
        std::vector<T> red(static_cast<size_t>(b.numel()), T(0));
        kernels::reduce_suffix_add(gy, red.data(), a.numel(), b.numel());
        kernels::axpy(T(-1), red.data(), b.grad_mut().data(), b.numel());
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(detail::is_suffix(b.shape(), a.shape()), ErrKind::shape, "mul: incompatible shapes");
  auto out = Tensor<T>::zeros(a.shape());
  kernels::binary(kernels::BinOp::mul, a.data(), b.data(), out.data(), a.numel(), b.numel());
  if (detail::should_record<T>(a, b)) {
    Tape<T>::current()->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        detail::ensure_grad(*a.node());
        std::vector<T> tmp(static_cast<size_t>(a.numel()));
        kernels::binary(kernels::BinOp::mul, gy, b.data(), tmp.data(), a.numel(), b.numel());
        kernels::axpy(T(1), tmp.data(), a.grad_mut().data(), a.numel());
      }
      if (b.requires_grad()) {
        detail::ensure_grad(*b.node());
        std::vector<T> tmp(static_cast<size_t>(a.numel()));
        kernels::binary(kernels::BinOp::mul, gy, a.data(), tmp.data(), a.numel(), a.numel());
        kernels::reduce_suffix_add(tmp.data(), b.grad_mut().data(), a.numel(), b.numel());
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = Tensor<T>::zeros(a.shape());
  kernels::scale(a.data(), s, out.data(), a.numel());
  if (detail::should_record<T>(a)) {
    Tape<T>::current()->record([a, out, s]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*a.node());
      kernels::axpy(s, out.grad().data(), a.grad_mut().data(), a.numel());
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  kernels::relu(x.data(), out.data(), x.numel());
  if (detail::should_record<T>(x)) {
    Tape<T>::current()->record([x, out]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      kernels::relu_backward(x.data(), out.grad().data(), x.grad_mut().data(), x.numel());
    });
    out.set_requires_grad(true);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products.
// ---------------------------------------------------------------------------

// A[..., k] x B[k, n] -> [..., n]; leading axes of A are folded.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() >= 2 && b.ndim() == 2, ErrKind::shape, "matmul expects A[...,k], B[k,n]");
  int64_t k = a.dim(-1), n = b.dim(1);
  check(b.dim(0) == k, ErrKind::shape,
        "matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int64_t m = a.numel() / k;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  auto out = Tensor<T>::zeros(out_shape);
  kernels::matmul_nn(a.data(), b.data(), out.data(), m, k, n);
  if (detail::should_record<T>(a, b)) {
    Tape<T>::current()->record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        detail::ensure_grad(*a.node());
        std::vector<T> tmp(static_cast<size_t>(m) * k);
        kernels::matmul_nt(gy, b.data(), tmp.data(), m, n, k);
        kernels::axpy(T(1), tmp.data(), a.grad_mut().data(), a.numel());
      }
      if (b.requires_grad()) {
        detail::ensure_grad(*b.node());
        std::vector<T> tmp(static_cast<size_t>(k) * n);
        kernels::matmul_tn(a.data(), gy, tmp.data(), k, m, n);
        kernels::axpy(T(1), tmp.data(), b.grad_mut().data(), b.numel());
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

// Batched products on 3-D tensors.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
        ErrKind::shape, "bmm: incompatible shapes");
  int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  auto out = Tensor<T>::zeros({nb, m, n});
  kernels::bmm_nn(a.data(), b.data(), out.data(), nb, m, k, n);
  if (detail::should_record<T>(a, b)) {
    Tape<T>::current()->record([a, b, out, nb, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        detail::ensure_grad(*a.node());
        std::vector<T> tmp(static_cast<size_t>(nb) * m * k);
        kernels::bmm_nt(gy, b.data(), tmp.data(), nb, m, n, k);
        kernels::axpy(T(1), tmp.data(), a.grad_mut().data(), a.numel());
      }
      if (b.requires_grad()) {
        detail::ensure_grad(*b.node());
        std::vector<T> tmp(static_cast<size_t>(nb) * k * n);
        kernels::bmm_tn(a.data(), gy, tmp.data(), nb, k, m, n);
        kernels::axpy(T(1), tmp.data(), b.grad_mut().data(), b.numel());
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

// a[b,m,k] x b[b,n,k]^T -> [b,m,n]
template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
        ErrKind::shape, "bmm_nt: incompatible shapes");
  int64_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  auto out = Tensor<T>::zeros({nb, m, n});
  kernels::bmm_nt(a.data(), b.data(), out.data(), nb, m, k, n);
  if (detail::should_record<T>(a, b)) {
    Tape<T>::current()->record([a, b, out, nb, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      if (a.requires_grad()) {
        detail::ensure_grad(*a.node());
        std::vector<T> tmp(static_cast<size_t>(nb) * m * k);
        kernels::bmm_nn(gy, b.data(), tmp.data(), nb, m, n, k);
        kernels::axpy(T(1), tmp.data(), a.grad_mut().data(), a.numel());
      }
      if (b.requires_grad()) {
        detail::ensure_grad(*b.node());
        std::vector<T> tmp(static_cast<size_t>(nb) * n * k);
        kernels::bmm_tn(gy, a.data(), tmp.data(), nb, n, m, k);
        kernels::axpy(T(1), tmp.data(), b.grad_mut().data(), b.numel());
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layout.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check(numel_of(shape) == x.numel(), ErrKind::shape,
        "reshape: element count mismatch for " + shape_str(shape));
  auto out = Tensor<T>::from(std::move(shape), {x.values().begin(), x.values().end()});
  if (detail::should_record<T>(x)) {
    Tape<T>::current()->record([x, out]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      kernels::axpy(T(1), out.grad().data(), x.grad_mut().data(), x.numel());
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::vector<int> axes) {
  check(static_cast<int>(axes.size()) == x.ndim(), ErrKind::shape, "permute: rank mismatch");
  Shape out_shape(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) out_shape[i] = x.shape()[axes[i]];
  auto out = Tensor<T>::zeros(out_shape);
  kernels::permute(x.data(), out.data(), x.shape(), axes);
  if (detail::should_record<T>(x)) {
    std::vector<int> inv(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = static_cast<int>(i);
    Tape<T>::current()->record([x, out, inv]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      std::vector<T> tmp(static_cast<size_t>(x.numel()));
      kernels::permute(out.grad().data(), tmp.data(), out.shape(), inv);
      kernels::axpy(T(1), tmp.data(), x.grad_mut().data(), x.numel());
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, std::vector<int64_t> indices) {
  int a = detail::normalize_axis(axis, x.ndim());
  int64_t outer, n, inner;
  detail::fold_axis(x.shape(), a, outer, n, inner);
  for (int64_t i : indices)
    check(i >= 0 && i < n, ErrKind::validation, "index_select: index out of range");
  int64_t cnt = static_cast<int64_t>(indices.size());
  Shape out_shape = x.shape();
  out_shape[a] = cnt;
  auto out = Tensor<T>::zeros(out_shape);
  kernels::gather(x.data(), indices.data(), cnt, out.data(), outer, n, inner);
  if (detail::should_record<T>(x)) {
    Tape<T>::current()->record([x, out, indices, outer, n, inner, cnt]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      kernels::scatter_add(out.grad().data(), indices.data(), cnt, x.grad_mut().data(), outer, n,
                           inner);
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  check(!xs.empty(), ErrKind::validation, "concat: no inputs");
  int a = detail::normalize_axis(axis, xs[0].ndim());
  Shape out_shape = xs[0].shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    check(x.ndim() == xs[0].ndim(), ErrKind::shape, "concat: rank mismatch");
    for (int i = 0; i < x.ndim(); ++i)
      check(i == a || x.shape()[i] == out_shape[i], ErrKind::shape, "concat: shape mismatch");
    total += x.dim(a);
  }
  out_shape[a] = total;
  auto out = Tensor<T>::zeros(out_shape);
  int64_t outer, n_out, inner;
  detail::fold_axis(out_shape, a, outer, n_out, inner);
  int64_t off = 0;
  for (const auto& x : xs) {
    int64_t nx = x.dim(a);
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * n_out + off) * inner, x.data() + o * nx * inner,
                  sizeof(T) * static_cast<size_t>(nx * inner));
    off += nx;
  }
  bool any_rg = false;
  for (const auto& x : xs) any_rg = any_rg || x.requires_grad();
  if (Tape<T>::current() && any_rg) {
    auto inputs = xs;
    Tape<T>::current()->record([inputs, out, outer, n_out, inner]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      int64_t off = 0;
      for (auto& x : inputs) {
        int64_t nx = x.numel() / (outer * inner);
        if (x.requires_grad()) {
          detail::ensure_grad(*x.node());
          T* gx = x.grad_mut().data();
          for (int64_t o = 0; o < outer; ++o) {
            const T* src = gy + (o * n_out + off) * inner;
            T* dst = gx + o * nx * inner;
            for (int64_t i = 0; i < nx * inner; ++i) dst[i] += src[i];
          }
        }
        off += nx;
      }
    });
    out.set_requires_grad(true);
  }
  return out;
}

// Tiles x along a new leading axis of size b.
template <typename T>
Tensor<T> expand_front(const Tensor<T>& x, int64_t b) {
  Shape out_shape;
  out_shape.push_back(b);
  for (int64_t d : x.shape()) out_shape.push_back(d);
  auto out = Tensor<T>::zeros(out_shape);
  int64_t stride = x.numel();
  for (int64_t i = 0; i < b; ++i)
    std::memcpy(out.data() + i * stride, x.data(), sizeof(T) * static_cast<size_t>(stride));
  if (detail::should_record<T>(x)) {
    Tape<T>::current()->record([x, out, b, stride]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      kernels::reduce_suffix_add(out.grad().data(), x.grad_mut().data(), b * stride, stride);
    });
    out.set_requires_grad(true);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization, softmax, reductions, loss.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  int a = detail::normalize_axis(axis, x.ndim());
  check(kernels::all_finite(x.data(), x.numel()), ErrKind::numeric,
        "softmax: non-finite input");
  int64_t outer, n, inner;
  detail::fold_axis(x.shape(), a, outer, n, inner);
  auto out = Tensor<T>::zeros(x.shape());
  kernels::softmax(x.data(), out.data(), outer, n, inner);
  if (detail::should_record<T>(x)) {
    Tape<T>::current()->record([x, out, outer, n, inner]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      kernels::softmax_backward(out.data(), out.grad().data(), x.grad_mut().data(), outer, n,
                                inner);
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  check(x.ndim() >= 1, ErrKind::shape, "layer_norm: rank-0 input");
  int64_t d = x.dim(-1);
  check(gain.numel() == d && bias.numel() == d, ErrKind::shape,
        "layer_norm: gain/bias length must equal last dimension");
  check(eps > 0, ErrKind::validation, "layer_norm: eps must be positive");
  int64_t rows = x.numel() / d;
  auto out = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  kernels::layer_norm(x.data(), gain.data(), bias.data(), eps, out.data(), mean->data(),
                      rstd->data(), rows, d);
  if (detail::should_record<T>(x, gain, bias)) {
    Tape<T>::current()->record([x, gain, bias, out, mean, rstd, rows, d]() mutable {
      if (!out.has_grad()) return;
      T* gx = nullptr;
      T* gg = nullptr;
      T* gb = nullptr;
      if (x.requires_grad()) {
        detail::ensure_grad(*x.node());
        gx = x.grad_mut().data();
      }
      if (gain.requires_grad()) {
        detail::ensure_grad(*gain.node());
        gg = gain.grad_mut().data();
      }
      if (bias.requires_grad()) {
        detail::ensure_grad(*bias.node());
        gb = bias.grad_mut().data();
      }
      std::vector<T> scratch;
      if (!gx) {
        scratch.assign(static_cast<size_t>(rows * d), T(0));
        gx = scratch.data();
      }
      kernels::layer_norm_backward(x.data(), gain.data(), mean->data(), rstd->data(),
                                   out.grad().data(), gx, gg, gb, rows, d);
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, int axis, bool mean_reduce) {
  int a = detail::normalize_axis(axis, x.ndim());
  int64_t outer, n, inner;
  detail::fold_axis(x.shape(), a, outer, n, inner);
  Shape out_shape;
  for (int i = 0; i < x.ndim(); ++i)
    if (i != a) out_shape.push_back(x.shape()[i]);
  auto out = Tensor<T>::zeros(out_shape);
  kernels::sum_axis(x.data(), out.data(), outer, n, inner, mean_reduce);
  if (detail::should_record<T>(x)) {
    T s = mean_reduce ? T(1) / T(n) : T(1);
    Tape<T>::current()->record([x, out, outer, n, inner, s]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      kernels::broadcast_axis_add(out.grad().data(), x.grad_mut().data(), outer, n, inner, s);
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis) {
  return sum_axis(x, axis, true);
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  auto out = Tensor<T>::scalar(total);
  if (detail::should_record<T>(x)) {
    Tape<T>::current()->record([x, out]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*x.node());
      T g = out.grad()[0];
      T* gx = x.grad_mut().data();
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
    out.set_requires_grad(true);
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
  check(logits.ndim() == 2, ErrKind::shape, "cross_entropy expects [n, classes] logits");
  int64_t rows = logits.dim(0), classes = logits.dim(1);
  check(static_cast<int64_t>(labels.size()) == rows, ErrKind::validation,
        "cross_entropy: label count mismatch");
  for (int64_t y : labels)
    check(y >= 0 && y < classes, ErrKind::validation, "cross_entropy: label out of range");
  check(kernels::all_finite(logits.data(), logits.numel()), ErrKind::numeric,
        "cross_entropy: non-finite logits");
  T loss;
  kernels::cross_entropy(logits.data(), labels.data(), rows, classes, &loss);
  auto out = Tensor<T>::scalar(loss);
  if (detail::should_record<T>(logits)) {
    auto lab = std::make_shared<std::vector<int64_t>>(labels);
    Tape<T>::current()->record([logits, out, lab, rows, classes]() mutable {
      if (!out.has_grad()) return;
      detail::ensure_grad(*logits.node());
      kernels::cross_entropy_backward(logits.data(), lab->data(), out.grad()[0],
                                      logits.grad_mut().data(), rows, classes);
    });
    out.set_requires_grad(true);
  }
  return out;
}

// Patch extraction as a constant rearrangement (images carry no gradient).
template <typename T>
Tensor<T> im2col(const Tensor<T>& images, int64_t patch) {
  check(images.ndim() == 4, ErrKind::shape, "im2col expects [B,C,H,W]");
  int64_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  check(h % patch == 0 && w % patch == 0, ErrKind::validation,
        "image size must be divisible by patch size");
  int64_t gh = h / patch, gw = w / patch;
  auto out = Tensor<T>::zeros({b * gh * gw, c * patch * patch});
  kernels::im2col(images.data(), out.data(), b, c, h, w, patch);
  return out;
}

}  // namespace sa2vp
