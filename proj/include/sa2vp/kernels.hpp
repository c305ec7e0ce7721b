#pragma once

// Dense array kernels backing the tensor ops. Two backends:
//   ref  -- plain textbook loops, kept as the comparison baseline for tests
//   par  -- OpenMP-parallel with packed/multi-accumulator inner loops
// Parallelism is always over independent output elements, so results do not
// depend on the thread count. The two backends may differ by rounding only
// (different accumulation orders); tests compare them under a tight tolerance.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sa2vp/common.hpp"

namespace sa2vp::kernels {

enum class Backend { parallel, reference };

inline std::atomic<Backend>& backend_flag() {
  static std::atomic<Backend> b{Backend::parallel};
  return b;
}
inline Backend backend() { return backend_flag().load(std::memory_order_relaxed); }
inline void set_backend(Backend b) { backend_flag().store(b, std::memory_order_relaxed); }

inline int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Minimum element count before a loop is worth a parallel region.
inline constexpr int64_t kGrain = 4096;

namespace detail {

// Contiguous dot product with a fixed lane structure: two SIMD accumulators
// plus a scalar tail, reduced in a fixed order. Results do not depend on the
// thread count or the run, only on the build.
#if defined(__GNUC__) && !defined(SA2VP_NO_SIMD)

template <typename T>
struct SimdLanes;
template <>
struct SimdLanes<double> {
  typedef double V __attribute__((vector_size(32)));  // 4 doubles
  static constexpr int width = 4;
};
template <>
struct SimdLanes<float> {
  typedef float V __attribute__((vector_size(32)));  // 8 floats
  static constexpr int width = 8;
};

template <typename T>
inline T dot_lanes(const T* a, const T* b, int64_t k) {
  using L = SimdLanes<T>;
  using V = typename L::V;
  constexpr int w = L::width;
  V acc0{}, acc1{};
  int64_t i = 0;
  for (; i + 2 * w <= k; i += 2 * w) {
    V x0, y0, x1, y1;
    __builtin_memcpy(&x0, a + i, sizeof(V));
    __builtin_memcpy(&y0, b + i, sizeof(V));
    __builtin_memcpy(&x1, a + i + w, sizeof(V));
    __builtin_memcpy(&y1, b + i + w, sizeof(V));
    acc0 += x0 * y0;
    acc1 += x1 * y1;
  }
  V acc = acc0 + acc1;
  T sum = 0;
  for (int lane = 0; lane < w; ++lane) sum += acc[lane];
  for (; i < k; ++i) sum += a[i] * b[i];
  return sum;
}

#else

template <typename T>
inline T dot_lanes(const T* a, const T* b, int64_t k) {
  T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  int64_t i = 0;
  for (; i + 4 <= k; i += 4) {
    a0 += a[i] * b[i];
    a1 += a[i + 1] * b[i + 1];
    a2 += a[i + 2] * b[i + 2];
    a3 += a[i + 3] * b[i + 3];
  }
  T t = 0;
  for (; i < k; ++i) t += a[i] * b[i];
  return ((a0 + a1) + (a2 + a3)) + t;
}

#endif

template <typename T>
inline void transpose2d(const T* a, T* out, int64_t rows, int64_t cols, bool par) {
#ifdef _OPENMP
#pragma omp parallel for if (par && rows * cols > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
  (void)par;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Matrix products. nn: C[m,n] = A[m,k] B[k,n]; nt: B given as [n,k];
// tn: A given as [k,m].
// ---------------------------------------------------------------------------

namespace ref {

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

}  // namespace ref

namespace par {

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for if (m * n * k > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) c[i * n + j] = detail::dot_lanes(arow, b + j * k, k);
  }
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  // Pack B^T once so every dot runs over contiguous memory.
  std::vector<T> bt(static_cast<size_t>(k) * n);
  detail::transpose2d(b, bt.data(), k, n, true);
  matmul_nt(a, bt.data(), c, m, k, n);
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  std::vector<T> at(static_cast<size_t>(m) * k);
  detail::transpose2d(a, at.data(), k, m, true);
  matmul_nn(at.data(), b, c, m, k, n);
}

}  // namespace par

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  backend() == Backend::reference ? ref::matmul_nn(a, b, c, m, k, n) : par::matmul_nn(a, b, c, m, k, n);
}
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  backend() == Backend::reference ? ref::matmul_nt(a, b, c, m, k, n) : par::matmul_nt(a, b, c, m, k, n);
}
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  backend() == Backend::reference ? ref::matmul_tn(a, b, c, m, k, n) : par::matmul_tn(a, b, c, m, k, n);
}

// Batched variants over a leading batch axis.
template <typename T>
void bmm_nn(const T* a, const T* b, T* c, int64_t nb, int64_t m, int64_t k, int64_t n) {
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < nb; ++i) ref::matmul_nn(a + i * m * k, b + i * k * n, c + i * m * n, m, k, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (nb * m * k * n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < nb; ++i) {
    // Small per-batch mats; direct loops beat packing here.
    const T* ab = a + i * m * k;
    const T* bb = b + i * k * n;
    T* cb = c + i * m * n;
    for (int64_t r = 0; r < m; ++r) {
      for (int64_t j = 0; j < n; ++j) cb[r * n + j] = 0;
      for (int64_t p = 0; p < k; ++p) {
        T av = ab[r * k + p];
        const T* brow = bb + p * n;
        T* crow = cb + r * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void bmm_nt(const T* a, const T* b, T* c, int64_t nb, int64_t m, int64_t k, int64_t n) {
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < nb; ++i) ref::matmul_nt(a + i * m * k, b + i * n * k, c + i * m * n, m, k, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (nb * m * k * n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < nb; ++i) {
    const T* ab = a + i * m * k;
    const T* bb = b + i * n * k;
    T* cb = c + i * m * n;
    for (int64_t r = 0; r < m; ++r)
      for (int64_t j = 0; j < n; ++j) cb[r * n + j] = detail::dot_lanes(ab + r * k, bb + j * k, k);
  }
}

template <typename T>
void bmm_tn(const T* a, const T* b, T* c, int64_t nb, int64_t m, int64_t k, int64_t n) {
  // a given as [nb, k, m]
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < nb; ++i) ref::matmul_tn(a + i * k * m, b + i * k * n, c + i * m * n, m, k, n);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (nb * m * k * n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < nb; ++i) ref::matmul_tn(a + i * k * m, b + i * k * n, c + i * m * n, m, k, n);
}

// ---------------------------------------------------------------------------
// Elementwise. Binary ops support right-aligned suffix broadcast: the second
// operand's length must divide the first's (its shape is a suffix).
// ---------------------------------------------------------------------------

enum class BinOp { add, sub, mul };

template <typename T>
void binary(BinOp op, const T* a, const T* b, T* out, int64_t n, int64_t bn) {
  auto body = [&](int64_t i) {
    T bv = b[i % bn];
    switch (op) {
      case BinOp::add: out[i] = a[i] + bv; break;
      case BinOp::sub: out[i] = a[i] - bv; break;
      case BinOp::mul: out[i] = a[i] * bv; break;
    }
  };
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) body(i);
}

template <typename T>
void scale(const T* a, T s, T* out, int64_t n) {
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

// y += s * x, the workhorse of gradient accumulation.
template <typename T>
void axpy(T s, const T* x, T* y, int64_t n) {
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < n; ++i) y[i] += s * x[i];
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) y[i] += s * x[i];
}

// Accumulate a suffix-broadcast gradient: fold [n] onto [bn] by summing the
// repeats. Serial over repeats per output slot, parallel over slots.
template <typename T>
void reduce_suffix_add(const T* g, T* out, int64_t n, int64_t bn) {
  int64_t reps = n / bn;
  if (backend() == Backend::reference) {
    for (int64_t j = 0; j < bn; ++j) {
      T acc = 0;
      for (int64_t r = 0; r < reps; ++r) acc += g[r * bn + j];
      out[j] += acc;
    }
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (n > kGrain) schedule(static)
#endif
  for (int64_t j = 0; j < bn; ++j) {
    T acc = 0;
    for (int64_t r = 0; r < reps; ++r) acc += g[r * bn + j];
    out[j] += acc;
  }
}

template <typename T>
void relu(const T* x, T* y, int64_t n) {
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0 ? x[i] : T(0);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0 ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, int64_t n) {
  // Subgradient at 0 is 0.
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < n; ++i) gx[i] += x[i] > 0 ? gy[i] : T(0);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) gx[i] += x[i] > 0 ? gy[i] : T(0);
}

// ---------------------------------------------------------------------------
// Row-structured ops. Layouts are (outer, n, inner): the op runs along the n
// axis for every (outer, inner) pair.
// ---------------------------------------------------------------------------

template <typename T>
void softmax(const T* x, T* y, int64_t outer, int64_t n, int64_t inner) {
  int64_t slices = outer * inner;
  auto body = [&](int64_t s) {
    int64_t o = s / inner, in = s % inner;
    const T* xs = x + o * n * inner + in;
    T* ys = y + o * n * inner + in;
    T mx = xs[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, xs[i * inner]);
    T sum = 0;
    for (int64_t i = 0; i < n; ++i) {
      T e = std::exp(xs[i * inner] - mx);
      ys[i * inner] = e;
      sum += e;
    }
    T invs = T(1) / sum;
    for (int64_t i = 0; i < n; ++i) ys[i * inner] *= invs;
  };
  if (backend() == Backend::reference) {
    for (int64_t s = 0; s < slices; ++s) body(s);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (slices * n > kGrain) schedule(static)
#endif
  for (int64_t s = 0; s < slices; ++s) body(s);
}

template <typename T>
void softmax_backward(const T* y, const T* gy, T* gx, int64_t outer, int64_t n, int64_t inner) {
  int64_t slices = outer * inner;
  auto body = [&](int64_t s) {
    int64_t o = s / inner, in = s % inner;
    const T* ys = y + o * n * inner + in;
    const T* gs = gy + o * n * inner + in;
    T* xs = gx + o * n * inner + in;
    T dot = 0;
    for (int64_t i = 0; i < n; ++i) dot += ys[i * inner] * gs[i * inner];
    for (int64_t i = 0; i < n; ++i) xs[i * inner] += ys[i * inner] * (gs[i * inner] - dot);
  };
  if (backend() == Backend::reference) {
    for (int64_t s = 0; s < slices; ++s) body(s);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (slices * n > kGrain) schedule(static)
#endif
  for (int64_t s = 0; s < slices; ++s) body(s);
}

template <typename T>
void layer_norm(const T* x, const T* gain, const T* bias, T eps, T* y, T* mean, T* rstd,
                int64_t rows, int64_t d) {
  auto body = [&](int64_t r) {
    const T* xr = x + r * d;
    T* yr = y + r * d;
    T mu = 0;
    for (int64_t j = 0; j < d; ++j) mu += xr[j];
    mu /= T(d);
    T var = 0;
    for (int64_t j = 0; j < d; ++j) {
      T c = xr[j] - mu;
      var += c * c;
    }
    var /= T(d);
    T rs = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t j = 0; j < d; ++j) yr[j] = (xr[j] - mu) * rs * gain[j] + bias[j];
  };
  if (backend() == Backend::reference) {
    for (int64_t r = 0; r < rows; ++r) body(r);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (rows * d > kGrain) schedule(static)
#endif
  for (int64_t r = 0; r < rows; ++r) body(r);
}

template <typename T>
void layer_norm_backward(const T* x, const T* gain, const T* mean, const T* rstd, const T* gy,
                         T* gx, T* ggain, T* gbias, int64_t rows, int64_t d) {
  auto body = [&](int64_t r) {
    const T* xr = x + r * d;
    const T* gr = gy + r * d;
    T* xg = gx + r * d;
    T mu = mean[r], rs = rstd[r];
    T sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (int64_t j = 0; j < d; ++j) {
      T xhat = (xr[j] - mu) * rs;
      T dxhat = gr[j] * gain[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    T inv_d = T(1) / T(d);
    for (int64_t j = 0; j < d; ++j) {
      T xhat = (xr[j] - mu) * rs;
      T dxhat = gr[j] * gain[j];
      xg[j] += rs * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
    }
  };
  if (backend() == Backend::reference) {
    for (int64_t r = 0; r < rows; ++r) body(r);
  } else {
#ifdef _OPENMP
#pragma omp parallel for if (rows * d > kGrain) schedule(static)
#endif
    for (int64_t r = 0; r < rows; ++r) body(r);
  }
  if (ggain || gbias) {
    // Column reductions; parallel over columns to stay race-free.
    auto col = [&](int64_t j) {
      T sg = 0, sb = 0;
      for (int64_t r = 0; r < rows; ++r) {
        T xhat = (x[r * d + j] - mean[r]) * rstd[r];
        sg += gy[r * d + j] * xhat;
        sb += gy[r * d + j];
      }
      if (ggain) ggain[j] += sg;
      if (gbias) gbias[j] += sb;
    };
    if (backend() == Backend::reference) {
      for (int64_t j = 0; j < d; ++j) col(j);
    } else {
#ifdef _OPENMP
#pragma omp parallel for if (rows * d > kGrain) schedule(static)
#endif
      for (int64_t j = 0; j < d; ++j) col(j);
    }
  }
}

template <typename T>
void cross_entropy(const T* logits, const int64_t* labels, int64_t rows, int64_t classes, T* loss) {
  // Mean negative log-softmax of the true class. Small enough to keep serial;
  // a fixed summation order also keeps the loss bit-stable.
  T total = 0;
  for (int64_t r = 0; r < rows; ++r) {
    const T* lr = logits + r * classes;
    T mx = lr[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, lr[c]);
    T sum = 0;
    for (int64_t c = 0; c < classes; ++c) sum += std::exp(lr[c] - mx);
    total += std::log(sum) + mx - lr[labels[r]];
  }
  *loss = total / T(rows);
}

template <typename T>
void cross_entropy_backward(const T* logits, const int64_t* labels, T gloss, T* glogits,
                            int64_t rows, int64_t classes) {
  T w = gloss / T(rows);
  auto body = [&](int64_t r) {
    const T* lr = logits + r * classes;
    T* gr = glogits + r * classes;
    T mx = lr[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, lr[c]);
    T sum = 0;
    for (int64_t c = 0; c < classes; ++c) sum += std::exp(lr[c] - mx);
    T invs = T(1) / sum;
    for (int64_t c = 0; c < classes; ++c) {
      T p = std::exp(lr[c] - mx) * invs;
      gr[c] += w * (p - (c == labels[r] ? T(1) : T(0)));
    }
  };
  if (backend() == Backend::reference) {
    for (int64_t r = 0; r < rows; ++r) body(r);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (rows * classes > kGrain) schedule(static)
#endif
  for (int64_t r = 0; r < rows; ++r) body(r);
}

// ---------------------------------------------------------------------------
// Gather / scatter along a folded middle axis: x viewed as (outer, n, inner).
// ---------------------------------------------------------------------------

template <typename T>
void gather(const T* x, const int64_t* idx, int64_t cnt, T* out, int64_t outer, int64_t n,
            int64_t inner) {
  auto body = [&](int64_t s) {
    int64_t o = s / cnt, j = s % cnt;
    const T* src = x + (o * n + idx[j]) * inner;
    T* dst = out + (o * cnt + j) * inner;
    for (int64_t i = 0; i < inner; ++i) dst[i] = src[i];
  };
  int64_t slices = outer * cnt;
  if (backend() == Backend::reference) {
    for (int64_t s = 0; s < slices; ++s) body(s);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (slices * inner > kGrain) schedule(static)
#endif
  for (int64_t s = 0; s < slices; ++s) body(s);
}

template <typename T>
void scatter_add(const T* g, const int64_t* idx, int64_t cnt, T* gx, int64_t outer, int64_t n,
                 int64_t inner) {
  // idx values may repeat, so only the outer axis is parallel.
  auto body = [&](int64_t o) {
    for (int64_t j = 0; j < cnt; ++j) {
      const T* src = g + (o * cnt + j) * inner;
      T* dst = gx + (o * n + idx[j]) * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  };
  if (backend() == Backend::reference) {
    for (int64_t o = 0; o < outer; ++o) body(o);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (outer * cnt * inner > kGrain) schedule(static)
#endif
  for (int64_t o = 0; o < outer; ++o) body(o);
}

// Reductions along the folded middle axis.
template <typename T>
void sum_axis(const T* x, T* out, int64_t outer, int64_t n, int64_t inner, bool mean) {
  T norm = mean ? T(1) / T(n) : T(1);
  int64_t slices = outer * inner;
  auto body = [&](int64_t s) {
    int64_t o = s / inner, in = s % inner;
    const T* xs = x + o * n * inner + in;
    T acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += xs[i * inner];
    out[o * inner + in] = acc * norm;
  };
  if (backend() == Backend::reference) {
    for (int64_t s = 0; s < slices; ++s) body(s);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (slices * n > kGrain) schedule(static)
#endif
  for (int64_t s = 0; s < slices; ++s) body(s);
}

template <typename T>
void broadcast_axis_add(const T* g, T* gx, int64_t outer, int64_t n, int64_t inner, T s) {
  int64_t total = outer * n * inner;
  auto body = [&](int64_t i) {
    int64_t o = i / (n * inner), in = i % inner;
    gx[i] += s * g[o * inner + in];
  };
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < total; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (total > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < total; ++i) body(i);
}

// ---------------------------------------------------------------------------
// Layout ops.
// ---------------------------------------------------------------------------

template <typename T>
void permute(const T* x, T* out, const Shape& in_shape, const std::vector<int>& axes) {
  int nd = static_cast<int>(in_shape.size());
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) out_shape[i] = in_shape[axes[i]];
  std::vector<int64_t> in_strides(nd, 1), out_strides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  for (int i = nd - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
  int64_t total = numel_of(in_shape);
  auto body = [&](int64_t oi) {
    int64_t rem = oi, src = 0;
    for (int i = 0; i < nd; ++i) {
      int64_t coord = rem / out_strides[i];
      rem %= out_strides[i];
      src += coord * in_strides[axes[i]];
    }
    out[oi] = x[src];
  };
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < total; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (total > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < total; ++i) body(i);
}

// Patch extraction: [C,H,W] images stacked along a batch axis into rows of
// flattened p x p patches, one row per (batch, grid_y, grid_x).
template <typename T>
void im2col(const T* img, T* rows, int64_t batch, int64_t ch, int64_t h, int64_t w, int64_t p) {
  int64_t gh = h / p, gw = w / p;
  int64_t nrows = batch * gh * gw;
  int64_t rowlen = ch * p * p;
  auto body = [&](int64_t r) {
    int64_t b = r / (gh * gw);
    int64_t cell = r % (gh * gw);
    int64_t gy = cell / gw, gx = cell % gw;
    T* dst = rows + r * rowlen;
    const T* src = img + b * ch * h * w;
    int64_t k = 0;
    for (int64_t c = 0; c < ch; ++c)
      for (int64_t y = gy * p; y < (gy + 1) * p; ++y)
        for (int64_t x = gx * p; x < (gx + 1) * p; ++x) dst[k++] = src[c * h * w + y * w + x];
  };
  if (backend() == Backend::reference) {
    for (int64_t r = 0; r < nrows; ++r) body(r);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (nrows * rowlen > kGrain) schedule(static)
#endif
  for (int64_t r = 0; r < nrows; ++r) body(r);
}

// ---------------------------------------------------------------------------
// Optimizer update (decoupled weight decay).
// ---------------------------------------------------------------------------

template <typename T>
void adamw_step(T* param, const T* grad, T* m, T* v, int64_t n, T lr, T beta1, T beta2, T eps,
                T weight_decay, int64_t step) {
  T bc1 = T(1) - std::pow(beta1, T(step));
  T bc2 = T(1) - std::pow(beta2, T(step));
  auto body = [&](int64_t i) {
    T g = grad[i];
    m[i] = beta1 * m[i] + (T(1) - beta1) * g;
    v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
    T mhat = m[i] / bc1;
    T vhat = v[i] / bc2;
    param[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * param[i]);
  };
  if (backend() == Backend::reference) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for if (n > kGrain) schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) body(i);
}

template <typename T>
bool all_finite(const T* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace sa2vp::kernels
