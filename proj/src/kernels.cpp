#include "evcrab/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace evcrab::kernels {

namespace {

Backend g_backend = Backend::OpenMP;
int g_threads = 1;

// Below this many multiply-adds the parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 64;

// Rows [i0, i1) of C from row-major A [m,k] and B [k,n]; each output sums p in ascending order.
template <class T>
void gemm_rows(std::size_t i0, std::size_t i1, std::size_t n, std::size_t k, const T* a,
               const T* b, T* c, bool accumulate) {
  alignas(64) T acc[kRowBlock][kColBlock];
  const std::size_t rows = i1 - i0;
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t w = std::min(kColBlock, n - j0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = c + (i0 + r) * n + j0;
      for (std::size_t j = 0; j < w; ++j) acc[r][j] = accumulate ? src[j] : T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n + j0;
      for (std::size_t r = 0; r < rows; ++r) {
        const T ar = a[(i0 + r) * k + p];
        T* out = acc[r];
        for (std::size_t j = 0; j < w; ++j) out[j] += ar * brow[j];
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(acc[r], acc[r] + w, c + (i0 + r) * n + j0);
    }
  }
}

// [rows, cols] -> [cols, rows]
template <class T>
std::vector<T> transposed(const T* b, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = b[r * cols + c];
  }
  return out;
}

// Brings both operands to row-major A [m,k] and B [k,n].
template <class T>
struct Operands {
  std::vector<T> at, bt;
  const T* a;
  const T* b;
  Operands(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a_, const T* b_)
      : a(a_), b(b_) {
    if (ta && m > 1) {
      at = transposed(a_, k, m);
      a = at.data();
    }
    if (tb && n > 1) {
      bt = transposed(b_, n, k);
      b = bt.data();
    }
  }
};

template <class T>
struct Affine {
  T a;
  T b;
};

// earlier . later
template <class T>
inline Affine<T> compose(const Affine<T>& first, const Affine<T>& second) {
  return {first.a * second.a, second.a * first.b + second.b};
}

template <class T>
void blelloch_channel(std::size_t len, std::vector<Affine<T>>& x, std::vector<Affine<T>>& elems) {
  std::size_t padded = 1;
  while (padded < len) padded <<= 1;
  x.assign(padded, Affine<T>{T(1), T(0)});
  std::copy(elems.begin(), elems.begin() + static_cast<std::ptrdiff_t>(len), x.begin());
  for (std::size_t stride = 2; stride <= padded; stride <<= 1) {
    const std::size_t half = stride >> 1;
    for (std::size_t i = stride - 1; i < padded; i += stride) x[i] = compose(x[i - half], x[i]);
  }
  x[padded - 1] = Affine<T>{T(1), T(0)};
  for (std::size_t stride = padded; stride >= 2; stride >>= 1) {
    const std::size_t half = stride >> 1;
    for (std::size_t i = stride - 1; i < padded; i += stride) {
      const Affine<T> left = x[i - half];
      x[i - half] = x[i];
      x[i] = compose(x[i], left);
    }
  }
  // x now holds exclusive prefixes; fold in each element for the inclusive state
  for (std::size_t t = 0; t < len; ++t) elems[t] = compose(x[t], elems[t]);
}

}  // namespace

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

void set_threads(int n) {
  g_threads = std::max(1, n);
#ifdef _OPENMP
  omp_set_num_threads(g_threads);
#endif
}

int threads() { return g_threads; }

template <class T>
void gemm_serial(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
                 const T* b, T* c, bool accumulate) {
  const Operands<T> op(ta, tb, m, n, k, a, b);
  for (std::size_t i = 0; i < m; i += kRowBlock) {
    gemm_rows(i, std::min(m, i + kRowBlock), n, k, op.a, op.b, c, accumulate);
  }
}

template <class T>
void gemm_omp(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
              const T* b, T* c, bool accumulate) {
  const Operands<T> op(ta, tb, m, n, k, a, b);
  const auto blocks = static_cast<std::ptrdiff_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork && g_threads > 1)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i = static_cast<std::size_t>(blk) * kRowBlock;
    gemm_rows(i, std::min(m, i + kRowBlock), n, k, op.a, op.b, c, accumulate);
  }
}

template <class T>
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate) {
  if (g_backend == Backend::OpenMP) {
    gemm_omp(ta, tb, m, n, k, a, b, c, accumulate);
  } else {
    gemm_serial(ta, tb, m, n, k, a, b, c, accumulate);
  }
}

template <class T>
void linear_scan_sequential(std::size_t len, std::size_t channels, const T* a, const T* b, T* h) {
  if (len == 0) return;
  for (std::size_t ch = 0; ch < channels; ++ch) h[ch] = b[ch];
  for (std::size_t t = 1; t < len; ++t) {
    const T* at = a + t * channels;
    const T* bt = b + t * channels;
    const T* hp = h + (t - 1) * channels;
    T* ht = h + t * channels;
    for (std::size_t ch = 0; ch < channels; ++ch) ht[ch] = at[ch] * hp[ch] + bt[ch];
  }
}

template <class T>
void linear_scan_parallel(std::size_t len, std::size_t channels, const T* a, const T* b, T* h) {
  if (len == 0) return;
  const auto nch = static_cast<std::ptrdiff_t>(channels);
#pragma omp parallel if (g_threads > 1 && len * channels >= kParallelWork)
  {
    std::vector<Affine<T>> elems(len);
    std::vector<Affine<T>> work;
#pragma omp for schedule(static)
    for (std::ptrdiff_t ch = 0; ch < nch; ++ch) {
      for (std::size_t t = 0; t < len; ++t) {
        elems[t] = {a[t * channels + ch], b[t * channels + ch]};
      }
      blelloch_channel(len, work, elems);
      for (std::size_t t = 0; t < len; ++t) h[t * channels + ch] = elems[t].b;
    }
  }
}

template <class T>
void reverse_scan_sequential(std::size_t len, std::size_t channels, const T* a_next, const T* c,
                             T* g) {
  if (len == 0) return;
  const std::size_t last = len - 1;
  for (std::size_t ch = 0; ch < channels; ++ch) g[last * channels + ch] = c[last * channels + ch];
  for (std::size_t t = last; t-- > 0;) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      g[t * channels + ch] = a_next[t * channels + ch] * g[(t + 1) * channels + ch] +
                             c[t * channels + ch];
    }
  }
}

template <class T>
void reverse_scan_parallel(std::size_t len, std::size_t channels, const T* a_next, const T* c,
                           T* g) {
  if (len == 0) return;
  // reverse time, feed the forward scan, reverse back
  std::vector<T> ra(len * channels);
  std::vector<T> rc(len * channels);
  std::vector<T> rg(len * channels);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t src = len - 1 - t;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      ra[t * channels + ch] = t == 0 ? T(0) : a_next[src * channels + ch];
      rc[t * channels + ch] = c[src * channels + ch];
    }
  }
  linear_scan_parallel(len, channels, ra.data(), rc.data(), rg.data());
  for (std::size_t t = 0; t < len; ++t) {
    std::copy_n(rg.data() + t * channels, channels, g + (len - 1 - t) * channels);
  }
}

#define EVCRAB_INSTANTIATE(T)                                                                    \
  template void gemm_serial<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*,      \
                               const T*, T*, bool);                                              \
  template void gemm_omp<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*,         \
                            const T*, T*, bool);                                                 \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*,   \
                        T*, bool);                                                               \
  template void linear_scan_sequential<T>(std::size_t, std::size_t, const T*, const T*, T*);     \
  template void linear_scan_parallel<T>(std::size_t, std::size_t, const T*, const T*, T*);       \
  template void reverse_scan_sequential<T>(std::size_t, std::size_t, const T*, const T*, T*);    \
  template void reverse_scan_parallel<T>(std::size_t, std::size_t, const T*, const T*, T*);

EVCRAB_INSTANTIATE(float)
EVCRAB_INSTANTIATE(double)

#undef EVCRAB_INSTANTIATE

}  // namespace evcrab::kernels
