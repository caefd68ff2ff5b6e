#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels. Every kernel comes as a serial reference and an
// OpenMP version; the OpenMP versions split work over independent outputs and
// keep each output's accumulation order identical to the reference, so both
// produce bit-identical results for any thread count.
namespace evcrab::kernels {

enum class Backend { Serial, OpenMP };

/// Backend used by the autodiff ops. Defaults to OpenMP (which degrades to the
/// serial loop order when one thread is available).
Backend backend();
void set_backend(Backend b);
void set_threads(int n);
int threads();

/// C[M,N] (+)= op(A) * op(B), row-major. op(A) is A[M,K] or, transposed, A[K,M];
/// op(B) is B[K,N] or, transposed, B[N,K].
template <class T>
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm_omp(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

/// First-order linear recurrence h_t = a_t * h_{t-1} + b_t, h_{-1} = 0, over
/// `channels` independent sequences of length `len` stored time-major
/// (element (t, ch) at t * channels + ch). Output h has the same layout.
template <class T>
void linear_scan_sequential(std::size_t len, std::size_t channels, const T* a, const T* b, T* h);

/// Same recurrence via a work-efficient (Blelloch) associative scan over the
/// affine-map monoid (a1, b1) . (a2, b2) = (a1 * a2, a2 * b1 + b2).
template <class T>
void linear_scan_parallel(std::size_t len, std::size_t channels, const T* a, const T* b, T* h);

/// Reverse-time variant used by backward passes: g_t = a_{t+1} * g_{t+1} + c_t,
/// g_{len} = 0. `a_next` holds a_{t+1} at index t (last row ignored).
template <class T>
void reverse_scan_sequential(std::size_t len, std::size_t channels, const T* a_next, const T* c,
                             T* g);
template <class T>
void reverse_scan_parallel(std::size_t len, std::size_t channels, const T* a_next, const T* c,
                           T* g);

}  // namespace evcrab::kernels
