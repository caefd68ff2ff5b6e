#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evcrab/tensor.hpp"

// Differentiable operation catalog. Every op checks shapes up front and throws
// ShapeError naming both shapes on mismatch.
namespace evcrab::ad {

// Binary elementwise ops accept `b` either with a's shape or with a shape equal
// to a trailing suffix of a's shape (broadcast over the leading axes).
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T s);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> log(const Tensor<T>& x);
template <class T> Tensor<T> softplus(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> silu(const Tensor<T>& x);

/// Forward value unchanged, gradient blocked.
template <class T> Tensor<T> stop_gradient(const Tensor<T>& x);

/// Threshold unit: 1 where x >= threshold, else 0. Backward is the triangular
/// surrogate max(0, 1 - |x - threshold| / width) / width.
template <class T> Tensor<T> spike(const Tensor<T>& x, T threshold, T width);

/// Smooth primitive of the triangular surrogate (piecewise quadratic ramp from 0
/// to 1 over [threshold - width, threshold + width]).
template <class T> T surrogate_primitive(T x, T threshold, T width);

/// While alive, `spike` evaluates surrogate_primitive in its forward pass so that
/// finite differences see the function whose derivative backward reports.
class SurrogatePrimitiveScope {
 public:
  SurrogatePrimitiveScope();
  ~SurrogatePrimitiveScope();
  SurrogatePrimitiveScope(const SurrogatePrimitiveScope&) = delete;
  SurrogatePrimitiveScope& operator=(const SurrogatePrimitiveScope&) = delete;

 private:
  bool previous_;
};
bool surrogate_primitive_mode();

/// Piece trace of the primitive: while recording, every primitive-mode spike
/// input logs which of its four pieces it falls on; while comparing, inputs are
/// matched against that log in the same order. end_piece_trace() reports whether
/// any input landed on a different piece, i.e. whether a probe crossed a breakpoint.
void begin_piece_record();
void begin_piece_compare();
bool end_piece_trace();

/// [M,K] x [K,N].
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// [M,K] x [N,K]^T.
template <class T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
/// x[M,K] * w[K,N] (+ bias[N] when defined).
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

struct Conv2dOptions {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t groups = 1;
};
/// x[C,H,W], w[O,C/groups,kh,kw] -> [O,Ho,Wo]; zero padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Conv2dOptions& opt = {});

/// x[C,D0,D1,D2], w[O,C,k0,k1,k2], no padding -> [O, (D0-k0)/s0+1, ...].
template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, std::size_t s0, std::size_t s1,
                 std::size_t s2);

enum class Padding { Causal, Same };
/// Channels-last sequence conv: x[L,C], w[O,C/groups,K] -> [L,O].
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, std::size_t groups, Padding padding);

/// Along the last axis.
template <class T> Tensor<T> softmax(const Tensor<T>& x);
template <class T> Tensor<T> log_softmax(const Tensor<T>& x);
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));
/// x / sqrt(sum(x^2) + eps) along the last axis.
template <class T> Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(1e-12));

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);
/// Mean over one axis (removed from the shape).
template <class T> Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis);

template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
/// out[i] = x[index[i]] along axis 0 (gather); backward scatter-adds.
template <class T> Tensor<T> take_rows(const Tensor<T>& x, std::span<const std::size_t> index);

enum class ScanMode { Sequential, Parallel };

/// Selective state-space scan. Shapes: x, delta [L,E]; a [E,N] (negative);
/// b, c [L,N]; d_skip [E]. Per channel e and state n:
///   h_t = exp(delta_t,e * a_e,n) * h_{t-1} + delta_t,e * b_t,n * x_t,e,  h_{-1} = 0
///   y_t,e = sum_n c_t,n * h_t,e,n + d_skip_e * x_t,e
/// Parallel mode evaluates the recurrence (and its adjoint) with the associative scan.
template <class T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& a,
                         const Tensor<T>& b, const Tensor<T>& c, const Tensor<T>& d_skip,
                         ScanMode mode);

}  // namespace evcrab::ad
