#pragma once

#include <string>
#include <vector>

#include "evcrab/hilbert.hpp"
#include "evcrab/init.hpp"
#include "evcrab/ops.hpp"
#include "evcrab/tensor.hpp"

namespace evcrab {

struct PointEncoderConfig {
  int dim = 64;
  int blocks = 2;
  int patch = 8;
  int channels = 2;
  int state = 8;        // N
  int expand = 2;       // E = expand * dim
  int conv_width = 4;
  int spgc_ratio = 2;   // r
  int groups = 8;       // g
  double spike_threshold = 1.0;
  double spike_width = 1.0;
  ad::ScanMode scan = ad::ScanMode::Sequential;
};

void validate(const PointEncoderConfig& cfg);

/// Spike activation with the triangular surrogate.
struct SurrogateSpike {
  double threshold = 1.0;
  double width = 1.0;
};

template <class T>
ad::Tensor<T> spike_sn(const ad::Tensor<T>& x, const SurrogateSpike& sg) {
  return ad::spike(x, static_cast<T>(sg.threshold), static_cast<T>(sg.width));
}

template <class T>
struct MambaParams {
  ad::Tensor<T> in_w, in_b;        // [D,2E], [2E]
  ad::Tensor<T> conv_w, conv_b;    // [E,1,K], [E]
  ad::Tensor<T> x_w;               // [E, R + 2N]
  ad::Tensor<T> dt_w, dt_b;        // [R,E], [E]
  ad::Tensor<T> a_log;             // [E,N], A = -exp(a_log)
  ad::Tensor<T> d_skip;            // [E]
  ad::Tensor<T> out_w, out_b;      // [E,D], [D]
  std::size_t dt_rank = 1;
  std::size_t state = 8;
};

template <class T>
struct SPGCParams {
  ad::Tensor<T> spc1_w, spc1_b;  // [rD,D,1], [rD]
  ad::Tensor<T> sgc_w, sgc_b;    // [rD,rD/g,3], [rD]
  ad::Tensor<T> spc2_w, spc2_b;  // [D,rD,1], [D]
  std::size_t groups = 8;
};

template <class T>
struct BlockParams {
  MambaParams<T> mamba;
  SPGCParams<T> spgc;
};

template <class T>
MambaParams<T> make_mamba(ad::ParameterStore<T>& store, const std::string& prefix,
                          const PointEncoderConfig& cfg, Rng& rng);
template <class T>
SPGCParams<T> make_spgc(ad::ParameterStore<T>& store, const std::string& prefix,
                        const PointEncoderConfig& cfg, Rng& rng);

/// Selective scan with input-dependent step: delta = softplus(dt_low W_dt + b_dt).
template <class T>
ad::Tensor<T> selective_ssm_scan(const ad::Tensor<T>& x, const ad::Tensor<T>& dt_low,
                                 const ad::Tensor<T>& b, const ad::Tensor<T>& c,
                                 const MambaParams<T>& p, ad::ScanMode mode);

/// In-projection, causal depthwise conv + SiLU + selective scan on the value
/// path, SiLU gate, out-projection. x is [L,D].
template <class T>
ad::Tensor<T> mamba_mix(const ad::Tensor<T>& x, const MambaParams<T>& p, ad::ScanMode mode);

/// SN(mamba_mix(SN(f))).
template <class T>
ad::Tensor<T> smamba(const ad::Tensor<T>& f, const MambaParams<T>& p, const SurrogateSpike& sg,
                     ad::ScanMode mode);

/// SPC2(SGC(SPC1(f))) with SPC(f) = conv1x1(SN(f)) and SGC(f) = gconv(SN(f)) + f.
template <class T>
ad::Tensor<T> spgc(const ad::Tensor<T>& f, const SPGCParams<T>& p, const SurrogateSpike& sg);

/// f_hat = smamba(f) + f; out = spgc(f_hat).
template <class T>
ad::Tensor<T> spiking_mamba_block(const ad::Tensor<T>& f, const BlockParams<T>& p,
                                  const SurrogateSpike& sg, ad::ScanMode mode);

/// Event-point encoder over a [C,H,W,T'] context tensor.
template <class T>
class PointEncoder {
 public:
  PointEncoder() = default;
  PointEncoder(ad::ParameterStore<T>& store, const std::string& prefix,
               const PointEncoderConfig& cfg, int height, int width, int slices, Rng& rng);

  const PointEncoderConfig& config() const { return cfg_; }
  const GridDims& grid() const { return grid_; }
  const ScanOrder& forward_order() const { return forward_; }

  /// [C,H,W,T'] -> [L*T', D] tokens in (y, x, t) layout, zero-padded to whole patches.
  ad::Tensor<T> patch_embed(const ad::Tensor<T>& context) const;
  /// tokens + p_s[l] + p_t[t].
  ad::Tensor<T> add_positional(const ad::Tensor<T>& tokens) const;
  /// Block stack over a token sequence already in scan order.
  ad::Tensor<T> run_blocks(const ad::Tensor<T>& seq) const;
  /// Full encoder: unit-norm [D] feature.
  ad::Tensor<T> encode(const ad::Tensor<T>& context) const;
  /// Same with explicit scan orders (token indices); used by consistency tests.
  ad::Tensor<T> encode_with_orders(const ad::Tensor<T>& context,
                                   const std::vector<std::size_t>& forward,
                                   const std::vector<std::size_t>& backward) const;

  ad::Tensor<T> patch_w, patch_b, pos_s, pos_t, head_w, head_b;
  std::vector<BlockParams<T>> blocks;

 private:
  PointEncoderConfig cfg_;
  int height_ = 0, width_ = 0, slices_ = 0;
  GridDims grid_;
  ScanOrder forward_;
  std::vector<std::size_t> fwd_tokens_, bwd_tokens_, l_index_, t_index_;
};

}  // namespace evcrab
