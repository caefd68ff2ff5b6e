#pragma once

#include <string>
#include <vector>

#include "evcrab/events.hpp"
#include "evcrab/init.hpp"
#include "evcrab/tensor.hpp"

namespace evcrab {

struct FrameEncoderConfig {
  int dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 2;
  int patch = 8;
  int frames = 8;  // N_t
  int height = 32;
  int width = 32;
};

void validate(const FrameEncoderConfig& cfg);

template <class T>
struct AttentionBlock {
  ad::Tensor<T> ln1_g, ln1_b, qkv_w, q_b, v_b, proj_w, proj_b;
  ad::Tensor<T> ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
};

/// Small pre-norm transformer over per-frame patches; stands in for a
/// pretrained event-image encoder.
template <class T>
class FrameEncoder {
 public:
  FrameEncoder() = default;
  FrameEncoder(ad::ParameterStore<T>& store, const std::string& prefix,
               const FrameEncoderConfig& cfg, Rng& rng);

  const FrameEncoderConfig& config() const { return cfg_; }
  std::size_t patches_per_frame() const { return patches_; }

  /// Per-frame conv2d patchify + positional table: [N_t * patches, D].
  ad::Tensor<T> patchify(const FrameStack& stack) const;
  /// One pre-norm attention block over [N_t * patches, D] (attention within each frame).
  ad::Tensor<T> block(const ad::Tensor<T>& x, const AttentionBlock<T>& b) const;
  /// Unit-norm [D] feature.
  ad::Tensor<T> encode(const FrameStack& stack) const;

  ad::Tensor<T> patch_w, patch_b, pos, head_w, head_b;
  std::vector<AttentionBlock<T>> blocks;

 private:
  FrameEncoderConfig cfg_;
  std::size_t grid_h_ = 0, grid_w_ = 0, patches_ = 0;
};

}  // namespace evcrab
