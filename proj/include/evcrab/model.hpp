#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evcrab/dataset.hpp"
#include "evcrab/frame_encoder.hpp"
#include "evcrab/head.hpp"
#include "evcrab/point_encoder.hpp"
#include "evcrab/sampler.hpp"

namespace evcrab {

struct ModelConfig {
  SamplerKind sampler = SamplerKind::Scl;
  int t_prime = 8;
  int t_raw = 128;
  SRRNNConfig srrnn;
  double snn_gain = 1.0;
  bool freeze_sampler = false;
  SliceNorm slice_norm = SliceNorm::PerSlice;
  PointEncoderConfig point;
  FrameEncoderConfig frame;
  HeadConfig head;
  PromptSource prompts = PromptSource::FixedRandom;
  std::string prompt_frame_file;
  std::string prompt_point_file;
  /// Prompt wording, kept for provenance only (fixed-random tables ignore it).
  std::string prompt_frame_template = "a frame-related description of {class}";
  std::string prompt_point_template = "a point-related description of {class}";
  /// FEAT matrix of precomputed frame features, one row per stream in dataset
  /// order; replaces the frame encoder when set.
  std::string frame_feature_file;
  /// Apply the frame loss to the raw frame feature instead of the fused one.
  bool raw_frame_loss = false;
};

void validate(const ModelConfig& cfg);

/// Per-stream inputs that do not depend on trainable weights.
struct PreparedSample {
  const EventStream* stream = nullptr;
  int label = 0;
  FrameStack frames;
  BinnedMaps bins;
  /// Set for samplers whose slicing is fixed (sliding, snn, frozen scl).
  std::optional<SampleResult> fixed;
  std::optional<ContextVoxelGrid> fixed_grid;
  /// Externally computed frame feature (replaces the frame encoder).
  std::optional<std::vector<float>> frame_feature;
};

template <class T>
struct ForwardResult {
  ad::Tensor<T> f_a, f_o, fused;
  SampleTrace trace;
  std::vector<std::uint8_t> retained;
};

template <class T>
struct LossParts {
  ad::Tensor<T> total, loss_a, loss_o;
};

/// Whole pipeline: sampler, point encoder, frame encoder, prompt tables.
/// Parameter prefixes: "scl.", "point.", "frame.", "prompt.".
template <class T>
class Model {
 public:
  Model(const ModelConfig& cfg, int classes, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  int classes() const { return classes_; }

  PreparedSample prepare(const EventStream& stream, int label) const;
  ForwardResult<T> forward(const PreparedSample& sample) const;
  LossParts<T> loss(const ForwardResult<T>& fwd, int label) const;

  /// Names of parameters used only by the point branch.
  bool point_only(const std::string& name) const;

  ad::ParameterStore<T> store;
  SRRNNCell<T> cell;
  PointEncoder<T> point;
  FrameEncoder<T> frame;
  PromptTables<T> prompts;

 private:
  SampleResult sample_slices(const PreparedSample& s, std::vector<ad::Tensor<T>>* spikes) const;

  ModelConfig cfg_;
  int classes_ = 0;
};

}  // namespace evcrab
