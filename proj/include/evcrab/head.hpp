#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evcrab/serialize.hpp"
#include "evcrab/tensor.hpp"

namespace evcrab {

enum class LossVariant { LabelConditioned, PrintedMean };
LossVariant parse_loss_variant(const std::string& s);
std::string loss_variant_name(LossVariant v);

struct HeadConfig {
  double tau = 0.07;
  double lambda = 0.8;
  LossVariant variant = LossVariant::LabelConditioned;
};

void validate(const HeadConfig& cfg);

/// l2(f_a + f_a * f_o). Both inputs are [D].
template <class T>
ad::Tensor<T> residual_fuse(const ad::Tensor<T>& f_a, const ad::Tensor<T>& f_o);

/// Cross-entropy over logits f . table_k / tau (label conditioned) or the
/// label-free mean of -log softmax over all classes (printed mean).
template <class T>
ad::Tensor<T> contrastive_loss(const ad::Tensor<T>& feature, const ad::Tensor<T>& table, int label,
                               double tau, LossVariant variant);

/// L_a + lambda L_o.
template <class T>
ad::Tensor<T> total_loss(const ad::Tensor<T>& loss_a, const ad::Tensor<T>& loss_o, double lambda);

/// Softmax over dot products, no temperature.
std::vector<double> classify(std::span<const double> fused, std::span<const double> table,
                             std::size_t classes);

/// Class indices ordered by probability (descending, ties by index).
std::vector<int> rank_classes(std::span<const double> probs);

struct RetrievalHit {
  std::size_t index = 0;
  double score = 0;
};

/// Rows ranked by dot product with `query`, descending, ties by row index;
/// k is clamped to the row count.
std::vector<RetrievalHit> retrieve(std::span<const double> query, const FeatureTable& features,
                                   std::size_t k);

enum class PromptSource { FixedRandom, File, Learnable };
PromptSource parse_prompt_source(const std::string& s);
std::string prompt_source_name(PromptSource s);

/// Frame-related and point-related class prompt rows, both [Q,D] and unit norm.
template <class T>
struct PromptTables {
  PromptSource source = PromptSource::FixedRandom;
  ad::Tensor<T> frame_raw, point_raw;  // learnable mode: raw parameters

  /// Row-normalized tables (normalization recorded in the graph when learnable).
  ad::Tensor<T> frame() const;
  ad::Tensor<T> point() const;
};

/// Fixed-random rows are seeded unit Gaussians (frame rows first, then point
/// rows). File mode reads two FEAT files and normalizes rows; learnable mode
/// registers "prompt.frame" / "prompt.point" starting from the fixed-random draw.
template <class T>
PromptTables<T> load_or_make_prompts(PromptSource source, std::size_t classes, std::size_t dim,
                                     std::uint64_t seed, ad::ParameterStore<T>* store = nullptr,
                                     const std::filesystem::path& frame_file = {},
                                     const std::filesystem::path& point_file = {});

}  // namespace evcrab
