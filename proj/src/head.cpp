#include "evcrab/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evcrab/errors.hpp"
#include "evcrab/event_io.hpp"
#include "evcrab/init.hpp"
#include "evcrab/ops.hpp"

namespace evcrab {

using ad::Tensor;

LossVariant parse_loss_variant(const std::string& s) {
  if (s == "label_conditioned") return LossVariant::LabelConditioned;
  if (s == "printed_mean") return LossVariant::PrintedMean;
  throw ConfigError("unknown loss variant \"" + s + "\"");
}

std::string loss_variant_name(LossVariant v) {
  return v == LossVariant::LabelConditioned ? "label_conditioned" : "printed_mean";
}

void validate(const HeadConfig& cfg) {
  if (!(cfg.tau > 0)) throw ConfigError("tau must be positive");
  if (!(cfg.lambda >= 0)) throw ConfigError("lambda must be non-negative");
}

template <class T>
Tensor<T> residual_fuse(const Tensor<T>& f_a, const Tensor<T>& f_o) {
  if (f_a.shape() != f_o.shape() || f_a.rank() != 1) {
    throw ShapeError("residual_fuse: feature shapes " + ad::to_string(f_a.shape()) + " and " +
                     ad::to_string(f_o.shape()) + " differ");
  }
  return ad::l2_normalize(ad::add(f_a, ad::mul(f_a, f_o)));
}

template <class T>
Tensor<T> contrastive_loss(const Tensor<T>& feature, const Tensor<T>& table, int label,
                           double tau, LossVariant variant) {
  if (table.rank() != 2 || feature.rank() != 1 || feature.dim(0) != table.dim(1)) {
    throw ShapeError("contrastive_loss: feature " + ad::to_string(feature.shape()) +
                     " vs table " + ad::to_string(table.shape()));
  }
  const std::size_t q = table.dim(0);
  if (label < 0 || static_cast<std::size_t>(label) >= q) {
    throw ConfigError("label " + std::to_string(label) + " outside [0," + std::to_string(q) + ")");
  }
  auto logits = ad::scale(ad::matmul_nt(ad::reshape(feature, {1, feature.dim(0)}), table),
                          static_cast<T>(1.0 / tau));
  auto lsm = ad::log_softmax(logits);
  if (variant == LossVariant::PrintedMean) return ad::scale(ad::mean(lsm), T(-1));
  const auto y = static_cast<std::size_t>(label);
  return ad::scale(ad::sum(ad::slice(lsm, 1, y, y + 1)), T(-1));
}

template <class T>
Tensor<T> total_loss(const Tensor<T>& loss_a, const Tensor<T>& loss_o, double lambda) {
  if (!(lambda >= 0)) throw ConfigError("lambda must be non-negative");
  return ad::add(loss_a, ad::scale(loss_o, static_cast<T>(lambda)));
}

std::vector<double> classify(std::span<const double> fused, std::span<const double> table,
                             std::size_t classes) {
  const std::size_t d = fused.size();
  if (table.size() != classes * d) throw ShapeError("classify: table does not match feature width");
  std::vector<double> logits(classes);
  for (std::size_t q = 0; q < classes; ++q) {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += fused[i] * table[q * d + i];
    logits[q] = s;
  }
  const double peak = classes ? *std::max_element(logits.begin(), logits.end()) : 0.0;
  double z = 0;
  for (auto& v : logits) z += (v = std::exp(v - peak));
  for (auto& v : logits) v /= z;
  return logits;
}

std::vector<int> rank_classes(std::span<const double> probs) {
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  return idx;
}

std::vector<RetrievalHit> retrieve(std::span<const double> query, const FeatureTable& features,
                                   std::size_t k) {
  if (query.size() != features.dim) {
    throw ShapeError("retrieve: query width " + std::to_string(query.size()) +
                     " vs features width " + std::to_string(features.dim));
  }
  std::vector<RetrievalHit> hits(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r) {
    const auto row = features.row(r);
    double s = 0;
    for (std::size_t i = 0; i < query.size(); ++i) s += query[i] * static_cast<double>(row[i]);
    hits[r] = {r, s};
  }
  std::stable_sort(hits.begin(), hits.end(),
                   [](const RetrievalHit& a, const RetrievalHit& b) { return a.score > b.score; });
  hits.resize(std::min<std::size_t>(k, hits.size()));
  return hits;
}

PromptSource parse_prompt_source(const std::string& s) {
  if (s == "fixed_random") return PromptSource::FixedRandom;
  if (s == "file") return PromptSource::File;
  if (s == "learnable") return PromptSource::Learnable;
  throw ConfigError("unknown prompt source \"" + s + "\" (expected fixed_random, file or learnable)");
}

std::string prompt_source_name(PromptSource s) {
  switch (s) {
    case PromptSource::FixedRandom: return "fixed_random";
    case PromptSource::File: return "file";
    case PromptSource::Learnable: return "learnable";
  }
  return "?";
}

template <class T>
Tensor<T> PromptTables<T>::frame() const {
  return source == PromptSource::Learnable ? ad::l2_normalize(frame_raw) : frame_raw;
}

template <class T>
Tensor<T> PromptTables<T>::point() const {
  return source == PromptSource::Learnable ? ad::l2_normalize(point_raw) : point_raw;
}

namespace {

template <class T>
void normalize_rows(std::vector<T>& v, std::size_t dim) {
  for (std::size_t r = 0; r * dim < v.size(); ++r) {
    double ss = 0;
    for (std::size_t i = 0; i < dim; ++i) ss += double(v[r * dim + i]) * double(v[r * dim + i]);
    const double n = std::sqrt(ss);
    if (n == 0) throw ValidationError("prompt row " + std::to_string(r) + " is zero");
    for (std::size_t i = 0; i < dim; ++i) v[r * dim + i] = static_cast<T>(double(v[r * dim + i]) / n);
  }
}

template <class T>
std::vector<T> read_table(const std::filesystem::path& path, std::size_t classes, std::size_t dim) {
  const auto t = parse_features(read_bytes(path));
  if (t.rows != classes || t.dim != dim) {
    throw ConfigError("prompt file " + path.string() + " is " + std::to_string(t.rows) + "x" +
                      std::to_string(t.dim) + ", expected " + std::to_string(classes) + "x" +
                      std::to_string(dim));
  }
  std::vector<T> v(t.data.begin(), t.data.end());
  normalize_rows(v, dim);
  return v;
}

}  // namespace

template <class T>
PromptTables<T> load_or_make_prompts(PromptSource source, std::size_t classes, std::size_t dim,
                                     std::uint64_t seed, ad::ParameterStore<T>* store,
                                     const std::filesystem::path& frame_file,
                                     const std::filesystem::path& point_file) {
  if (classes < 1 || dim < 1) throw ConfigError("prompt tables need Q >= 1 and D >= 1");
  PromptTables<T> p;
  p.source = source;
  std::vector<T> frame, point;
  if (source == PromptSource::File) {
    frame = read_table<T>(frame_file, classes, dim);
    point = read_table<T>(point_file, classes, dim);
  } else {
    Rng rng(seed);
    frame = normal_values<T>(rng, classes * dim, 1.0);
    point = normal_values<T>(rng, classes * dim, 1.0);
    normalize_rows(frame, dim);
    normalize_rows(point, dim);
  }
  if (source == PromptSource::Learnable) {
    if (!store) throw ConfigError("learnable prompts need a parameter store");
    p.frame_raw = store->add("prompt.frame", {classes, dim}, std::move(frame));
    p.point_raw = store->add("prompt.point", {classes, dim}, std::move(point));
  } else {
    p.frame_raw = Tensor<T>::from({classes, dim}, std::move(frame));
    p.point_raw = Tensor<T>::from({classes, dim}, std::move(point));
  }
  return p;
}

#define EVCRAB_INSTANTIATE(T)                                                                    \
  template Tensor<T> residual_fuse<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> contrastive_loss<T>(const Tensor<T>&, const Tensor<T>&, int, double,        \
                                         LossVariant);                                           \
  template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, double);                  \
  template struct PromptTables<T>;                                                               \
  template PromptTables<T> load_or_make_prompts<T>(PromptSource, std::size_t, std::size_t,       \
                                                   std::uint64_t, ad::ParameterStore<T>*,        \
                                                   const std::filesystem::path&,                 \
                                                   const std::filesystem::path&);

EVCRAB_INSTANTIATE(float)
EVCRAB_INSTANTIATE(double)

#undef EVCRAB_INSTANTIATE

}  // namespace evcrab
