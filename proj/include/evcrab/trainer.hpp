#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "evcrab/model.hpp"

namespace evcrab {

struct TrainConfig {
  double lr_init = 1e-5;
  double lr_min = 1e-6;
  double weight_decay = 2e-4;
  int epochs = 30;
  int batch_size = 16;
  std::uint64_t seed = 7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void validate(const TrainConfig& cfg);

template <class T>
struct AdamState {
  std::map<std::string, std::vector<double>> m, v;
  std::int64_t step = 0;
};

/// Decoupled weight decay then a bias-corrected Adam update, for every
/// parameter that requires gradients. Throws NumericError naming the first
/// parameter with a non-finite gradient.
template <class T>
void adam_step(ad::ParameterStore<T>& store, AdamState<T>& state, double lr, double weight_decay,
               const TrainConfig& cfg);

/// lr_min + (lr_init - lr_min) (1 + cos(pi step / total)) / 2, evaluated as a
/// convex combination so both endpoints are exact.
double cosine_lr(std::int64_t step, std::int64_t total, double lr_init, double lr_min);

struct EvalMetrics {
  double top1 = 0;
  double top5 = 0;
  std::vector<double> per_class;
  double retained_mean = 1.0;
  std::size_t count = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double loss_a = 0;
  double loss_o = 0;
  double top1 = 0;
  double top5 = 0;
};

std::string metrics_json(const EpochMetrics& m);

template <class T>
EvalMetrics evaluate(const Model<T>& model, const std::vector<PreparedSample>& samples);

/// Fused features and label per sample (no graph).
template <class T>
FeatureTable fused_features(const Model<T>& model, const std::vector<PreparedSample>& samples);

struct TrainResult {
  std::vector<EpochMetrics> history;
  EvalMetrics initial;
  EvalMetrics final_eval;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch training; each sample gets its own graph and the batch loss is
/// the mean. Test metrics are computed after every epoch.
template <class T>
TrainResult train(Model<T>& model, const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace evcrab
