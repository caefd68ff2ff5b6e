#include "evcrab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "evcrab/errors.hpp"
#include "evcrab/init.hpp"
#include "evcrab/ops.hpp"

namespace evcrab {

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.lr_min <= cfg.lr_init)) throw ConfigError("lr_min must not exceed lr_init");
  if (cfg.lr_min < 0 || cfg.weight_decay < 0) throw ConfigError("lr and weight decay must be >= 0");
}

template <class T>
void adam_step(ad::ParameterStore<T>& store, AdamState<T>& state, double lr, double weight_decay,
               const TrainConfig& cfg) {
  for (const auto& p : store.params()) {
    if (!p.tensor.requires_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter \"" + p.name + "\"");
      }
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& p : store.params()) {
    if (!p.tensor.requires_grad()) continue;
    auto w = p.tensor.mutable_data();
    auto g = p.tensor.grad();
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      double wi = static_cast<double>(w[i]);
      wi -= lr * weight_decay * wi;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      wi -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
      w[i] = static_cast<T>(wi);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr_init, double lr_min) {
  if (total <= 0) return lr_init;
  if (step < 0 || step > total) throw ConfigError("cosine_lr: step outside [0, total]");
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                         static_cast<double>(total)));
  return lr_init * w + lr_min * (1.0 - w);
}

std::string metrics_json(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["lr"] = m.lr;
  j["loss"] = m.loss;
  j["loss_a"] = m.loss_a;
  j["loss_o"] = m.loss_o;
  j["top1"] = m.top1;
  j["top5"] = m.top5;
  return j.dump();
}

namespace {

template <class T>
std::vector<double> as_double(const ad::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

template <class T>
EvalMetrics evaluate(const Model<T>& model, const std::vector<PreparedSample>& samples) {
  ad::NoGradGuard guard;
  const int q = model.classes();
  EvalMetrics out;
  out.count = samples.size();
  std::vector<double> hits(q, 0.0), totals(q, 0.0);
  const auto table = as_double(model.prompts.frame());
  double top1 = 0, top5 = 0, retained = 0;
  for (const auto& s : samples) {
    auto fwd = model.forward(s);
    const auto fused = as_double(fwd.fused);
    const auto probs = classify(fused, table, static_cast<std::size_t>(q));
    const auto ranked = rank_classes(probs);
    const auto pos = std::find(ranked.begin(), ranked.end(), s.label) - ranked.begin();
    top1 += pos < 1;
    top5 += pos < 5;
    hits[s.label] += pos < 1;
    totals[s.label] += 1;
    retained += fwd.trace.retained_fraction;
  }
  if (!samples.empty()) {
    const double n = static_cast<double>(samples.size());
    out.top1 = top1 / n;
    out.top5 = top5 / n;
    out.retained_mean = retained / n;
  }
  for (int c = 0; c < q; ++c) out.per_class.push_back(totals[c] > 0 ? hits[c] / totals[c] : 0.0);
  return out;
}

template <class T>
FeatureTable fused_features(const Model<T>& model, const std::vector<PreparedSample>& samples) {
  ad::NoGradGuard guard;
  FeatureTable t;
  t.rows = static_cast<std::uint32_t>(samples.size());
  t.dim = static_cast<std::uint32_t>(model.config().point.dim);
  for (const auto& s : samples) {
    auto fwd = model.forward(s);
    for (T v : fwd.fused.data()) t.data.push_back(static_cast<float>(v));
  }
  return t;
}

template <class T>
TrainResult train(Model<T>& model, const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  validate(cfg);
  if (train_set.empty()) throw ConfigError("training split is empty");
  TrainResult result;
  result.initial = evaluate(model, test_set);

  const std::size_t n = train_set.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = static_cast<std::int64_t>(batches) * cfg.epochs;
  Rng rng(cfg.seed + 0x5bd1e995ull);
  AdamState<T> adam;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_loss = 0, sum_a = 0, sum_o = 0;
    double lr = cfg.lr_init;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      const T inv = T(1) / static_cast<T>(hi - lo);
      model.store.zero_grad();
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& s = train_set[order[i]];
        auto fwd = model.forward(s);
        auto parts = model.loss(fwd, s.label);
        const double l = static_cast<double>(parts.total.item());
        if (!std::isfinite(l)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
        }
        sum_loss += l;
        sum_a += static_cast<double>(parts.loss_a.item());
        sum_o += static_cast<double>(parts.loss_o.item());
        ad::backward(ad::scale(parts.total, inv));
      }
      lr = cosine_lr(step, std::max<std::int64_t>(1, total_steps - 1), cfg.lr_init, cfg.lr_min);
      adam_step(model.store, adam, lr, cfg.weight_decay, cfg);
      ++step;
    }
    const auto eval = evaluate(model, test_set);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.loss = sum_loss / static_cast<double>(n);
    m.loss_a = sum_a / static_cast<double>(n);
    m.loss_o = sum_o / static_cast<double>(n);
    m.top1 = eval.top1;
    m.top5 = eval.top5;
    result.history.push_back(m);
    result.final_eval = eval;
    if (on_epoch) on_epoch(m);
  }
  return result;
}

#define EVCRAB_INSTANTIATE(T)                                                                    \
  template void adam_step<T>(ad::ParameterStore<T>&, AdamState<T>&, double, double,              \
                             const TrainConfig&);                                                \
  template EvalMetrics evaluate<T>(const Model<T>&, const std::vector<PreparedSample>&);         \
  template FeatureTable fused_features<T>(const Model<T>&, const std::vector<PreparedSample>&);   \
  template TrainResult train<T>(Model<T>&, const std::vector<PreparedSample>&,                   \
                                const std::vector<PreparedSample>&, const TrainConfig&,          \
                                const EpochCallback&);

EVCRAB_INSTANTIATE(float)
EVCRAB_INSTANTIATE(double)

#undef EVCRAB_INSTANTIATE

}  // namespace evcrab
