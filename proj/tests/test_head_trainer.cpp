#include <doctest.h>

#include <cmath>
#include <numeric>

#include "evcrab/dataset.hpp"
#include "evcrab/errors.hpp"
#include "evcrab/gradcheck.hpp"
#include "evcrab/head.hpp"
#include "evcrab/model.hpp"
#include "evcrab/ops.hpp"
#include "evcrab/trainer.hpp"
#include "support.hpp"
#include "toy_model.hpp"

using namespace evcrab;
using T = ad::Tensor<double>;

namespace {

T identity_rows(std::size_t q, std::size_t d) {
  std::vector<double> v(q * d, 0.0);
  for (std::size_t i = 0; i < q; ++i) v[i * d + i] = 1.0;
  return T::from({q, d}, v);
}

T row_of(const T& table, std::size_t r) { return ad::reshape(ad::slice(table, 0, r, r + 1), {table.dim(1)}); }

}  // namespace

TEST_CASE("residual fusion") {
  test::Gen g(1);
  const auto av = g.reals(6, -1, 1);
  const T f_a = T::from({6}, av);

  const T zero = residual_fuse(f_a, T::zeros({6}));
  const T ones = residual_fuse(f_a, T::full({6}, 1.0));
  const double n = std::sqrt(std::inner_product(av.begin(), av.end(), av.begin(), 0.0));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(zero[i] == doctest::Approx(av[i] / n).epsilon(1e-10));
    CHECK(ones[i] == doctest::Approx(av[i] / n).epsilon(1e-10));
  }

  const auto ov = g.reals(6, -1, 1);
  const T fused = residual_fuse(f_a, T::from({6}, ov));
  std::vector<double> ref(6);
  double rn = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    ref[i] = av[i] + av[i] * ov[i];
    rn += ref[i] * ref[i];
  }
  for (std::size_t i = 0; i < 6; ++i) CHECK(fused[i] == doctest::Approx(ref[i] / std::sqrt(rn)).epsilon(1e-10));
  CHECK_THROWS_AS(residual_fuse(f_a, T::zeros({5})), ShapeError);
}

TEST_CASE("contrastive loss closed forms") {
  for (auto v : {LossVariant::LabelConditioned, LossVariant::PrintedMean}) {
    CHECK(contrastive_loss(T::from({3}, {1, 0, 0}), T::from({1, 3}, {0, 1, 0}), 0, 0.07, v).item() == 0.0);
  }
  const T same = T::from({4, 2}, {0.6, 0.8, 0.6, 0.8, 0.6, 0.8, 0.6, 0.8});
  CHECK(contrastive_loss(T::from({2}, {1, 0}), same, 2, 0.07, LossVariant::LabelConditioned).item() ==
        doctest::Approx(std::log(4.0)));

  const T eye = identity_rows(2, 2);
  for (int y = 0; y < 2; ++y) {
    const double loss = contrastive_loss(row_of(eye, static_cast<std::size_t>(y)), eye, y, 1.0,
                                         LossVariant::LabelConditioned).item();
    CHECK(loss == doctest::Approx(std::log1p(std::exp(-1.0))));
    CHECK(loss == doctest::Approx(0.31326).epsilon(1e-5));
  }
}

TEST_CASE("contrastive loss gradient") {
  test::Gen g(2);
  const T f = test::leaf({6}, g);
  const T table = test::leaf({4, 6}, g);
  for (auto v : {LossVariant::LabelConditioned, LossVariant::PrintedMean}) {
    const auto r = ad::finite_diff_check<double>(
        {{"f", f}, {"table", table}},
        [&] { return contrastive_loss(ad::l2_normalize(f), ad::l2_normalize(table), 1, 0.3, v); });
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("total loss") {
  CHECK(total_loss(T::scalar(1.0), T::scalar(0.5), 0.8).item() == doctest::Approx(1.4));
  CHECK(total_loss(T::scalar(1.25), T::scalar(7.0), 0.0).item() == 1.25);

  test::Gen g(3);
  const T w = test::leaf({5}, g);
  auto la = [&] { return ad::sum(ad::exp(w)); };
  auto lo = [&] { return ad::sum(ad::mul(w, w)); };
  ad::backward(total_loss(la(), lo(), 0.8));
  const std::vector<double> combined(w.grad().begin(), w.grad().end());
  for (std::size_t i = 0; i < 5; ++i) CHECK(combined[i] == doctest::Approx(std::exp(w[i]) + 0.8 * 2 * w[i]));
}

TEST_CASE("classification probabilities") {
  const std::vector<double> same(4 * 3, 0.5);
  const std::vector<double> f = {0.2, 0.3, 0.4};
  for (double p : classify(f, same, 4)) CHECK(p == doctest::Approx(0.25));

  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[static_cast<std::size_t>(i * 4 + i)] = 1.0;
  const std::vector<double> fused = {0, 0, 0, 1};
  const auto p = classify(fused, eye, 4);
  CHECK(rank_classes(p).front() == 3);
  CHECK(p[3] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 3)));
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));

  test::Gen g(4);
  const auto table = g.reals(5 * 6, -1, 1);
  const auto v = g.reals(6, -1, 1);
  auto scaled = v;
  for (auto& x : scaled) x *= 3.7;
  CHECK(rank_classes(classify(v, table, 5)).front() == rank_classes(classify(scaled, table, 5)).front());
}

TEST_CASE("retrieval") {
  test::Gen g(5);
  FeatureTable ft{20, 4, {}};
  for (auto x : g.reals(80, -1, 1)) ft.data.push_back(static_cast<float>(x));
  for (std::size_t r = 0; r < 20; ++r) {
    double n = 0;
    for (std::size_t i = 0; i < 4; ++i) n += ft.data[r * 4 + i] * ft.data[r * 4 + i];
    for (std::size_t i = 0; i < 4; ++i) ft.data[r * 4 + i] = static_cast<float>(ft.data[r * 4 + i] / std::sqrt(n));
  }
  std::vector<double> q(ft.row(7).begin(), ft.row(7).end());
  CHECK(retrieve(q, ft, 0).empty());
  const auto hits = retrieve(q, ft, 100);
  REQUIRE(hits.size() == 20);
  CHECK(hits[0].index == 7);
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-6));

  // exhaustive sort oracle
  std::vector<std::pair<double, std::size_t>> ref;
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += q[i] * ft.data[r * 4 + i];
    ref.push_back({-s, r});
  }
  std::sort(ref.begin(), ref.end());
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(hits[i].index == ref[i].second);
    if (i > 0) CHECK(hits[i].score <= hits[i - 1].score);
  }
}

TEST_CASE("fixed-random prompts") {
  const auto a = load_or_make_prompts<double>(PromptSource::FixedRandom, 64, 64, 7);
  const auto b = load_or_make_prompts<double>(PromptSource::FixedRandom, 64, 64, 7);
  const T fa = a.frame(), fb = b.frame();
  CHECK(std::equal(fa.data().begin(), fa.data().end(), fb.data().begin()));
  double worst = 0;
  for (const T& table : {a.frame(), a.point()}) {
    for (std::size_t i = 0; i < 64; ++i) {
      double n = 0;
      for (std::size_t d = 0; d < 64; ++d) n += table[i * 64 + d] * table[i * 64 + d];
      CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
      for (std::size_t j = i + 1; j < 64; ++j) {
        double dot = 0;
        for (std::size_t d = 0; d < 64; ++d) dot += table[i * 64 + d] * table[j * 64 + d];
        worst = std::max(worst, std::abs(dot));
      }
    }
  }
  CHECK(worst < 0.75);
}

TEST_CASE("adam and the cosine schedule") {
  ad::ParameterStore<double> store;
  const T w = store.add("w", {1}, {1.0});
  TrainConfig cfg;
  AdamState<double> state;
  ad::backward(ad::sum(w));  // grad 1
  adam_step(store, state, 0.1, 0.0, cfg);
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-6));

  ad::ParameterStore<double> still;
  const T z = still.add("z", {2}, {0.5, -2.0});
  AdamState<double> s2;
  ad::backward(ad::scale(ad::sum(z), 0.0));
  adam_step(still, s2, 0.1, 0.0, cfg);
  CHECK(z[0] == 0.5);
  CHECK(z[1] == -2.0);

  CHECK(cosine_lr(0, 100, 1e-5, 1e-6) == 1e-5);
  CHECK(cosine_lr(100, 100, 1e-5, 1e-6) == 1e-6);
  CHECK(cosine_lr(50, 100, 1e-5, 1e-6) == doctest::Approx(5.5e-6).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients by name") {
  ad::ParameterStore<double> store;
  const T w = store.add("point.bad", {1}, {0.0});
  ad::backward(ad::sum(ad::log(w)));  // d/dw log w at 0 is infinite
  AdamState<double> state;
  try {
    adam_step(store, state, 0.1, 0.0, TrainConfig{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("point.bad") != std::string::npos);
  }
}

TEST_CASE("model: zero loss weight cuts the point branch off") {
  const auto data = synthetic_dataset(test::toy_synth(3, 2));
  for (double lambda : {0.0, 0.8}) {
    auto cfg = test::toy_model_config();
    cfg.head.lambda = lambda;
    Model<double> model(cfg, 3, 7);
    const auto sample = model.prepare(data[1].stream, data[1].label);
    const auto fwd = model.forward(sample);
    ad::backward(model.loss(fwd, sample.label).total);
    double point_mass = 0;
    for (const auto& [name, g] : model.store.gradients()) {
      if (!model.point_only(name)) continue;
      for (double v : g) point_mass += std::abs(v);
    }
    if (lambda == 0.0) {
      CHECK(point_mass == 0.0);
    } else {
      CHECK(point_mass > 0.0);
    }
  }
}

TEST_CASE("trainer: zero learning rate changes nothing") {
  const auto data = synthetic_dataset(test::toy_synth(2, 4));
  Model<double> model(test::toy_model_config(SamplerKind::Sliding), 2, 7);
  std::vector<PreparedSample> train_set, test_set;
  for (const auto& s : data) {
    (s.split == Split::Train ? train_set : test_set).push_back(model.prepare(s.stream, s.label));
  }
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr_init = cfg.lr_min = 0.0;
  cfg.batch_size = 2;
  const auto r = train(model, train_set, test_set, cfg);
  CHECK(r.final_eval.top1 == r.initial.top1);
  CHECK(r.final_eval.top5 == r.initial.top5);
  CHECK(r.final_eval.per_class == r.initial.per_class);
  const auto f0 = fused_features(model, test_set);
  CHECK(f0.rows == test_set.size());
}

TEST_CASE("trainer is deterministic") {
  const auto data = synthetic_dataset(test::toy_synth(2, 4));
  auto run = [&] {
    Model<double> model(test::toy_model_config(), 2, 3);
    std::vector<PreparedSample> train_set, test_set;
    for (const auto& s : data) {
      (s.split == Split::Train ? train_set : test_set).push_back(model.prepare(s.stream, s.label));
    }
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr_init = 1e-3;
    cfg.batch_size = 3;
    train(model, train_set, test_set, cfg);
    return fused_features(model, test_set);
  };
  CHECK(run() == run());
}
